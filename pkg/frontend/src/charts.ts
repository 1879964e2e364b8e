// Pure chart geometry: maps history and forecast series onto SVG coordinates.
// History and forecast share one time axis; forecast points render as markers
// continuing the line, visually distinct from the measured series.

import type { ChartPoint } from "./state.js";

export interface ChartLayout {
  width: number;
  height: number;
  padding: number;
}

export const DEFAULT_LAYOUT: ChartLayout = { width: 420, height: 120, padding: 8 };

export interface XY {
  x: number;
  y: number;
}

export interface ChartGeometry {
  historyPath: XY[];
  forecastMarkers: XY[];
  yMin: number;
  yMax: number;
  timeStart: Date;
  timeEnd: Date;
}

function timeDomain(points: ChartPoint[]): [number, number] {
  const times = points.map((p) => p.time.getTime());
  return [Math.min(...times), Math.max(...times)];
}

function valueDomain(points: ChartPoint[]): [number, number] {
  const values = points.map((p) => p.value);
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  return [lo, hi];
}

export function computeGeometry(
  history: ChartPoint[],
  forecast: ChartPoint[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): ChartGeometry | null {
  const all = [...history, ...forecast];
  if (all.length === 0) return null;
  const [t0, t1] = timeDomain(all);
  const [v0, v1] = valueDomain(all);
  const innerW = layout.width - 2 * layout.padding;
  const innerH = layout.height - 2 * layout.padding;
  const spanT = Math.max(1, t1 - t0);
  const x = (t: Date) => layout.padding + ((t.getTime() - t0) / spanT) * innerW;
  const y = (v: number) => layout.padding + (1 - (v - v0) / (v1 - v0)) * innerH;
  return {
    historyPath: history.map((p) => ({ x: x(p.time), y: y(p.value) })),
    forecastMarkers: forecast.map((p) => ({ x: x(p.time), y: y(p.value) })),
    yMin: v0,
    yMax: v1,
    timeStart: new Date(t0),
    timeEnd: new Date(t1),
  };
}

export function polylinePoints(path: XY[]): string {
  return path.map((p) => `${p.x.toFixed(2)},${p.y.toFixed(2)}`).join(" ");
}

export function isStrictlyAscending(points: ChartPoint[]): boolean {
  for (let i = 1; i < points.length; i += 1) {
    const prev = points[i - 1];
    const next = points[i];
    if (!prev || !next || next.time.getTime() <= prev.time.getTime()) return false;
  }
  return true;
}

export function spanHours(points: ChartPoint[]): number {
  if (points.length < 2) return 0;
  const first = points[0];
  const last = points[points.length - 1];
  if (!first || !last) return 0;
  return (last.time.getTime() - first.time.getTime()) / 3_600_000;
}
