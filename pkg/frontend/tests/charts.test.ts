import { describe, expect, it } from "vitest";

import {
  computeGeometry,
  DEFAULT_LAYOUT,
  isStrictlyAscending,
  polylinePoints,
  spanHours,
} from "../src/charts.js";
import { buildViewState, forecastPoints, historyPoints } from "../src/state.js";
import { cannedData, iso } from "./helpers.js";

function points24() {
  return historyPoints(
    Array.from({ length: 24 }, (_, i) => ({ ts: iso(i - 24), value: 10 + i })),
  );
}

describe("chart geometry", () => {
  it("renders 24 history points and 3 forecast markers", () => {
    const history = points24();
    const forecast = forecastPoints({ base: iso(0), h1: 30, h2: 31, h3: 32, model_id: "m" });
    const geometry = computeGeometry(history, forecast);
    expect(geometry?.historyPath).toHaveLength(24);
    expect(geometry?.forecastMarkers).toHaveLength(3);
  });

  it("keeps every coordinate inside the layout box", () => {
    const geometry = computeGeometry(points24(), []);
    for (const p of geometry?.historyPath ?? []) {
      expect(p.x).toBeGreaterThanOrEqual(DEFAULT_LAYOUT.padding);
      expect(p.x).toBeLessThanOrEqual(DEFAULT_LAYOUT.width - DEFAULT_LAYOUT.padding);
      expect(p.y).toBeGreaterThanOrEqual(DEFAULT_LAYOUT.padding);
      expect(p.y).toBeLessThanOrEqual(DEFAULT_LAYOUT.height - DEFAULT_LAYOUT.padding);
    }
  });

  it("shares one time axis: forecast markers sit right of the history", () => {
    const history = points24();
    const forecast = forecastPoints({ base: iso(0), h1: 30, h2: 31, h3: 32, model_id: "m" });
    const geometry = computeGeometry(history, forecast);
    const lastHistoryX = geometry!.historyPath[23]!.x;
    for (const marker of geometry!.forecastMarkers) {
      expect(marker.x).toBeGreaterThan(lastHistoryX);
    }
  });

  it("x positions increase monotonically along the history", () => {
    const geometry = computeGeometry(points24(), []);
    const xs = geometry!.historyPath.map((p) => p.x);
    for (let i = 1; i < xs.length; i += 1) {
      expect(xs[i]!).toBeGreaterThan(xs[i - 1]!);
    }
  });

  it("returns null when there is nothing to draw", () => {
    expect(computeGeometry([], [])).toBeNull();
  });

  it("polyline points serialize to fixed precision pairs", () => {
    const text = polylinePoints([{ x: 1.23456, y: 7.89123 }]);
    expect(text).toBe("1.23,7.89");
  });
});

describe("history axis invariants", () => {
  it("view-state history is strictly ascending and spans at most 24 hours", () => {
    const state = buildViewState({ lat: 52, lon: 21 }, cannedData(), new Date());
    for (const view of state.parameters) {
      if (view.history.length === 0) continue;
      expect(isStrictlyAscending(view.history)).toBe(true);
      expect(spanHours(view.history)).toBeLessThanOrEqual(24);
    }
  });

  it("spanHours of a 24-point hourly series is 23 intervals", () => {
    expect(spanHours(points24())).toBe(23);
  });
});
