// Pure view-state derivation: coordinate validation, safe-level comparison
// and assembly of the per-parameter panels from the four API responses.

import type { DashboardData, ForecastDto, SeriesPointDto } from "./api.js";

export const PARAMETER_LABELS: Record<string, string> = {
  pm1: "PM1",
  pm25: "PM2.5",
  pm10: "PM10",
  temperature: "Temperature",
  pressure: "Pressure",
  humidity: "Humidity",
  aqi: "CAQI",
};

export const PARAMETER_UNITS: Record<string, string> = {
  pm1: "µg/m³",
  pm25: "µg/m³",
  pm10: "µg/m³",
  temperature: "°C",
  pressure: "hPa",
  humidity: "%RH",
  aqi: "pts",
};

export interface ChartPoint {
  time: Date;
  value: number;
}

export type ParameterStatus = "OK" | "EXCEEDED";

export interface ParameterView {
  parameter: string;
  label: string;
  unit: string;
  current: number | null;
  currentTime: Date | null;
  safeLimit: number | null;
  status: ParameterStatus;
  history: ChartPoint[];
  forecast: ChartPoint[];
}

export interface ViewState {
  coordinates: { lat: number; lon: number };
  installationId: number | null;
  parameters: ParameterView[];
  noData: boolean;
  stale: boolean;
  lastRefresh: Date | null;
  error: string | null;
}

export type CoordinateCheck =
  | { ok: true; lat: number; lon: number }
  | { ok: false; message: string };

// Mirrors the server-side coordinate bounds so bad input never leaves the page.
export function validateCoordinates(latText: string, lonText: string): CoordinateCheck {
  const lat = Number(latText.trim());
  const lon = Number(lonText.trim());
  if (latText.trim() === "" || Number.isNaN(lat)) {
    return { ok: false, message: "latitude must be a number" };
  }
  if (lonText.trim() === "" || Number.isNaN(lon)) {
    return { ok: false, message: "longitude must be a number" };
  }
  if (lat < -90 || lat > 90) {
    return { ok: false, message: "latitude must be within [-90, 90]" };
  }
  if (lon < -180 || lon > 180) {
    return { ok: false, message: "longitude must be within [-180, 180]" };
  }
  return { ok: true, lat, lon };
}

// Same strict inequality the alerting pipeline applies: at the limit is OK.
export function exceedsSafeLevel(value: number, safeLimit: number | null): boolean {
  return safeLimit !== null && value > safeLimit;
}

export function historyPoints(points: SeriesPointDto[]): ChartPoint[] {
  return points.map((p) => ({ time: new Date(p.ts), value: p.value }));
}

export function forecastPoints(dto: ForecastDto): ChartPoint[] {
  const base = new Date(dto.base).getTime();
  const hour = 3_600_000;
  return [
    { time: new Date(base + hour), value: dto.h1 },
    { time: new Date(base + 2 * hour), value: dto.h2 },
    { time: new Date(base + 3 * hour), value: dto.h3 },
  ];
}

export function buildViewState(
  coordinates: { lat: number; lon: number },
  data: DashboardData,
  refreshedAt: Date,
): ViewState {
  const names = new Set<string>([
    ...Object.keys(data.current.values ?? {}),
    ...Object.keys(data.history.series ?? {}),
    ...Object.keys(data.forecast.forecasts ?? {}),
  ]);
  const parameters: ParameterView[] = [...names].sort().map((name) => {
    const currentDto = data.current.values?.[name];
    const safeLimit = data.thresholds[name] ?? null;
    const current = currentDto ? currentDto.value : null;
    const forecastDto = data.forecast.forecasts?.[name];
    return {
      parameter: name,
      label: PARAMETER_LABELS[name] ?? name,
      unit: PARAMETER_UNITS[name] ?? "",
      current,
      currentTime: currentDto ? new Date(currentDto.ts) : null,
      safeLimit,
      status: current !== null && exceedsSafeLevel(current, safeLimit) ? "EXCEEDED" : "OK",
      history: historyPoints(data.history.series?.[name] ?? []),
      forecast: forecastDto ? forecastPoints(forecastDto) : [],
    };
  });
  const noData = Boolean(data.current.no_data && data.history.no_data);
  return {
    coordinates,
    installationId: data.current.installation_id ?? null,
    parameters,
    noData,
    stale: false,
    lastRefresh: refreshedAt,
    error: null,
  };
}

export interface BannerItem {
  parameter: string;
  label: string;
  value: number;
  safeLimit: number;
  unit: string;
}

export function bannerItems(state: ViewState): BannerItem[] {
  return state.parameters
    .filter((p) => p.status === "EXCEEDED" && p.current !== null && p.safeLimit !== null)
    .map((p) => ({
      parameter: p.parameter,
      label: p.label,
      value: p.current as number,
      safeLimit: p.safeLimit as number,
      unit: p.unit,
    }));
}
