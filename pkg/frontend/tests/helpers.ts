// Canned API responses shaped exactly like the service's JSON surface.

import type {
  CurrentResponse,
  DashboardData,
  ForecastResponse,
  HistoryResponse,
  ThresholdsResponse,
} from "../src/api.js";

export const BASE_TS = Date.UTC(2021, 2, 2, 23, 0, 0); // 2021-03-02T23:00:00Z

export function iso(msOffsetHours: number): string {
  return new Date(BASE_TS + msOffsetHours * 3_600_000).toISOString().replace(".000Z", "Z");
}

export function historyOf(name: string, values: number[]): HistoryResponse["series"] {
  return {
    [name]: values.map((value, i) => ({ ts: iso(i - values.length), value })),
  };
}

export function cannedData(overrides: Partial<DashboardData> = {}): DashboardData {
  const history24 = Array.from({ length: 24 }, (_, i) => 20 + Math.sin(i / 3) * 5);
  const current: CurrentResponse = {
    installation_id: 3,
    values: {
      pm25: { ts: iso(0), value: 21.7 },
      humidity: { ts: iso(0), value: 74.0 },
    },
  };
  const history: HistoryResponse = {
    installation_id: 3,
    series: {
      ...historyOf("pm25", history24),
      ...historyOf("humidity", history24.map((v) => v + 40)),
    },
  };
  const forecast: ForecastResponse = {
    installation_id: 3,
    forecasts: {
      pm25: { base: iso(0), h1: 22.1, h2: 23.4, h3: 21.9, model_id: "abc123def456" },
    },
  };
  const thresholds: ThresholdsResponse = { pm1: 15, pm25: 15, pm10: 45, aqi: 75 };
  return { current, history, forecast, thresholds, ...overrides };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
