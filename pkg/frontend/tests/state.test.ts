import { describe, expect, it } from "vitest";

import {
  bannerItems,
  buildViewState,
  exceedsSafeLevel,
  forecastPoints,
  validateCoordinates,
} from "../src/state.js";
import { cannedData, iso } from "./helpers.js";

describe("validateCoordinates", () => {
  it("accepts valid coordinates", () => {
    const check = validateCoordinates("52.23", "21.01");
    expect(check).toEqual({ ok: true, lat: 52.23, lon: 21.01 });
  });

  it("rejects out-of-range latitude before any request is made", () => {
    const check = validateCoordinates("91", "0");
    expect(check.ok).toBe(false);
  });

  it("rejects out-of-range longitude", () => {
    expect(validateCoordinates("0", "181").ok).toBe(false);
    expect(validateCoordinates("0", "-181").ok).toBe(false);
  });

  it("rejects non-numeric input", () => {
    expect(validateCoordinates("fifty", "21").ok).toBe(false);
    expect(validateCoordinates("", "21").ok).toBe(false);
  });

  it("accepts the poles and the antimeridian", () => {
    expect(validateCoordinates("90", "180").ok).toBe(true);
    expect(validateCoordinates("-90", "-180").ok).toBe(true);
  });
});

describe("exceedsSafeLevel", () => {
  it("flags values strictly above the limit", () => {
    expect(exceedsSafeLevel(15.01, 15)).toBe(true);
  });

  it("does not flag a value exactly at the limit (matches the alert rule)", () => {
    expect(exceedsSafeLevel(15, 15)).toBe(false);
  });

  it("never flags when no limit is configured", () => {
    expect(exceedsSafeLevel(9999, null)).toBe(false);
  });
});

describe("buildViewState", () => {
  const coords = { lat: 52.23, lon: 21.01 };

  it("derives one panel per parameter with status and safe range", () => {
    const state = buildViewState(coords, cannedData(), new Date());
    const pm25 = state.parameters.find((p) => p.parameter === "pm25");
    expect(pm25).toBeDefined();
    expect(pm25?.status).toBe("EXCEEDED"); // 21.7 > 15
    expect(pm25?.safeLimit).toBe(15);
    expect(pm25?.history).toHaveLength(24);
    expect(pm25?.forecast).toHaveLength(3);
    const humidity = state.parameters.find((p) => p.parameter === "humidity");
    expect(humidity?.status).toBe("OK"); // no threshold configured
    expect(humidity?.safeLimit).toBeNull();
  });

  it("status is OK when the current value equals the threshold exactly", () => {
    const data = cannedData();
    data.current.values.pm25 = { ts: iso(0), value: 15 };
    const state = buildViewState(coords, data, new Date());
    expect(state.parameters.find((p) => p.parameter === "pm25")?.status).toBe("OK");
    expect(bannerItems(state)).toHaveLength(0);
  });

  it("marks no_data only when both current and history are empty", () => {
    const data = cannedData({
      current: { installation_id: 3, values: {}, no_data: true },
      history: { installation_id: 3, series: {}, no_data: true },
      forecast: { installation_id: 3, forecasts: {}, no_data: true },
    });
    const state = buildViewState(coords, data, new Date());
    expect(state.noData).toBe(true);
    expect(state.parameters).toHaveLength(0);
  });

  it("collects banner items only for exceeded parameters", () => {
    const state = buildViewState(coords, cannedData(), new Date());
    const items = bannerItems(state);
    expect(items.map((i) => i.parameter)).toEqual(["pm25"]);
    expect(items[0]?.value).toBeCloseTo(21.7);
    expect(items[0]?.safeLimit).toBe(15);
  });
});

describe("forecastPoints", () => {
  it("places three points on the hour after base", () => {
    const points = forecastPoints({ base: iso(0), h1: 1, h2: 2, h3: 3, model_id: "m" });
    expect(points).toHaveLength(3);
    const hours = points.map((p) => p.time.getTime());
    expect(hours[1]! - hours[0]!).toBe(3_600_000);
    expect(hours[2]! - hours[1]!).toBe(3_600_000);
    expect(points.map((p) => p.value)).toEqual([1, 2, 3]);
  });
});
