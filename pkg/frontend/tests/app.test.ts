// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { DashboardApp, renderView } from "../src/app.js";
import { buildViewState } from "../src/state.js";
import { cannedData, iso, jsonResponse } from "./helpers.js";

function mountHosts() {
  document.body.innerHTML = '<div id="form"></div><div id="results"></div>';
  return {
    form: document.getElementById("form") as HTMLElement,
    results: document.getElementById("results") as HTMLElement,
  };
}

function stubFetch(responder: (url: string) => Response) {
  const spy = vi.fn((input: RequestInfo | URL) =>
    Promise.resolve(responder(String(input))),
  );
  vi.stubGlobal("fetch", spy);
  return spy;
}

function respondWith(data = cannedData()) {
  return (url: string) => {
    if (url.includes("/api/current")) return jsonResponse(data.current);
    if (url.includes("/api/history")) return jsonResponse(data.history);
    if (url.includes("/api/forecast")) return jsonResponse(data.forecast);
    if (url.includes("/api/thresholds")) return jsonResponse(data.thresholds);
    return jsonResponse({ error: "not found" }, 404);
  };
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("renderView", () => {
  it("renders a panel per parameter with chart and safe range", () => {
    const { results } = mountHosts();
    const state = buildViewState({ lat: 52.23, lon: 21.01 }, cannedData(), new Date());
    renderView(results, state);
    const panels = results.querySelectorAll(".panel");
    expect(panels.length).toBe(2); // pm25 + humidity
    const pm25 = results.querySelector('[data-parameter="pm25"]')!;
    expect(pm25.querySelector(".safe-range")?.textContent).toContain("15");
    expect(pm25.querySelectorAll("polyline").length).toBe(1);
    expect(pm25.querySelectorAll("circle").length).toBe(3); // forecast markers
    expect(pm25.querySelector(".chart-note")?.textContent).toContain("24 hourly points");
  });

  it("shows the alert banner only for strictly exceeded parameters", () => {
    const { results } = mountHosts();
    const state = buildViewState({ lat: 52, lon: 21 }, cannedData(), new Date());
    renderView(results, state);
    const banner = results.querySelector(".alert-banner");
    expect(banner).not.toBeNull();
    expect(banner?.textContent).toContain("PM2.5");
    expect(banner?.textContent).toContain("21.7");
    expect(banner?.textContent).toContain("15");
  });

  it("hides the banner when the value equals the threshold", () => {
    const { results } = mountHosts();
    const data = cannedData();
    data.current.values.pm25 = { ts: iso(0), value: 15 };
    const state = buildViewState({ lat: 52, lon: 21 }, data, new Date());
    renderView(results, state);
    expect(results.querySelector(".alert-banner")).toBeNull();
  });

  it("renders the empty-state panel on no_data", () => {
    const { results } = mountHosts();
    const data = cannedData({
      current: { installation_id: 3, values: {}, no_data: true },
      history: { installation_id: 3, series: {}, no_data: true },
      forecast: { installation_id: 3, forecasts: {}, no_data: true },
    });
    const state = buildViewState({ lat: 52, lon: 21 }, data, new Date());
    renderView(results, state);
    expect(results.querySelector(".no-data-panel")).not.toBeNull();
    expect(results.querySelector(".panel")).toBeNull();
  });
});

describe("DashboardApp", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("invalid coordinates produce an inline error and zero requests", async () => {
    const { form, results } = mountHosts();
    const spy = stubFetch(respondWith());
    const app = new DashboardApp(form, results);
    app.mount();
    (form.querySelector('input[name="lat"]') as HTMLInputElement).value = "91";
    (form.querySelector('input[name="lon"]') as HTMLInputElement).value = "0";
    form.querySelector("form")!.dispatchEvent(new Event("submit"));
    await vi.runOnlyPendingTimersAsync();
    expect(form.querySelector(".validation-error")?.textContent).toContain("latitude");
    expect(spy).not.toHaveBeenCalled();
    app.stop();
  });

  it("valid submit fetches all four endpoints and renders the view", async () => {
    const { form, results } = mountHosts();
    const spy = stubFetch(respondWith());
    const app = new DashboardApp(form, results);
    await app.submitLocation(52.23, 21.01);
    expect(spy).toHaveBeenCalledTimes(4);
    expect(results.querySelectorAll(".panel").length).toBe(2);
    expect(app.currentState()?.installationId).toBe(3);
    app.stop();
  });

  it("refresh loop refetches on the timer", async () => {
    const { form, results } = mountHosts();
    const spy = stubFetch(respondWith());
    const app = new DashboardApp(form, results, { refreshMs: 1000 });
    await app.submitLocation(52.23, 21.01);
    expect(spy).toHaveBeenCalledTimes(4);
    await vi.advanceTimersByTimeAsync(2100);
    expect(spy).toHaveBeenCalledTimes(12); // two more refresh rounds
    app.stop();
  });

  it("a failed refresh keeps the last view and flags it stale", async () => {
    const { form, results } = mountHosts();
    let fail = false;
    stubFetch((url) => {
      if (fail) throw new Error("connection refused");
      return respondWith()(url);
    });
    const app = new DashboardApp(form, results, { refreshMs: 1000 });
    await app.submitLocation(52.23, 21.01);
    expect(results.querySelector(".stale-indicator")).toBeNull();
    fail = true;
    await vi.advanceTimersByTimeAsync(1100);
    expect(app.currentState()?.stale).toBe(true);
    expect(results.querySelector(".stale-indicator")).not.toBeNull();
    expect(results.querySelectorAll(".panel").length).toBe(2); // last good view kept
    fail = false;
    await vi.advanceTimersByTimeAsync(1100);
    expect(results.querySelector(".stale-indicator")).toBeNull();
    app.stop();
  });

  it("API errors render an inline message", async () => {
    const { form, results } = mountHosts();
    stubFetch(() => jsonResponse({ error: "no station in range" }, 503));
    const app = new DashboardApp(form, results);
    await app.submitLocation(52.23, 21.01);
    expect(results.querySelector(".error-message")?.textContent).toContain("503");
    app.stop();
  });
});
