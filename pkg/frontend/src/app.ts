// DOM wiring: location form, per-parameter panels with safe ranges, SVG
// charts of the last 24 hours plus the 3-hour forecast, alert banner and a
// periodic refresh loop with stale-data indication.

import { ApiClient, ApiError } from "./api.js";
import { computeGeometry, DEFAULT_LAYOUT, polylinePoints } from "./charts.js";
import {
  bannerItems,
  buildViewState,
  validateCoordinates,
  type ParameterView,
  type ViewState,
} from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";
export const DEFAULT_REFRESH_MS = 60_000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function formatValue(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(2);
}

function renderChart(view: ParameterView): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${DEFAULT_LAYOUT.width} ${DEFAULT_LAYOUT.height}`);
  svg.setAttribute("class", "chart");
  const geometry = computeGeometry(view.history, view.forecast);
  if (!geometry) return svg;
  if (geometry.historyPath.length > 1) {
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute("points", polylinePoints(geometry.historyPath));
    line.setAttribute("class", "history-line");
    line.setAttribute("fill", "none");
    svg.appendChild(line);
  }
  for (const marker of geometry.forecastMarkers) {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", marker.x.toFixed(2));
    dot.setAttribute("cy", marker.y.toFixed(2));
    dot.setAttribute("r", "3");
    dot.setAttribute("class", "forecast-dot");
    svg.appendChild(dot);
  }
  return svg;
}

function renderPanel(view: ParameterView): HTMLElement {
  const panel = el("section", `panel status-${view.status.toLowerCase()}`);
  panel.dataset.parameter = view.parameter;
  const header = el("header");
  header.appendChild(el("h3", undefined, view.label));
  header.appendChild(
    el(
      "span",
      "current-value",
      view.current === null ? "no reading" : `${formatValue(view.current)} ${view.unit}`,
    ),
  );
  panel.appendChild(header);
  const range = view.safeLimit === null
    ? "no safe range configured"
    : `safe range: 0 – ${formatValue(view.safeLimit)} ${view.unit}`;
  panel.appendChild(el("p", "safe-range", range));
  panel.appendChild(el("p", "status-label", view.status));
  panel.appendChild(renderChart(view));
  const note = `${view.history.length} hourly points, ${view.forecast.length} forecast points`;
  panel.appendChild(el("p", "chart-note", note));
  return panel;
}

export function renderView(root: HTMLElement, state: ViewState): void {
  root.replaceChildren();

  const status = el("div", "refresh-status");
  if (state.lastRefresh) {
    status.textContent = `last refresh ${state.lastRefresh.toISOString()}`;
  }
  if (state.stale) {
    status.appendChild(el("span", "stale-indicator", " (stale — refresh failed)"));
  }
  root.appendChild(status);

  if (state.error) {
    root.appendChild(el("div", "error-message", state.error));
    return;
  }

  const exceeded = bannerItems(state);
  if (exceeded.length > 0) {
    const banner = el("div", "alert-banner");
    for (const item of exceeded) {
      banner.appendChild(
        el(
          "p",
          undefined,
          `${item.label} at ${formatValue(item.value)} ${item.unit} exceeds the safe level of ` +
            `${formatValue(item.safeLimit)} ${item.unit}`,
        ),
      );
    }
    root.appendChild(banner);
  }

  if (state.noData) {
    root.appendChild(
      el("div", "no-data-panel", "No data yet for this location — try again after the next poll."),
    );
    return;
  }

  if (state.installationId !== null) {
    root.appendChild(
      el(
        "p",
        "installation-label",
        `installation ${state.installationId} near ` +
          `(${state.coordinates.lat.toFixed(4)}, ${state.coordinates.lon.toFixed(4)})`,
      ),
    );
  }

  const grid = el("div", "panel-grid");
  for (const view of state.parameters) {
    grid.appendChild(renderPanel(view));
  }
  root.appendChild(grid);
}

export interface AppOptions {
  refreshMs?: number;
  apiBase?: string;
}

export class DashboardApp {
  private client: ApiClient;
  private state: ViewState | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly resultsHost: HTMLElement,
    options: AppOptions = {},
  ) {
    this.client = new ApiClient(options.apiBase ?? "");
    this.refreshMs = options.refreshMs ?? DEFAULT_REFRESH_MS;
  }

  private refreshMs: number;
  private coordinates: { lat: number; lon: number } | null = null;

  mount(): void {
    const form = el("form", "location-form");
    const lat = el("input");
    lat.name = "lat";
    lat.placeholder = "latitude";
    const lon = el("input");
    lon.name = "lon";
    lon.placeholder = "longitude";
    const submit = el("button", undefined, "Show air quality");
    submit.type = "submit";
    const validation = el("p", "validation-error");
    form.append(lat, lon, submit, validation);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const check = validateCoordinates(lat.value, lon.value);
      if (!check.ok) {
        validation.textContent = check.message;
        return;
      }
      validation.textContent = "";
      void this.submitLocation(check.lat, check.lon);
    });
    this.root.replaceChildren(form);
  }

  async submitLocation(lat: number, lon: number): Promise<void> {
    this.coordinates = { lat, lon };
    await this.refresh();
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = setInterval(() => void this.refresh(), this.refreshMs);
  }

  async refresh(): Promise<void> {
    if (this.coordinates === null || this.inFlight) return; // coalesce overlaps
    this.inFlight = true;
    try {
      const data = await this.client.dashboardData(this.coordinates.lat, this.coordinates.lon);
      this.state = buildViewState(this.coordinates, data, new Date());
    } catch (error) {
      if (this.state !== null && !(error instanceof ApiError)) {
        this.state = { ...this.state, stale: true }; // keep last good view
      } else {
        const message =
          error instanceof ApiError
            ? `service answered ${error.status}: ${error.message}`
            : `cannot reach the service: ${String(error)}`;
        this.state = {
          coordinates: this.coordinates,
          installationId: null,
          parameters: [],
          noData: false,
          stale: false,
          lastRefresh: this.state?.lastRefresh ?? null,
          error: message,
        };
      }
    } finally {
      this.inFlight = false;
    }
    renderView(this.resultsHost, this.state);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  currentState(): ViewState | null {
    return this.state;
  }
}

export function bootstrap(): void {
  const formHost = document.getElementById("form-host");
  const resultsHost = document.getElementById("results-host");
  if (!formHost || !resultsHost) return;
  const app = new DashboardApp(formHost, resultsHost, {
    apiBase: (window as { AIRCAST_API_BASE?: string }).AIRCAST_API_BASE ?? "",
  });
  app.mount();
}

if (typeof document !== "undefined" && document.getElementById("form-host")) {
  bootstrap();
}
