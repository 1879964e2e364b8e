// Typed, read-only client for the aircast REST API. The dashboard only ever
// issues GET requests.

export interface CurrentValueDto {
  ts: string;
  value: number;
}

export interface CurrentResponse {
  installation_id: number;
  values: Record<string, CurrentValueDto>;
  no_data?: boolean;
}

export interface SeriesPointDto {
  ts: string;
  value: number;
}

export interface HistoryResponse {
  installation_id: number;
  series: Record<string, SeriesPointDto[]>;
  no_data?: boolean;
}

export interface ForecastDto {
  base: string;
  h1: number;
  h2: number;
  h3: number;
  model_id: string;
}

export interface ForecastResponse {
  installation_id: number;
  forecasts: Record<string, ForecastDto>;
  no_data?: boolean;
}

export type ThresholdsResponse = Record<string, number>;

export interface DashboardData {
  current: CurrentResponse;
  history: HistoryResponse;
  forecast: ForecastResponse;
  thresholds: ThresholdsResponse;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string) => Promise<Response>;

async function getJson<T>(fetchFn: FetchLike, url: string): Promise<T> {
  const response = await fetchFn(url);
  if (!response.ok) {
    let detail = `${response.status}`;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url) => fetch(url),
  ) {}

  private url(endpoint: string, lat?: number, lon?: number): string {
    const base = `${this.baseUrl.replace(/\/$/, "")}/api/${endpoint}`;
    if (lat === undefined || lon === undefined) return base;
    return `${base}?lat=${encodeURIComponent(lat)}&lon=${encodeURIComponent(lon)}`;
  }

  current(lat: number, lon: number): Promise<CurrentResponse> {
    return getJson(this.fetchFn, this.url("current", lat, lon));
  }

  history(lat: number, lon: number): Promise<HistoryResponse> {
    return getJson(this.fetchFn, this.url("history", lat, lon));
  }

  forecast(lat: number, lon: number): Promise<ForecastResponse> {
    return getJson(this.fetchFn, this.url("forecast", lat, lon));
  }

  thresholds(): Promise<ThresholdsResponse> {
    return getJson(this.fetchFn, this.url("thresholds"));
  }

  async dashboardData(lat: number, lon: number): Promise<DashboardData> {
    const [current, history, forecast, thresholds] = await Promise.all([
      this.current(lat, lon),
      this.history(lat, lon),
      this.forecast(lat, lon),
      this.thresholds(),
    ]);
    return { current, history, forecast, thresholds };
  }
}
