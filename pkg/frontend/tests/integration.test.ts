// End-to-end contract test: spawns the real Python service seeded from a
// replay fixture, then drives the dashboard's data layer over live HTTP.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { buildViewState, exceedsSafeLevel } from "../src/state.js";
import { isStrictlyAscending, spanHours } from "../src/charts.js";

const PYTHON = process.env.PYTHON ?? "python3";
const HOUR = 3_600_000;

function writeFreshFixture(dir: string): string {
  // 48 hourly records ending at the current hour, so serve-mode wall-clock
  // queries see a full 24-hour window. Station stays above the pm25 limit.
  const lines: string[] = [];
  const lastHour = Math.floor(Date.now() / HOUR) * HOUR;
  for (let i = 47; i >= 0; i -= 1) {
    const ts = new Date(lastHour - i * HOUR).toISOString().replace(".000Z", "Z");
    const phase = (2 * Math.PI * i) / 24;
    lines.push(
      JSON.stringify({
        installation_id: 77,
        lat: 52.4,
        lon: 21.3,
        ts,
        values: {
          pm25: Number((30 + 6 * Math.sin(phase)).toFixed(2)),
          pm10: Number((48 + 8 * Math.sin(phase + 1)).toFixed(2)),
          humidity: Number((60 + 10 * Math.sin(phase + 2)).toFixed(2)),
        },
      }),
    );
  }
  const path = join(dir, "fixture.jsonl");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

function writeConfig(dir: string, fixture: string): string {
  const path = join(dir, "config.json");
  writeFileSync(
    path,
    JSON.stringify({
      locations: [{ lat: 52.4, lon: 21.3 }],
      api_port: 0,
      poll_interval_s: 3600,
      provider: { kind: "replay", fixture },
      broker: { kind: "stub" },
      alerts: { sink: { kind: "file", path: join(dir, "alerts.jsonl") } },
      forecast: { window: 12 },
      edge: { enabled: false },
      snapshot_dir: join(dir, "data"),
    }),
  );
  return path;
}

function startService(config: string): Promise<{ child: ChildProcess; base: string }> {
  return new Promise((resolve, reject) => {
    const child = spawn(PYTHON, ["-m", "aircast", "serve", "--config", config], {
      stdio: ["ignore", "pipe", "pipe"],
    });
    let buffered = "";
    let errors = "";
    child.stderr?.on("data", (chunk: Buffer) => {
      errors += chunk.toString();
    });
    child.stdout?.on("data", (chunk: Buffer) => {
      buffered += chunk.toString();
      const line = buffered.split("\n").find((l) => l.includes("api_port"));
      if (line) {
        const port = (JSON.parse(line) as { api_port: number }).api_port;
        resolve({ child, base: `http://127.0.0.1:${port}` });
      }
    });
    child.on("exit", (code) => reject(new Error(`service exited ${code}: ${errors}`)));
    const deadline = setTimeout(
      () => reject(new Error(`service did not start: ${errors}`)),
      30_000,
    );
    deadline.unref?.();
  });
}

async function waitForData(client: ApiClient, lat: number, lon: number): Promise<void> {
  for (let attempt = 0; attempt < 60; attempt += 1) {
    try {
      const current = await client.current(lat, lon);
      if (!current.no_data) {
        const forecast = await client.forecast(lat, lon);
        if (!forecast.no_data) return;
      }
    } catch {
      // service still warming up
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("service never produced data");
}

describe("dashboard against a replay-seeded service", () => {
  let child: ChildProcess | null = null;
  let client: ApiClient;

  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "aircast-frontend-"));
    const fixture = writeFreshFixture(dir);
    const config = writeConfig(dir, fixture);
    const started = await startService(config);
    child = started.child;
    client = new ApiClient(started.base);
    await waitForData(client, 52.4, 21.3);
  }, 60_000);

  afterAll(() => {
    child?.kill("SIGINT");
  });

  it(
    "valid coordinates yield 24 history points, 3 forecast points and safe ranges",
    { timeout: 30_000 },
    async () => {
      const data = await client.dashboardData(52.4, 21.3);
      const state = buildViewState({ lat: 52.4, lon: 21.3 }, data, new Date());
      expect(state.noData).toBe(false);
      expect(state.installationId).toBe(77);

      const pm25 = state.parameters.find((p) => p.parameter === "pm25");
      expect(pm25).toBeDefined();
      expect(pm25!.history).toHaveLength(24);
      expect(isStrictlyAscending(pm25!.history)).toBe(true);
      expect(spanHours(pm25!.history)).toBeLessThanOrEqual(24);
      expect(pm25!.forecast).toHaveLength(3);
      expect(pm25!.safeLimit).toBe(15);
      expect(pm25!.status).toBe("EXCEEDED"); // fixture runs 24..36 ug/m3

      for (const view of state.parameters) {
        if (view.current === null) continue;
        const expected = exceedsSafeLevel(view.current, view.safeLimit);
        expect(view.status === "EXCEEDED").toBe(expected);
      }
    },
  );

  it(
    "banner predicate agrees with the service thresholds on boundary values",
    { timeout: 30_000 },
    async () => {
      const thresholds = await client.thresholds();
      for (const [name, limit] of Object.entries(thresholds)) {
        expect(exceedsSafeLevel(limit, limit), `${name} at the limit`).toBe(false);
        expect(exceedsSafeLevel(limit + 1e-9, limit), `${name} just above`).toBe(true);
      }
    },
  );

  it("invalid coordinates answer 400, far-away valid ones 503", { timeout: 30_000 }, async () => {
    await expect(client.current(91, 0)).rejects.toMatchObject({ status: 400 });
    await expect(client.current(-45.0, 170.0)).rejects.toMatchObject({ status: 503 });
  });
});
