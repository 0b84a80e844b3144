// End-to-end state equivalence: the scripted operator walkthrough (through
// the real HTTP service) and the equivalent CLI session must leave
// byte-identical campaign records on disk, and the dashboard must render
// exactly the /trace series.

import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";

import { runWalkthrough } from "../src/walkthrough.js";
import { buildConvergenceView } from "../src/state.js";
import { countMarks, utilityPanelSvg } from "../src/charts.js";

const REPO_ROOT = path.resolve(import.meta.dirname ?? ".", "..", "..");
const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const CAMPAIGN_ID = "equiv";
const REPETITIONS = 10;

const CONFIG = {
  preset: "bare_silicon",
  seed: 29,
  n_init: 4,
  batch_size: 2,
  candidate_count: 250,
  fit_restarts_initial: 2,
  fit_restarts_refit: 1,
  fit_maxiter: 25,
  deterministic_clock: true,
};

const uiDataDir = mkdtempSync(path.join(tmpdir(), "kerfopt-ui-"));
const cliDataDir = mkdtempSync(path.join(tmpdir(), "kerfopt-cli-"));
let server: ChildProcess;

function cli(args: string[]): string {
  const result = spawnSync(
    "python3",
    ["-m", "kerfopt.cli", ...args, "--data-dir", cliDataDir],
    { cwd: REPO_ROOT, encoding: "utf8" },
  );
  assert.equal(result.status, 0, `cli ${args[0]} failed: ${result.stderr}`);
  return result.stdout;
}

// The same deterministic bench results the walkthrough enters in the UI.
function measurementFlags(index: number): string[] {
  return [
    "--width", (29.4 - 0.1 * (index % 5)).toFixed(2),
    "--mod-width", (30.5 - 0.1 * (index % 5)).toFixed(2),
    "--burr", (1.8 - 0.15 * (index % 5)).toFixed(2),
    "--front-cracks", "0",
    "--corner-cracks", "0",
    "--back-cracks", "0",
    "--separation", "1.0",
  ];
}

function strengthFlags(index: number): string[] {
  const front = Array.from({ length: REPETITIONS }, (_, i) => 600 + 4 * index + i).join(",");
  const back = Array.from({ length: REPETITIONS }, (_, i) => 580 + 4 * index + i).join(",");
  return ["--front-strengths", front, "--back-strengths", back];
}

// The CLI replay blocks the event loop for minutes, so the connection pool
// may hold sockets the server has long since closed; retry once on a fresh
// connection before concluding anything is wrong.
async function fetchRetry(url: string, init?: RequestInit): Promise<Response> {
  try {
    return await fetch(url, init);
  } catch {
    await new Promise((resolve) => setTimeout(resolve, 200));
    return fetch(url, init);
  }
}

before(async () => {
  server = spawn(
    "python3",
    ["-m", "kerfopt.cli", "serve", "--port", String(PORT), "--data-dir", uiDataDir],
    { cwd: REPO_ROOT, stdio: "ignore" },
  );
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const response = await fetch(`${BASE}/campaigns/nope/status`);
      if (response.status === 404) return;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("campaign service did not come up");
});

after(() => {
  server?.kill();
});

test("browser walkthrough and CLI session leave byte-identical records", async () => {
  const result = await runWalkthrough({
    base: BASE,
    campaignId: CAMPAIGN_ID,
    config: CONFIG,
    askBatch: 2,
    chipoutsRequired: false,
    repetitions: REPETITIONS,
  });
  assert.equal(result.stage, 2);
  assert.equal(result.iterations, CONFIG.n_init + 4);

  // Same scenario, driven through the command line into a fresh data dir.
  const fs = await import("node:fs");
  const configPath = path.join(cliDataDir, "config.json");
  fs.writeFileSync(configPath, JSON.stringify(CONFIG));
  const initOut = JSON.parse(cli(["init", "--config", configPath, "--id", CAMPAIGN_ID]));
  let index = 0;
  for (const entry of initOut.batch) {
    cli(["tell", "--id", CAMPAIGN_ID, "--config-id", entry.config_id, ...measurementFlags(index)]);
    index += 1;
  }
  const ask1 = JSON.parse(cli(["ask", "--id", CAMPAIGN_ID, "--q", "2"]));
  for (const entry of ask1.batch) {
    cli(["tell", "--id", CAMPAIGN_ID, "--config-id", entry.config_id, ...measurementFlags(index)]);
    index += 1;
  }
  cli(["stage-switch", "--id", CAMPAIGN_ID]);
  const ask2 = JSON.parse(cli(["ask", "--id", CAMPAIGN_ID, "--q", "2"]));
  for (const entry of ask2.batch) {
    cli([
      "tell", "--id", CAMPAIGN_ID, "--config-id", entry.config_id,
      ...measurementFlags(index), ...strengthFlags(index),
    ]);
    index += 1;
  }
  cli(["map", "--id", CAMPAIGN_ID, "--weights", "speed_first",
       "--feasibility-level", "0", "--pool-size", "2000"]);
  cli(["map", "--id", CAMPAIGN_ID, "--weights", "strength_first",
       "--feasibility-level", "0", "--pool-size", "2000"]);

  const uiRecord = readFileSync(path.join(uiDataDir, `${CAMPAIGN_ID}.json`), "utf8");
  const cliRecord = readFileSync(path.join(cliDataDir, `${CAMPAIGN_ID}.json`), "utf8");
  assert.equal(uiRecord, cliRecord);
});

test("dashboard renders exactly the trace series", async () => {
  const response = await fetchRetry(`${BASE}/campaigns/${CAMPAIGN_ID}/trace`);
  assert.equal(response.status, 200);
  const trace = await response.json();
  const view = buildConvergenceView(trace.rows);
  assert.equal(view.pointCount, trace.rows.length);
  const utilityPoints = trace.rows.filter((r: { utility_best: number | null }) => r.utility_best !== null);
  assert.equal(countMarks(utilityPanelSvg(view)), utilityPoints.length);
  assert.equal(view.stageSwitchIter, CONFIG.n_init + 3);
});

test("identical what-if weights return the identical configuration", async () => {
  const body = JSON.stringify({
    weights: "speed_first",
    feasibility_level: 0,
    pool_size: 2000,
  });
  const first = await (
    await fetchRetry(`${BASE}/campaigns/${CAMPAIGN_ID}/map`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    })
  ).json();
  const second = await (
    await fetchRetry(`${BASE}/campaigns/${CAMPAIGN_ID}/map`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    })
  ).json();
  assert.deepEqual(first, second);
});
