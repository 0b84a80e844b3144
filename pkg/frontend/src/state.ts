// Pure projections of API payloads into view data.  Nothing here owns
// optimization state: every value shown is a value the service returned.

import type { CampaignStatus, TraceRow } from "./types.js";

export interface SeriesPoint {
  iter: number;
  value: number;
}

export interface ConvergenceView {
  bestUtility: SeriesPoint[];
  violations: Record<string, SeriesPoint[]>;
  stageSwitchIter: number | null;
  feasibilityBadge: boolean;
  pointCount: number;
}

const VIOLATION_KEYS = ["viol_front", "viol_corner", "viol_back", "viol_sep", "viol_chip"] as const;

export const VIOLATION_LABELS: Record<string, string> = {
  viol_front: "front cracks",
  viol_corner: "corner cracks",
  viol_back: "back cracks",
  viol_sep: "separation",
  viol_chip: "chipouts",
};

export function stageSwitchIteration(rows: TraceRow[]): number | null {
  for (let i = 1; i < rows.length; i++) {
    if (rows[i].stage === 2 && rows[i - 1].stage === 1) return rows[i].iter;
  }
  return null;
}

// Badge shown when every violation in the final quartile of the trace is
// within limits: the model has learned to stay feasible.
export function finalQuartileFeasible(rows: TraceRow[]): boolean {
  if (rows.length === 0) return false;
  const start = Math.floor((rows.length * 3) / 4);
  return rows.slice(start).every((row) =>
    VIOLATION_KEYS.every((key) => {
      const value = row[key];
      return value === null || value === undefined || (value as number) <= 0;
    }),
  );
}

export function buildConvergenceView(rows: TraceRow[]): ConvergenceView {
  const bestUtility: SeriesPoint[] = [];
  const violations: Record<string, SeriesPoint[]> = {};
  for (const key of VIOLATION_KEYS) violations[key] = [];
  for (const row of rows) {
    if (row.utility_best !== null && row.utility_best !== undefined) {
      bestUtility.push({ iter: row.iter, value: row.utility_best });
    }
    for (const key of VIOLATION_KEYS) {
      const value = row[key];
      if (value !== null && value !== undefined) {
        violations[key].push({ iter: row.iter, value: value as number });
      }
    }
  }
  if (violations.viol_chip.length === 0) delete violations.viol_chip;
  return {
    bestUtility,
    violations,
    stageSwitchIter: stageSwitchIteration(rows),
    feasibilityBadge: finalQuartileFeasible(rows),
    pointCount: rows.length,
  };
}

export function describeStatus(status: CampaignStatus): string {
  const parts = [
    `stage ${status.stage}`,
    `τ = ${status.tau.toFixed(4)}`,
    `${status.observation_count} evaluated`,
    `${status.feasible_count} feasible`,
  ];
  if (status.complete) parts.push("complete");
  else if (status.pending.length > 0) parts.push(`${status.pending.length} pending`);
  return parts.join(" · ");
}
