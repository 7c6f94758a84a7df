/** Pure mapping from served metrics JSON to chart-ready series.
 *
 * The console never computes a metric itself: every point here is a
 * value lifted verbatim from a service response, keyed by its
 * 1-based iteration index.
 */

import type { IterationMetrics, IterationReport } from "./model.js";

export interface Series {
  name: string;
  /** [iteration, value] pairs, iteration starting at 1 */
  points: [number, number][];
}

function toPoints(reports: IterationReport[], key: "auc" | "f1"): [number, number][] {
  const pts: [number, number][] = [];
  reports.forEach((r, i) => {
    const v = r[key];
    if (typeof v === "number" && Number.isFinite(v)) {
      pts.push([i + 1, v]);
    }
  });
  return pts;
}

/** One series per agent plus the ensemble, live or final shape alike. */
export function metricSeries(
  metrics: IterationMetrics | undefined | null,
  key: "auc" | "f1",
): Series[] {
  if (!metrics) return [];
  const out: Series[] = [];
  if (metrics.live) {
    for (const [name, reports] of Object.entries(metrics.live.agents)) {
      out.push({ name, points: toPoints(reports, key) });
    }
    out.push({ name: "ensemble", points: toPoints(metrics.live.ensemble, key) });
    return out;
  }
  if (metrics.agents) {
    for (const [name, summary] of Object.entries(metrics.agents)) {
      out.push({ name, points: toPoints(summary.per_iteration ?? [], key) });
    }
  }
  if (metrics.ensemble) {
    out.push({
      name: "ensemble",
      points: toPoints(metrics.ensemble.per_iteration ?? [], key),
    });
  }
  return out;
}

/** Highest iteration index present in any series; 0 when nothing is served. */
export function lastIteration(series: Series[]): number {
  let last = 0;
  for (const s of series) {
    const tail = s.points[s.points.length - 1];
    if (tail && tail[0] > last) last = tail[0];
  }
  return last;
}
