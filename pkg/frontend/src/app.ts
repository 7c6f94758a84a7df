/** Hash-routed single page: #/ lists runs, #/runs/{id} shows the
 * labeling queue plus live charts for one campaign. All state other
 * than what is on screen lives in the service; a reload reproduces
 * the same view from the same endpoints. */

import { ApiClient, ServiceError } from "./api.js";
import type { QueueEntry } from "./model.js";
import { startPolling, type Poller } from "./poll.js";
import {
  applyRefresh,
  emptyQueue,
  markInFlight,
  resolveConflict,
  resolveFailed,
  resolveLabeled,
  type QueueState,
} from "./queue.js";
import {
  renderChart,
  renderError,
  renderModelTable,
  renderNotFound,
  renderQueue,
  renderRunList,
  el,
} from "./render.js";
import { lastIteration, metricSeries } from "./series.js";

export const POLL_MS = 2000;

export class App {
  private poller: Poller | undefined;
  private queueState: QueueState = emptyQueue();
  private currentRun: string | undefined;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    private readonly pollMs: number = POLL_MS,
  ) {}

  start(): void {
    window.addEventListener("hashchange", () => this.route());
    this.route();
  }

  stop(): void {
    this.poller?.stop();
  }

  route(): void {
    this.poller?.stop();
    const hash = window.location.hash;
    const match = /^#\/runs\/(.+)$/.exec(hash);
    if (match && match[1]) {
      this.showRun(decodeURIComponent(match[1]));
    } else {
      this.showRunList();
    }
  }

  private swap(view: HTMLElement): void {
    this.root.replaceChildren(view);
  }

  private showRunList(): void {
    this.currentRun = undefined;
    this.poller = startPolling(async () => {
      try {
        const { runs } = await this.api.listRuns();
        this.swap(renderRunList(runs, (id) => {
          window.location.hash = `#/runs/${id}`;
        }));
      } catch (err) {
        this.swap(renderError(`service unreachable: ${String(err)}`));
      }
    }, this.pollMs);
  }

  private showRun(runId: string): void {
    this.currentRun = runId;
    this.queueState = emptyQueue();
    this.poller = startPolling(() => this.refreshRun(runId), this.pollMs);
  }

  async refreshRun(runId: string): Promise<void> {
    try {
      const [record, queue, metrics] = await Promise.all([
        this.api.getRun(runId),
        this.api.getQueue(runId),
        this.api.getMetrics(runId),
      ]);
      if (this.currentRun !== runId) return;
      this.queueState = applyRefresh(this.queueState, queue.queue);

      const view = el("div", { class: "run-view" });
      view.append(
        el("h1", {}, [`${runId} - ${record.status}`]),
        el("p", { class: "facts" }, [
          `stage ${record.stage}, ${record.n_labels} labels stored, ` +
            `${queue.n_pending} awaiting`,
        ]),
      );
      view.append(
        renderQueue(this.queueState.entries, this.queueState.notices, {
          onLabel: (entry, label) => void this.submitLabel(runId, entry, label),
        }),
      );
      const aucSeries = metricSeries(metrics.iteration_metrics, "auc");
      const f1Series = metricSeries(metrics.iteration_metrics, "f1");
      view.append(renderChart("AUC by iteration", aucSeries, lastIteration(aucSeries)));
      view.append(renderChart("F1 by iteration", f1Series, lastIteration(f1Series)));
      view.append(renderModelTable(metrics.model_rows ?? []));
      this.swap(view);
    } catch (err) {
      if (this.currentRun !== runId) return;
      if (err instanceof ServiceError && err.status === 404) {
        this.swap(renderNotFound(runId));
        return;
      }
      this.swap(renderError(`service unreachable: ${String(err)}`));
    }
  }

  async submitLabel(runId: string, entry: QueueEntry, label: 0 | 1): Promise<void> {
    this.queueState = markInFlight(this.queueState, entry.record_id);
    try {
      await this.api.postLabel(runId, entry.record_id, label);
      this.queueState = resolveLabeled(this.queueState, entry.record_id);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 409) {
        this.queueState = resolveConflict(this.queueState, entry.record_id);
      } else {
        this.queueState = resolveFailed(this.queueState, entry, `label failed: ${String(err)}`);
      }
    }
    await this.refreshRun(runId);
  }
}

export function mount(baseUrl?: string): App {
  const params = new URLSearchParams(window.location.search);
  const base = baseUrl ?? params.get("service") ?? "";
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = new App(new ApiClient(base), root);
  app.start();
  return app;
}
