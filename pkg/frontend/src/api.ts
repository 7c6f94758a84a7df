/** Thin typed client over the service endpoints. No caching, no state:
 * every number the console shows comes straight from one of these calls. */

import type {
  LabelAck,
  MetricsResponse,
  QueueResponse,
  RunRecord,
  RunSummary,
} from "./model.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ServiceError(resp.status, message);
    }
    return body as T;
  }

  listRuns(): Promise<{ runs: RunSummary[] }> {
    return this.request("/runs");
  }

  getRun(runId: string): Promise<RunRecord> {
    return this.request(`/runs/${encodeURIComponent(runId)}`);
  }

  getQueue(runId: string): Promise<QueueResponse> {
    return this.request(`/runs/${encodeURIComponent(runId)}/queue`);
  }

  getMetrics(runId: string): Promise<MetricsResponse> {
    return this.request(`/runs/${encodeURIComponent(runId)}/metrics`);
  }

  postLabel(runId: string, recordId: string, label: 0 | 1): Promise<LabelAck> {
    return this.request(`/runs/${encodeURIComponent(runId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ record_id: recordId, label }),
    });
  }
}
