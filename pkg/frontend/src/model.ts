/** Types mirroring the service's JSON responses, field for field. */

export interface RunSummary {
  run_id: string;
  name: string;
  status: string;
  stage: string;
  n_labels: number;
  n_pending: number;
  created_at: number;
}

export interface QueueEntry {
  record_id: string;
  features_on: string[];
  eps: number;
  p_apt: Record<string, number>;
  margin: Record<string, number>;
  iteration: number;
  queued_at: number;
}

export interface QueueResponse {
  run_id: string;
  n_pending: number;
  queue: QueueEntry[];
}

export interface IterationReport {
  auc: number;
  precision: number;
  recall: number;
  f1: number;
  tp: number;
  fp: number;
  tn: number;
  fn: number;
  n: number;
  [extra: string]: number | undefined;
}

export interface TrajectorySummary {
  per_iteration: IterationReport[];
  mean_auc?: number;
  mean_f1?: number;
  [extra: string]: unknown;
}

/** While a campaign runs, metrics sit under "live"; afterwards the final
 * summaries replace them. The console renders whichever shape is served. */
export interface IterationMetrics {
  live?: {
    ensemble: IterationReport[];
    agents: Record<string, IterationReport[]>;
    buffer_size: number;
  };
  ensemble?: TrajectorySummary;
  agents?: Record<string, TrajectorySummary>;
  n_queried_total?: number;
  n_dropped?: number;
}

export interface ModelRow {
  model: string;
  auc: number;
  f1: number;
  [extra: string]: number | string | undefined;
}

export interface MetricsResponse {
  run_id: string;
  status: string;
  iteration_metrics: IterationMetrics;
  model_rows: ModelRow[];
}

export interface RunRecord {
  run_id: string;
  status: string;
  stage: string;
  n_labels: number;
  n_pending: number;
  error?: string | null;
  model_rows: ModelRow[];
  iteration_metrics: IterationMetrics;
  [extra: string]: unknown;
}

export interface LabelAck {
  ok: boolean;
  run_id: string;
  record_id: string;
  n_labels: number;
  n_pending: number;
}

export interface ApiError {
  error: string;
}
