// Typed client for the engine's HTTP API. The fetch function is injectable
// so the view-model tests can run against a scripted fake.

export interface ColumnInfo {
  name: string;
  type: string;
}

export interface TableInfo {
  name: string;
  columns: ColumnInfo[];
  row_count: number;
}

export interface ResultSet {
  columns: ColumnInfo[];
  rows: unknown[][];
  row_count: number;
}

export interface LlmDetails {
  function: string;
  meta_prompt_full: string;
  serialization_format: string;
  batch_mode: string;
  provider_calls: number;
  tuples_sent: number;
  cache_hits: number;
  effective_batch_sizes: number[];
  backoff_attempt_sizes: number[];
  warnings: string[];
  wall_time: number;
}

export interface PlanNode {
  node_id: number;
  kind: string;
  detail?: Record<string, unknown>;
  rows?: number;
  wall_time?: number;
  llm_details?: LlmDetails;
  children?: PlanNode[];
}

export interface PlanExport {
  plan_id: string;
  sql: string;
  generated_sql: string | null;
  query_wall_time: number;
  nodes: PlanNode;
}

export interface QueryResponse extends ResultSet {
  plan_id: string | null;
  wall_time: number;
  message?: string;
}

export interface AskResponse extends QueryResponse {
  generated_sql: string;
}

export interface Overrides {
  batch_mode?: string;
  serialization_format?: string;
  prompt_template?: string;
  node_ids?: number[];
}

export interface LatencySample {
  wall_time: number;
  provider_calls: number;
}

export interface RerunResponse extends ResultSet {
  plan_id: string | null;
  latency_comparison: { before: LatencySample; after: LatencySample };
}

export interface ApiError {
  code: string;
  message: string;
  line?: number;
  column?: number;
}

export class RequestFailed extends Error {
  constructor(
    public status: number,
    public error: ApiError,
  ) {
    super(error.message);
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApiClient {
  constructor(
    private fetchFn: FetchLike,
    private base = "",
  ) {}

  private async request<T>(path: string, init?: Parameters<FetchLike>[1]): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    const body = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      const error = (body.error ?? { code: "unknown", message: "request failed" }) as ApiError;
      throw new RequestFailed(response.status, error);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  tables(): Promise<{ tables: TableInfo[] }> {
    return this.request("/api/tables");
  }

  preview(name: string, limit = 20): Promise<ResultSet & { name: string }> {
    return this.request(`/api/tables/${encodeURIComponent(name)}/preview?limit=${limit}`);
  }

  query(sql: string, overrides?: Overrides): Promise<QueryResponse> {
    return this.post("/api/query", overrides ? { sql, overrides } : { sql });
  }

  ask(question: string): Promise<AskResponse> {
    return this.post("/api/ask", { question });
  }

  plan(planId: string): Promise<PlanExport> {
    return this.request(`/api/plan/${encodeURIComponent(planId)}`);
  }

  rerun(planId: string, overrides: Overrides): Promise<RerunResponse> {
    return this.post(`/api/plan/${encodeURIComponent(planId)}/rerun`, overrides);
  }
}
