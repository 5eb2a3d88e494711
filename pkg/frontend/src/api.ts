// Thin typed client over the annotation service's HTTP+JSON API.

import type {
  DatasetInfo,
  Label,
  NextResponse,
  SessionInfo,
  SessionMetrics,
  SubmitAck,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(
        response.status,
        typeof body?.error === "string" ? body.error : "http_error",
        typeof body?.detail === "string" ? body.detail : response.statusText,
      );
    }
    return body as T;
  }

  uploadDataset(jsonl: string): Promise<DatasetInfo> {
    return this.request("/datasets", {
      method: "POST",
      headers: { "content-type": "application/x-ndjson" },
      body: jsonl,
    });
  }

  datasetInfo(datasetId: string): Promise<DatasetInfo> {
    return this.request(`/datasets/${datasetId}`);
  }

  createSession(
    datasetId: string,
    config: Record<string, unknown>,
  ): Promise<{ session_id: string; status: string; budget: { used: number; total: number } }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ dataset_id: datasetId, config }),
    });
  }

  sessionInfo(sessionId: string): Promise<SessionInfo> {
    return this.request(`/sessions/${sessionId}`);
  }

  next(sessionId: string): Promise<NextResponse> {
    return this.request(`/sessions/${sessionId}/next`);
  }

  submitLabel(sessionId: string, itemId: string, label: Label): Promise<SubmitAck> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ item_id: itemId, label }),
    });
  }

  metrics(sessionId: string): Promise<SessionMetrics> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }

  events(sessionId: string, from = 0): Promise<{ events: unknown[]; next: number }> {
    return this.request(`/sessions/${sessionId}/events?from=${from}`);
  }
}
