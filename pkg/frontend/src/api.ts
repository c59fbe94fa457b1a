// Thin typed client over the service endpoints. All failures surface as
// ApiError so the queue controller can tell validation rejections (roll
// back, show inline) from transport problems (keep state, offer retry).

import type {
  DecisionBody,
  HealthResponse,
  MetricsResponse,
  QueueItem,
  QueueResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field?: string;

  constructor(status: number, code: string, message: string, field?: string) {
    super(message);
    this.status = status;
    this.code = code;
    this.field = field;
  }

  get retryable(): boolean {
    return this.status === 0 || this.status >= 500;
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        headers: { "Content-Type": "application/json" },
        ...init,
      });
    } catch (err) {
      throw new ApiError(0, "network", `service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      if (response.ok) {
        throw new ApiError(response.status, "malformed", "non-JSON response body");
      }
    }
    if (!response.ok) {
      const rec = (body ?? {}) as Record<string, unknown>;
      throw new ApiError(
        response.status,
        typeof rec.code === "string" ? rec.code : "error",
        typeof rec.message === "string" ? rec.message : `HTTP ${response.status}`,
        typeof rec.field === "string" ? rec.field : undefined,
      );
    }
    return body as T;
  }

  async health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health");
  }

  async queue(language?: string, limit = 50): Promise<QueueItem[]> {
    const params = new URLSearchParams({ limit: String(limit) });
    if (language) params.set("language", language);
    const body = await this.request<QueueResponse>(`/review/queue?${params}`);
    if (!Array.isArray(body.items)) {
      throw new ApiError(200, "malformed", "queue response lacks items");
    }
    return body.items;
  }

  async submitDecision(articleId: string, decision: DecisionBody): Promise<void> {
    await this.request(`/review/${encodeURIComponent(articleId)}/decision`, {
      method: "POST",
      body: JSON.stringify(decision),
    });
  }

  async metrics(language?: string): Promise<MetricsResponse> {
    const params = new URLSearchParams();
    if (language) params.set("language", language);
    const suffix = params.size ? `?${params}` : "";
    return this.request<MetricsResponse>(`/metrics/precision${suffix}`);
  }
}
