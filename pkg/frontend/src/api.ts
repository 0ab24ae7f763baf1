import type { Decision, QueueItemView, QueuePage } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, public readonly status: number) {
    super(message);
  }
}

/** Another annotator decided the item first (HTTP 409). */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(message, 409);
  }
}

/**
 * Client for the verification service. The UI mutates state only through
 * the decision endpoint; everything else is read-only.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token?: string,
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["content-type"] = "application/json";
    if (this.token) headers["x-api-token"] = this.token;
    return headers;
  }

  private async check(response: Response): Promise<Response> {
    if (response.ok) return response;
    let detail = `HTTP ${response.status}`;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    if (response.status === 409) throw new ConflictError(detail);
    throw new ApiError(detail, response.status);
  }

  async fetchQueue(status?: string, limit?: number): Promise<QueuePage> {
    const params = new URLSearchParams();
    if (status) params.set("status", status);
    if (limit !== undefined) params.set("limit", String(limit));
    const qs = params.toString();
    const response = await fetch(
      `${this.baseUrl}/v1/queue${qs ? `?${qs}` : ""}`,
      { headers: this.headers() },
    );
    await this.check(response);
    return response.json();
  }

  async fetchItem(itemId: string): Promise<QueueItemView> {
    const response = await fetch(
      `${this.baseUrl}/v1/queue/${encodeURIComponent(itemId)}`,
      { headers: this.headers() },
    );
    await this.check(response);
    return response.json();
  }

  async postDecision(
    itemId: string,
    annotator: string,
    decision: Decision,
  ): Promise<QueueItemView> {
    const response = await fetch(
      `${this.baseUrl}/v1/queue/${encodeURIComponent(itemId)}/decision`,
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ annotator, decision }),
      },
    );
    await this.check(response);
    return response.json();
  }

  async fetchReport(withHuman: boolean): Promise<unknown> {
    const response = await fetch(
      `${this.baseUrl}/v1/report?with_human=${withHuman}`,
      { headers: this.headers() },
    );
    await this.check(response);
    return response.json();
  }
}
