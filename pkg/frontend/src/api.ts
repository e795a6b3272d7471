/** Typed client for /api/v1. All reads dedupe concurrent identical requests;
 * nothing in the UI mutates state except through these calls. */

import type {
  CaseDoc,
  CaseListPayload,
  CaseState,
  DecisionBody,
  EgoPayload,
  NodePayload,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }

  static async from(response: Response): Promise<ApiError> {
    let code = "error";
    let message = `HTTP ${response.status}`;
    try {
      const body = await response.json();
      if (body && typeof body.code === "string") code = body.code;
      if (body && typeof body.message === "string") message = body.message;
    } catch {
      // non-JSON error body; keep the generic message
    }
    return new ApiError(response.status, code, message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private inflight = new Map<string, Promise<unknown>>();

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const pending = this.inflight.get(path);
    if (pending) return pending as Promise<T>;
    const request = this.fetchFn(this.baseUrl + path)
      .then(async (response) => {
        if (!response.ok) throw await ApiError.from(response);
        return (await response.json()) as T;
      })
      .finally(() => this.inflight.delete(path));
    this.inflight.set(path, request);
    return request;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await ApiError.from(response);
    return (await response.json()) as T;
  }

  listCases(state?: CaseState, page = 1, pageSize = 20): Promise<CaseListPayload> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (state) params.set("state", state);
    return this.getJson(`/api/v1/cases?${params}`);
  }

  getCase(caseId: string): Promise<CaseDoc> {
    return this.getJson(`/api/v1/cases/${encodeURIComponent(caseId)}`);
  }

  getNode(nodeId: string): Promise<NodePayload> {
    return this.getJson(`/api/v1/nodes/${encodeURIComponent(nodeId)}`);
  }

  getEgo(nodeId: string, k: number): Promise<EgoPayload> {
    return this.getJson(`/api/v1/nodes/${encodeURIComponent(nodeId)}/ego?k=${k}`);
  }

  explainCase(caseId: string): Promise<CaseDoc> {
    return this.postJson(`/api/v1/cases/${encodeURIComponent(caseId)}/explain`, {});
  }

  submitDecision(caseId: string, body: DecisionBody): Promise<CaseDoc> {
    return this.postJson(`/api/v1/cases/${encodeURIComponent(caseId)}/decision`, body);
  }
}
