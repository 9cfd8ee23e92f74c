/** Typed client for the modeling service.
 *
 * Every call is appended to an audit trail so tests (and the e2e network
 * audit) can prove that the UI never mutated model state client-side: all
 * changes flow through a request here and the store only ingests responses.
 */

import type {
  ArtifactDoc,
  NotificationDoc,
  ProjectState,
  ReviewAction,
  ReviewDoc,
  RunRecord,
  StageName,
} from "./types.js";

export interface AuditEntry {
  method: string;
  path: string;
  status: number;
  body?: unknown;
  response?: unknown;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly audit: AuditEntry[] = [];

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private authToken?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.authToken) headers["X-Auth-Token"] = this.authToken;
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    const text = await response.text();
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      payload = text;
    }
    this.audit.push({ method, path, status: response.status, body, response: payload });
    if (!response.ok) {
      const detail =
        payload && typeof payload === "object"
          ? String(
              (payload as Record<string, unknown>).detail ??
                (payload as Record<string, unknown>).message ??
                text,
            )
          : text;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  createProject(description: string, config?: unknown): Promise<{ id: string }> {
    return this.request("POST", "/projects", { description, config });
  }

  getState(projectId: string): Promise<ProjectState> {
    return this.request("GET", `/projects/${projectId}/state`);
  }

  startStage(projectId: string, stage: StageName): Promise<{ run_id: string }> {
    return this.request("POST", `/projects/${projectId}/stages/${stage}/run`);
  }

  getRun(runId: string): Promise<RunRecord> {
    return this.request("GET", `/runs/${runId}`);
  }

  listReviews(projectId: string): Promise<ReviewDoc[]> {
    return this.request("GET", `/projects/${projectId}/reviews`);
  }

  resolveReview(
    projectId: string,
    reviewId: string,
    action: ReviewAction,
    payload?: Record<string, unknown>,
  ): Promise<{ resolved: string; action: ReviewAction }> {
    return this.request("POST", `/projects/${projectId}/reviews/${reviewId}`, {
      action,
      payload,
    });
  }

  patchItem(
    projectId: string,
    itemId: string,
    payload: Record<string, unknown>,
  ): Promise<{ modified: string; state: ProjectState["state"]; stage: StageName }> {
    return this.request("PATCH", `/projects/${projectId}/items/${itemId}`, { payload });
  }

  listNotifications(projectId: string): Promise<NotificationDoc[]> {
    return this.request("GET", `/projects/${projectId}/notifications`);
  }

  getArtifact(projectId: string, name: "lp" | "report" | "log"): Promise<ArtifactDoc> {
    return this.request("GET", `/projects/${projectId}/artifacts/${name}`);
  }
}

/** Poll a run until it reaches a terminal state; returns the final record. */
export async function pollRun(
  client: ApiClient,
  runId: string,
  options?: { intervalMs?: number; timeoutMs?: number },
): Promise<RunRecord> {
  const intervalMs = options?.intervalMs ?? 150;
  const timeoutMs = options?.timeoutMs ?? 120_000;
  const startedAt = Date.now();
  for (;;) {
    const record = await client.getRun(runId);
    if (record.status === "done" || record.status === "failed") {
      return record;
    }
    if (Date.now() - startedAt > timeoutMs) {
      throw new Error(`run ${runId} timed out after ${timeoutMs}ms`);
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
