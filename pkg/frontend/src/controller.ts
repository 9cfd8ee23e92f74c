/** Orchestration between the API client, the store, and the views.
 *
 * Every user action is: call the API, ingest the response (or refetch),
 * re-render. The store never changes without a server round trip, which is
 * what the e2e network audit verifies.
 */

import { ApiClient, ApiError, pollRun } from "./api.js";
import { ProjectStore } from "./store.js";
import type { ReviewAction, StageName } from "./types.js";

export class ProjectController {
  constructor(
    readonly api: ApiClient,
    readonly store: ProjectStore,
    public projectId: string,
  ) {}

  static async create(api: ApiClient, store: ProjectStore, description: string,
                      config?: unknown): Promise<ProjectController> {
    const { id } = await api.createProject(description, config);
    const controller = new ProjectController(api, store, id);
    await controller.refresh();
    return controller;
  }

  /** Pull state, reviews, and notifications; the only way the store moves. */
  async refresh(): Promise<void> {
    this.store.ingestProjectState(await this.api.getState(this.projectId));
    this.store.ingestReviews(await this.api.listReviews(this.projectId));
    this.store.ingestNotifications(await this.api.listNotifications(this.projectId));
  }

  /** Run one stage to completion, then resync. Errors land in the store. */
  async runStage(stage: StageName): Promise<boolean> {
    try {
      const { run_id } = await this.api.startStage(this.projectId, stage);
      const record = await pollRun(this.api, run_id);
      await this.refresh();
      if (record.status === "failed") {
        this.store.ingestError(`${stage} failed: ${record.error}`);
        return false;
      }
      return true;
    } catch (error) {
      this.store.ingestError(this.describe(error));
      return false;
    }
  }

  /** Drive every remaining stage in order; stops on the first failure. */
  async runAll(): Promise<boolean> {
    for (;;) {
      const snapshot = this.store.current();
      if (!snapshot.stage) return false;
      if (snapshot.outcome !== null && snapshot.stage === "Assemble") {
        // Assemble already produced an outcome and nothing was reset
        return true;
      }
      const ok = await this.runStage(snapshot.stage);
      if (!ok) return false;
      if (this.store.current().outcome !== null) return true;
    }
  }

  async resolveReview(reviewId: string, action: ReviewAction,
                      payload?: Record<string, unknown>): Promise<boolean> {
    try {
      await this.api.resolveReview(this.projectId, reviewId, action, payload);
      await this.refresh();
      return true;
    } catch (error) {
      this.store.ingestError(this.describe(error));
      return false;
    }
  }

  /** Direct edit of a parameter/variable/clause through the server. */
  async editItem(itemId: string, payload: Record<string, unknown>): Promise<boolean> {
    try {
      await this.api.patchItem(this.projectId, itemId, payload);
      await this.refresh();
      return true;
    } catch (error) {
      this.store.ingestError(this.describe(error));
      return false;
    }
  }

  private describe(error: unknown): string {
    if (error instanceof ApiError) {
      if (error.status === 409) return `locked or out of order: ${error.detail}`;
      return error.detail;
    }
    return error instanceof Error ? error.message : String(error);
  }
}

/** Audit the API trail against the store: every store change must be
 * explainable by a server response. Returns a list of violations. */
export function auditNetworkDiscipline(api: ApiClient, store: ProjectStore): string[] {
  const violations: string[] = [];
  const reads = api.audit.filter((e) => e.method === "GET" && e.path.endsWith("/state"));
  if (store.ingests > 0 && reads.length === 0) {
    violations.push("store changed without ever reading server state");
  }
  const writes = api.audit.filter((e) => e.method === "POST" || e.method === "PATCH");
  for (const write of writes) {
    if (write.status >= 500) {
      violations.push(`server error on ${write.method} ${write.path}`);
    }
  }
  // the mirror must equal the last server-reported state, byte for byte
  const last = reads[reads.length - 1];
  if (last && store.current().state) {
    const server = JSON.stringify((last.response as { state: unknown }).state);
    const mirror = JSON.stringify(store.current().state);
    if (server !== mirror) {
      violations.push("client state mirror diverged from the last server response");
    }
  }
  return violations;
}
