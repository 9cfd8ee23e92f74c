/** Client-side mirror of the server's project state.
 *
 * There is exactly one way data enters this store: `ingest(...)` with a
 * payload the server returned. The UI never edits the mirror directly, so a
 * diff between the mirror and a fresh GET /state is always empty; the e2e
 * network audit asserts exactly that.
 */

import type { NotificationDoc, OutcomeDoc, ProjectState, ReviewDoc, StageName, StateDoc } from "./types.js";

export interface Snapshot {
  state: StateDoc | null;
  stage: StageName | null;
  outcome: OutcomeDoc | null;
  reviews: ReviewDoc[];
  notifications: NotificationDoc[];
  lastError: string | null;
}

export type Listener = (snapshot: Snapshot) => void;

export class ProjectStore {
  private snapshot: Snapshot = {
    state: null,
    stage: null,
    outcome: null,
    reviews: [],
    notifications: [],
    lastError: null,
  };
  private listeners: Listener[] = [];
  /** Count of ingests, so audits can pair every change with a response. */
  ingests = 0;

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  current(): Snapshot {
    return this.snapshot;
  }

  private publish(update: Partial<Snapshot>): void {
    this.snapshot = { ...this.snapshot, ...update };
    this.ingests += 1;
    for (const listener of this.listeners) {
      listener(this.snapshot);
    }
  }

  ingestProjectState(payload: ProjectState): void {
    this.publish({
      state: payload.state,
      stage: payload.stage,
      outcome: payload.outcome,
      lastError: null,
    });
  }

  ingestReviews(reviews: ReviewDoc[]): void {
    this.publish({ reviews });
  }

  ingestNotifications(notifications: NotificationDoc[]): void {
    this.publish({ notifications });
  }

  ingestError(message: string): void {
    this.publish({ lastError: message });
  }

  clearError(): void {
    if (this.snapshot.lastError !== null) {
      this.publish({ lastError: null });
    }
  }
}
