/** Stage wizard model: step order, locking, cards, and confidence flags.
 *
 * Locking mirrors the server exactly: the server's reported `stage` is the
 * next runnable one, so earlier steps are complete and later ones are locked
 * (running them would 409). The client never decides more than the server
 * told it.
 */

import type { Snapshot } from "./store.js";
import type { ClauseDoc, StageName } from "./types.js";

export const STAGE_SEQUENCE: StageName[] = [
  "ExtractParams",
  "ExtractClauses",
  "Formulate",
  "Code",
  "Assemble",
];

export type StepId =
  | "parameters"
  | "clauses"
  | "formulation"
  | "fragments"
  | "data"
  | "test"
  | "output";

export interface Step {
  id: StepId;
  title: string;
  /** Server stage whose completion unlocks this step's content. */
  stage: StageName | null;
  /** Server stage this step's "run" button triggers, when it has one. */
  runs: StageName | null;
}

export const STEPS: Step[] = [
  { id: "parameters", title: "Parameters", stage: "ExtractParams", runs: "ExtractParams" },
  { id: "clauses", title: "Clauses", stage: "ExtractClauses", runs: "ExtractClauses" },
  { id: "formulation", title: "Formulation", stage: "Formulate", runs: "Formulate" },
  { id: "fragments", title: "Fragments", stage: "Code", runs: "Code" },
  { id: "data", title: "Data", stage: null, runs: null },
  { id: "test", title: "Test", stage: "Assemble", runs: "Assemble" },
  { id: "output", title: "Output", stage: null, runs: null },
];

export const DEFAULT_CONFIDENCE_THRESHOLD = 4;

export function stageRank(stage: StageName): number {
  return STAGE_SEQUENCE.indexOf(stage);
}

export type StepStatus = "done" | "active" | "locked";

/** Where each step stands given the server's next runnable stage. */
export function stepStatus(step: Step, serverStage: StageName, hasOutcome: boolean): StepStatus {
  if (step.id === "data") {
    // the data editor opens once parameters exist
    return stageRank(serverStage) > stageRank("ExtractParams") ? "done" : "locked";
  }
  if (step.id === "output") {
    return hasOutcome ? "done" : "locked";
  }
  const rank = stageRank(step.stage as StageName);
  const current = stageRank(serverStage);
  if (rank < current) return "done";
  if (rank === current) return "active";
  return "locked";
}

/** A stage run may only be started when the server is exactly at it. */
export function canRun(step: Step, serverStage: StageName): boolean {
  return step.runs !== null && step.runs === serverStage;
}

export function flagged(confidence: number | null, threshold = DEFAULT_CONFIDENCE_THRESHOLD): boolean {
  return confidence !== null && confidence < threshold;
}

export interface Card {
  itemId: string;
  title: string;
  body: string;
  confidence: number | null;
  flagged: boolean;
  stale: boolean;
  editable: boolean;
}

/** Items shown on a step, with confidence badges and staleness markers. */
export function cardsForStep(step: StepId, snapshot: Snapshot,
                             threshold = DEFAULT_CONFIDENCE_THRESHOLD): Card[] {
  const state = snapshot.state;
  if (!state) return [];
  const clauseCards = (stale: (c: ClauseDoc) => boolean) =>
    state.clauses.map((clause) => ({
      itemId: clause.id,
      title: `${clause.id} (${clause.kind})`,
      body: clause.description,
      confidence: clause.confidence,
      flagged: flagged(clause.confidence, threshold),
      stale: stale(clause),
      editable: true,
    }));

  switch (step) {
    case "parameters":
      return state.parameters.map((p) => ({
        itemId: p.symbol,
        title: p.symbol + (p.shape.length ? ` [${p.shape.join(", ")}]` : ""),
        body: p.definition,
        confidence: null,
        flagged: false,
        stale: false,
        editable: true,
      }));
    case "clauses":
      return clauseCards(() => false);
    case "formulation":
      return clauseCards((c) => c.status === "Extracted");
    case "fragments":
      return clauseCards((c) => c.status !== "Coded");
    case "data":
      return state.parameters.map((p) => ({
        itemId: p.symbol,
        title: p.symbol,
        body: JSON.stringify(state.data[p.symbol] ?? null),
        confidence: null,
        flagged: false,
        stale: !(p.symbol in state.data),
        editable: false,
      }));
    case "test":
    case "output":
      return [];
  }
}
