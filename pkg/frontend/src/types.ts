/** Server payload shapes for the modeling service API. */

export type ClauseStatus = "Extracted" | "Formulated" | "Coded";

export interface ParameterDoc {
  symbol: string;
  shape: (string | number)[];
  definition: string;
}

export interface VariableDoc {
  symbol: string;
  shape: (string | number)[];
  definition: string;
  vartype: "Continuous" | "Integer" | "Binary";
  bounds: [number | null, number | null] | null;
}

export interface ClauseDoc {
  id: string;
  kind: "Constraint" | "Objective";
  description: string;
  formulation: string | null;
  fragment: string | null;
  status: ClauseStatus;
  confidence: number | null;
}

export interface StateDoc {
  version: number;
  background: string;
  parameters: ParameterDoc[];
  variables: VariableDoc[];
  clauses: ClauseDoc[];
  graph: [string, string][];
  data: Record<string, unknown>;
}

export interface OutcomeDoc {
  status: "Optimal" | "Infeasible" | "Unbounded" | "Error" | "TimeLimit";
  objective: number | null;
  primal: Record<string, number> | null;
  diagnostics: string;
}

export interface ProjectState {
  state: StateDoc;
  stage: StageName;
  outcome: OutcomeDoc | null;
}

export type StageName =
  | "ExtractParams"
  | "ExtractClauses"
  | "Formulate"
  | "Code"
  | "Assemble";

export interface RunRecord {
  id: string;
  project: string;
  stage: string;
  status: "queued" | "running" | "done" | "failed";
  error: string;
  outcome: OutcomeDoc | null;
}

export interface ReviewDoc {
  id: string;
  item_kind: string;
  item_id: string;
  confidence: number;
  reason: string;
  resolved: boolean;
}

export interface NotificationDoc {
  detected: string;
  rationale: string;
  suggestion: string;
}

export interface ArtifactDoc {
  name: string;
  hash: string;
  content: string;
}

export type ReviewAction = "keep" | "remove" | "modify";
