import { describe, expect, it } from "vitest";

import type { Snapshot } from "../src/store.js";
import type { StateDoc } from "../src/types.js";
import { confidenceBadge, renderCard, renderReviewQueue, renderStep } from "../src/views.js";
import { STEPS, canRun, cardsForStep, flagged, stepStatus } from "../src/wizard.js";

function stateDoc(overrides: Partial<StateDoc> = {}): StateDoc {
  return {
    version: 1,
    background: "factory",
    parameters: [
      { symbol: "Hours", shape: ["K"], definition: "hours per unit" },
      { symbol: "MaxHours", shape: [], definition: "cap" },
    ],
    variables: [],
    clauses: [
      { id: "c1", kind: "Constraint", description: "hours cap",
        formulation: "sum_j Hours_j x_j <= MaxHours", fragment: "f1",
        status: "Coded", confidence: 5 },
      { id: "c2", kind: "Constraint", description: "shift link",
        formulation: "T_{i,j} <= MaxShift assign_{i,j} forall i, j", fragment: null,
        status: "Formulated", confidence: 3 },
      { id: "obj", kind: "Objective", description: "minimize cost",
        formulation: "minimize sum_j Cost_j x_j", fragment: "f2",
        status: "Coded", confidence: 5 },
    ],
    graph: [],
    data: { Hours: [2, 4, 3] },
    ...overrides,
  };
}

function snapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    state: stateDoc(),
    stage: "Code",
    outcome: null,
    reviews: [],
    notifications: [],
    lastError: null,
    ...overrides,
  };
}

describe("stage locking", () => {
  it("mirrors the server's next runnable stage", () => {
    const byId = Object.fromEntries(STEPS.map((s) => [s.id, s]));
    expect(stepStatus(byId.parameters!, "Code", false)).toBe("done");
    expect(stepStatus(byId.formulation!, "Code", false)).toBe("done");
    expect(stepStatus(byId.fragments!, "Code", false)).toBe("active");
    expect(stepStatus(byId.test!, "Code", false)).toBe("locked");
    expect(stepStatus(byId.output!, "Code", false)).toBe("locked");
    expect(stepStatus(byId.output!, "Assemble", true)).toBe("done");
  });

  it("only the server's current stage is runnable (409 otherwise)", () => {
    const fragments = STEPS.find((s) => s.id === "fragments")!;
    expect(canRun(fragments, "Code")).toBe(true);
    expect(canRun(fragments, "Formulate")).toBe(false);
    expect(canRun(fragments, "Assemble")).toBe(false);
  });
});

describe("confidence flags", () => {
  it("flags strictly below the threshold", () => {
    expect(flagged(3)).toBe(true);
    expect(flagged(4)).toBe(false);
    expect(flagged(5)).toBe(false);
    expect(flagged(null)).toBe(false);
  });

  it("badge appears iff server confidence is below threshold", () => {
    expect(confidenceBadge(3)).toContain("low");
    expect(confidenceBadge(3)).toContain("review suggested");
    expect(confidenceBadge(4)).not.toContain("low");
    expect(confidenceBadge(null)).toBe("");
  });

  it("low-confidence clause card is flagged with review actions", () => {
    const cards = cardsForStep("clauses", snapshot());
    const c2 = cards.find((c) => c.itemId === "c2")!;
    expect(c2.flagged).toBe(true);
    const html = renderCard(c2);
    expect(html).toContain("flagged");
    expect(html).toContain('data-action="modify"');
    const c1 = cards.find((c) => c.itemId === "c1")!;
    expect(renderCard(c1)).not.toContain("flagged");
  });
});

describe("staleness", () => {
  it("fragments step marks non-coded clauses stale", () => {
    const cards = cardsForStep("fragments", snapshot());
    expect(cards.find((c) => c.itemId === "c2")!.stale).toBe(true);
    expect(cards.find((c) => c.itemId === "c1")!.stale).toBe(false);
  });

  it("data step marks missing tensors", () => {
    const cards = cardsForStep("data", snapshot());
    expect(cards.find((c) => c.itemId === "MaxHours")!.stale).toBe(true);
    expect(cards.find((c) => c.itemId === "Hours")!.stale).toBe(false);
  });
});

describe("renderStep", () => {
  it("puts pending reviews at the top", () => {
    const html = renderStep(
      snapshot({
        reviews: [{ id: "rev1", item_kind: "clause", item_id: "c2",
                    confidence: 3, reason: "low confidence", resolved: false }],
      }),
      "clauses",
    );
    expect(html.indexOf("Pending reviews")).toBeGreaterThan(-1);
    expect(html.indexOf("Pending reviews")).toBeLessThan(html.indexOf('data-step="clauses"'));
  });

  it("shows inline errors without dropping the step body", () => {
    const html = renderStep(snapshot({ lastError: "stage precondition" }), "clauses");
    expect(html).toContain("stage precondition");
    expect(html).toContain('data-step="clauses"');
  });

  it("review queue renders keep/remove/modify per entry", () => {
    const html = renderReviewQueue([
      { id: "rev1", item_kind: "clause", item_id: "c2", confidence: 3,
        reason: "low confidence", resolved: false },
    ]);
    expect(html).toContain('data-review="rev1"');
    for (const action of ["keep", "remove", "modify"]) {
      expect(html).toContain(`data-action="${action}"`);
    }
  });

  it("run button appears only for the server's current stage", () => {
    const atCode = renderStep(snapshot(), "fragments");
    expect(atCode).toContain('data-run="Code"');
    const locked = renderStep(snapshot({ stage: "Assemble" }), "fragments");
    expect(locked).not.toContain('data-run="Code"');
  });
});
