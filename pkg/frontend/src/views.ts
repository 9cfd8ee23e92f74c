/** Pure HTML renderers for the wizard. No DOM access and no state here:
 * every function maps a snapshot to a string, which keeps them testable in
 * node and forces all behavior through the store + API layers.
 */

import { inferSchema } from "./datagen.js";
import { renderFormulation } from "./math.js";
import type { Snapshot } from "./store.js";
import type { ClauseDoc, NotificationDoc, OutcomeDoc, ReviewDoc } from "./types.js";
import { Card, DEFAULT_CONFIDENCE_THRESHOLD, STEPS, StepId, cardsForStep, canRun, stepStatus } from "./wizard.js";

function escape(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function confidenceBadge(confidence: number | null,
                                threshold = DEFAULT_CONFIDENCE_THRESHOLD): string {
  if (confidence === null) return "";
  const low = confidence < threshold;
  const cls = low ? "badge confidence low" : "badge confidence";
  const hint = low ? " — review suggested" : "";
  return `<span class="${cls}" data-confidence="${confidence}">confidence ${confidence}/5${hint}</span>`;
}

export function renderCard(card: Card): string {
  const classes = ["card"];
  if (card.flagged) classes.push("flagged");
  if (card.stale) classes.push("stale");
  const badges = [
    confidenceBadge(card.confidence),
    card.stale ? '<span class="badge stale">stale</span>' : "",
  ].join("");
  const actions = card.flagged
    ? `<div class="actions" data-item="${escape(card.itemId)}">
        <button data-action="keep">keep</button>
        <button data-action="remove">remove</button>
        <button data-action="modify">modify</button>
      </div>`
    : "";
  return `<div class="${classes.join(" ")}" data-item="${escape(card.itemId)}">
    <header><strong>${escape(card.title)}</strong>${badges}</header>
    <p>${escape(card.body)}</p>${actions}
  </div>`;
}

export function renderStepTabs(snapshot: Snapshot, active: StepId): string {
  if (!snapshot.stage) return "";
  const tabs = STEPS.map((step) => {
    const status = stepStatus(step, snapshot.stage!, snapshot.outcome !== null);
    const classes = ["tab", status, step.id === active ? "current" : ""]
      .filter(Boolean)
      .join(" ");
    return `<button class="${classes}" data-step="${step.id}"${
      status === "locked" ? " disabled" : ""
    }>${step.title}</button>`;
  });
  return `<nav class="steps">${tabs.join("")}</nav>`;
}

export function renderReviewQueue(reviews: ReviewDoc[]): string {
  if (!reviews.length) return "";
  const rows = reviews
    .map(
      (review) => `<li class="review" data-review="${escape(review.id)}" data-item="${escape(review.item_id)}">
        <span>${escape(review.item_kind)} <strong>${escape(review.item_id)}</strong>
        (confidence ${review.confidence}): ${escape(review.reason)}</span>
        <span class="actions">
          <button data-action="keep">keep</button>
          <button data-action="remove">remove</button>
          <button data-action="modify">modify</button>
        </span>
      </li>`,
    )
    .join("");
  return `<section class="reviews"><h3>Pending reviews</h3><ul>${rows}</ul></section>`;
}

export function renderFormulationCards(snapshot: Snapshot): string {
  const state = snapshot.state;
  if (!state) return "";
  return state.clauses
    .map((clause: ClauseDoc) => {
      const flaggedClass =
        clause.confidence !== null && clause.confidence < DEFAULT_CONFIDENCE_THRESHOLD
          ? " flagged"
          : "";
      return `<div class="card formulation${flaggedClass}" data-item="${escape(clause.id)}">
      <header><strong>${escape(clause.id)}</strong>${confidenceBadge(clause.confidence)}</header>
      <p>${escape(clause.description)}</p>
      <div class="formula">${renderFormulation(clause.formulation)}</div>
      <button data-action="edit-formulation" data-item="${escape(clause.id)}">edit</button>
    </div>`;
    })
    .join("");
}

/** Fragment ids as a read-only tree; raw edit happens through PATCH. */
export function renderFragmentTree(snapshot: Snapshot): string {
  const state = snapshot.state;
  if (!state) return "";
  const rows = state.clauses
    .map((clause) => {
      const stale = clause.status !== "Coded";
      const frag = clause.fragment
        ? `<code>${escape(clause.fragment)}</code>`
        : '<em>(not coded yet)</em>';
      const badge = stale ? ' <span class="badge stale">stale</span>' : "";
      return `<li class="${stale ? "stale" : "coded"}"><strong>${escape(clause.id)}</strong> → ${frag}
        <span class="status">${clause.status}</span>${badge}</li>`;
    })
    .join("");
  return `<ul class="fragments">${rows}</ul>`;
}

export function renderDataEditor(snapshot: Snapshot): string {
  const state = snapshot.state;
  if (!state) return "";
  const rows = inferSchema(state.parameters, state.data)
    .map(
      (row) => `<tr class="${row.present ? "present" : "missing"}">
      <td>${escape(row.symbol)}</td><td>${escape(row.shape)}</td>
      <td>${escape(row.preview)}</td></tr>`,
    )
    .join("");
  return `<table class="data-editor">
    <thead><tr><th>parameter</th><th>shape</th><th>data</th></tr></thead>
    <tbody>${rows}</tbody></table>
  <div class="data-actions">
    <button data-action="upload-data">upload JSON</button>
    <button data-action="generate-data">generate (bounds default [1, 10])</button>
  </div>`;
}

export function renderOutcome(outcome: OutcomeDoc | null): string {
  if (!outcome) return '<p class="outcome none">not solved yet</p>';
  if (outcome.status !== "Optimal") {
    return `<div class="outcome ${outcome.status.toLowerCase()}">
      <strong>${outcome.status}</strong><p>${escape(outcome.diagnostics)}</p></div>`;
  }
  const rows = Object.entries(outcome.primal ?? {})
    .map(([name, value]) => `<tr><td>${escape(name)}</td><td>${value}</td></tr>`)
    .join("");
  return `<div class="outcome optimal">
    <strong>Optimal</strong>, objective <span class="objective">${outcome.objective}</span>
    <table><tbody>${rows}</tbody></table></div>`;
}

export function renderNotifications(notifications: NotificationDoc[]): string {
  const interesting = notifications.filter((n) => n.detected !== "None");
  if (!interesting.length) return "";
  const rows = interesting
    .map(
      (n) => `<li class="advisory"><strong>${escape(n.detected)}</strong>:
      ${escape(n.rationale)} — ${escape(n.suggestion)}</li>`,
    )
    .join("");
  return `<aside class="notifications"><h3>Structure advisories</h3><ul>${rows}</ul></aside>`;
}

export function renderError(message: string | null): string {
  return message ? `<div class="error" role="alert">${escape(message)}</div>` : "";
}

export function renderStep(snapshot: Snapshot, step: StepId): string {
  const body = (() => {
    switch (step) {
      case "formulation":
        return renderFormulationCards(snapshot);
      case "fragments":
        return renderFragmentTree(snapshot);
      case "data":
        return renderDataEditor(snapshot);
      case "test":
      case "output":
        return renderOutcome(snapshot.outcome);
      default:
        return cardsForStep(step, snapshot).map(renderCard).join("");
    }
  })();
  const runnable = STEPS.find((s) => s.id === step);
  const runButton =
    runnable && snapshot.stage && canRun(runnable, snapshot.stage)
      ? `<button class="run" data-run="${runnable.runs}">run ${runnable.title}</button>`
      : "";
  return `${renderError(snapshot.lastError)}
${renderReviewQueue(snapshot.reviews)}
<section class="step" data-step="${step}">${body}</section>
${runButton}`;
}
