/** Render the engine's plain-text formulation markup as display HTML.
 *
 * The grammar is tiny (sums, subscripts, comparisons, forall), so a
 * hand-rolled renderer beats shipping a TeX engine: sum_j becomes a sigma
 * with a subscript, x_j and T_{i,j} get <sub> subscripts, and ASCII
 * comparisons turn into their math glyphs.
 */

const REPLACEMENTS: [RegExp, string][] = [
  [/<=/g, "≤"],
  [/>=/g, "≥"],
  [/\bforall\b/g, "∀"],
  [/\*/g, "⋅"],
];

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** One token of rendered math: either plain text or name+subscript. */
function renderScripts(text: string): string {
  // sum_{i,j} / sum_j -> Σ with the indices as a subscript
  text = text.replace(
    /\bsum_\{([^}]*)\}|\bsum_([A-Za-z][A-Za-z0-9]*)/g,
    (_all, braced: string | undefined, bare: string | undefined) =>
      `Σ<sub>${braced ?? bare ?? ""}</sub>`,
  );
  // name_{i,j} / name_j / name_1 -> name with subscript
  text = text.replace(
    /\b([A-Za-z][A-Za-z0-9]*)_\{([^}]*)\}|\b([A-Za-z][A-Za-z0-9]*)_([A-Za-z0-9]+)/g,
    (_all, bn: string | undefined, bi: string | undefined, nn: string | undefined, ni) =>
      `${bn ?? nn}<sub>${bi ?? ni}</sub>`,
  );
  return text;
}

export function renderFormulation(markup: string | null | undefined): string {
  if (!markup) {
    return '<span class="math empty">(not formulated yet)</span>';
  }
  let text = escapeHtml(markup);
  text = text.replace(/&lt;=/g, "<=").replace(/&gt;=/g, ">=");
  for (const [pattern, glyph] of REPLACEMENTS) {
    text = text.replace(pattern, glyph);
  }
  text = renderScripts(text);
  return `<span class="math">${text}</span>`;
}

/** Plain-text (no tags) version, for tooltips and tests. */
export function formulationToText(markup: string): string {
  return renderFormulation(markup)
    .replace(/<sub>/g, "_")
    .replace(/<\/sub>/g, "")
    .replace(/<[^>]+>/g, "");
}
