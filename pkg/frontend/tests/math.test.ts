import { describe, expect, it } from "vitest";

import { formulationToText, renderFormulation } from "../src/math.js";

describe("renderFormulation", () => {
  it("renders sums as sigma with subscript", () => {
    const html = renderFormulation("sum_j Profit_j x_j");
    expect(html).toContain("Σ<sub>j</sub>");
    expect(html).toContain("Profit<sub>j</sub>");
    expect(html).toContain("x<sub>j</sub>");
  });

  it("renders braced multi-indices", () => {
    const html = renderFormulation("sum_{i,j} Cost_{i,j} assign_{i,j}");
    expect(html).toContain("Σ<sub>i,j</sub>");
    expect(html).toContain("Cost<sub>i,j</sub>");
  });

  it("turns comparisons and forall into glyphs", () => {
    const html = renderFormulation("x_j <= Capacity_j forall j");
    expect(html).toContain("≤");
    expect(html).toContain("∀");
    expect(html).not.toContain("forall");
  });

  it("escapes injected markup", () => {
    const html = renderFormulation('<script>alert("x")</script>');
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("handles missing formulations", () => {
    expect(renderFormulation(null)).toContain("not formulated yet");
  });

  it("plain-text projection keeps the algebra readable", () => {
    expect(formulationToText("sum_j Hours_j x_j <= MaxHours")).toBe(
      "Σ_j Hours_j x_j ≤ MaxHours",
    );
  });
});
