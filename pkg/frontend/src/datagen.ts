/** Random data generation for the data editor.
 *
 * Each parameter gets user-editable bounds; the default draws integers from
 * [1, 10]. The generator is seeded (mulberry32) so "regenerate" with the same
 * seed reproduces the same tensors.
 */

import type { ParameterDoc } from "./types.js";

export interface GenBounds {
  low: number;
  high: number;
  integer: boolean;
}

export const DEFAULT_BOUNDS: GenBounds = { low: 1, high: 10, integer: true };

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function drawValue(rand: () => number, bounds: GenBounds): number {
  const span = bounds.high - bounds.low;
  const raw = bounds.low + rand() * span;
  return bounds.integer ? Math.round(raw) : Math.round(raw * 1000) / 1000;
}

/** Resolve named dimensions to sizes; unknown names get `fallback`. */
export function resolveShape(
  shape: (string | number)[],
  dims: Record<string, number>,
  fallback = 3,
): number[] {
  return shape.map((d) => (typeof d === "number" ? d : (dims[d] ?? fallback)));
}

function tensor(rand: () => number, sizes: number[], bounds: GenBounds): unknown {
  if (sizes.length === 0) {
    return drawValue(rand, bounds);
  }
  const [head, ...rest] = sizes;
  return Array.from({ length: head as number }, () => tensor(rand, rest, bounds));
}

/** Generate a full data payload for the given parameters. */
export function generateData(
  parameters: ParameterDoc[],
  options?: {
    seed?: number;
    dims?: Record<string, number>;
    perParameter?: Record<string, Partial<GenBounds>>;
  },
): Record<string, unknown> {
  const rand = mulberry32(options?.seed ?? 1);
  const dims = options?.dims ?? {};
  const out: Record<string, unknown> = {};
  for (const parameter of parameters) {
    const bounds: GenBounds = {
      ...DEFAULT_BOUNDS,
      ...(options?.perParameter?.[parameter.symbol] ?? {}),
    };
    if (bounds.high < bounds.low) {
      throw new Error(`bounds for ${parameter.symbol} are inverted`);
    }
    out[parameter.symbol] = tensor(rand, resolveShape(parameter.shape, dims), bounds);
  }
  return out;
}

/** Schema rows for the data editor table. */
export function inferSchema(
  parameters: ParameterDoc[],
  data: Record<string, unknown>,
): { symbol: string; shape: string; present: boolean; preview: string }[] {
  return parameters.map((p) => {
    const present = p.symbol in data;
    const value = data[p.symbol];
    return {
      symbol: p.symbol,
      shape: p.shape.length ? `[${p.shape.join(", ")}]` : "scalar",
      present,
      preview: present ? JSON.stringify(value) : "(missing)",
    };
  });
}

/** Validate an uploaded JSON data document against the parameter list. */
export function validateUpload(
  parameters: ParameterDoc[],
  doc: unknown,
): { ok: boolean; errors: Record<string, string> } {
  const errors: Record<string, string> = {};
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return { ok: false, errors: { $: "the upload must be a JSON object" } };
  }
  const known = new Set(parameters.map((p) => p.symbol));
  const payload = doc as Record<string, unknown>;
  for (const key of Object.keys(payload)) {
    if (!known.has(key)) {
      errors[key] = "not a declared parameter";
    }
  }
  const depth = (value: unknown): number =>
    Array.isArray(value) ? 1 + depth(value[0]) : 0;
  for (const parameter of parameters) {
    const value = payload[parameter.symbol];
    if (value === undefined) continue;
    const wanted = parameter.shape.length;
    const got = depth(value);
    if (got !== wanted) {
      errors[parameter.symbol] = `expected ${wanted}-dimensional data, got ${got}`;
    }
  }
  return { ok: Object.keys(errors).length === 0, errors };
}
