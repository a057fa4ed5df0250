/** Symmetric per-tensor weight quantization (no zero point). */

import { CheckpointError, Encoding } from "./checkpoint.js";

/** Halves round toward +infinity as floor(x + 0.5), evaluated in double
 * precision. Math.round special-cases some FP edge inputs (e.g. the double
 * just below 0.5) differently, so do not substitute it; the harness
 * computes exactly this expression. */
export function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

/** Signed integer range for a bitwidth/encoding pair. Ternary digits are
 * balanced, so the low end mirrors the high end. */
export function weightRange(bits: number, encoding: Encoding): [number, number] {
  if (bits < 1 || bits > 8) {
    throw new CheckpointError(`unsupported weight bitwidth: ${bits}`);
  }
  const hi = (1 << (bits - 1)) - 1;
  if (encoding === "twos") {
    return [-(1 << (bits - 1)), hi];
  }
  return [-hi, hi];
}

/** Scale that puts the tensor's peak magnitude on the top code. An
 * all-zero tensor gets scale 1 (any positive scale encodes it). */
export function estimateScale(
  weights: ArrayLike<number>, bits: number, encoding: Encoding): number {
  const [, hi] = weightRange(bits, encoding);
  let peak = 0;
  for (let i = 0; i < weights.length; i++) {
    const mag = Math.abs(weights[i]);
    if (mag > peak) peak = mag;
  }
  return peak > 0 ? peak / hi : 1.0;
}

export function quantizeValue(
  w: number, scale: number, bits: number, encoding: Encoding): number {
  const [lo, hi] = weightRange(bits, encoding);
  const q = roundHalfUp(w / scale);
  return Math.min(Math.max(q, lo), hi);
}

export function quantizeTensor(
  weights: number[], scale: number, bits: number, encoding: Encoding): Int8Array {
  const out = new Int8Array(weights.length);
  for (let i = 0; i < weights.length; i++) {
    out[i] = quantizeValue(weights[i], scale, bits, encoding);
  }
  return out;
}
