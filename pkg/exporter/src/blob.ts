/**
 * Model manifest + weight blob emission.
 *
 * The on-disk format is owned by the inference harness: a JSON manifest
 * (sorted keys, two-space indent, trailing newline) naming layer geometry
 * and blob slices, and a raw little-endian int8 blob integrity-checked by
 * sha256. Layers are packed in order, row-major [out][in][R][R].
 */

import { createHash } from "node:crypto";

import { CheckpointLayer } from "./checkpoint.js";

export const MODEL_FORMAT = "cimsim-model";
export const MODEL_VERSION = 1;

export interface ExportedLayer {
  meta: CheckpointLayer;
  weights: Int8Array;
}

export interface ModelFiles {
  manifest: string;
  blobFile: string;
  blob: Uint8Array;
  sha256: string;
}

/** JSON.stringify with recursively sorted object keys, mirroring the
 * harness's canonical writer so diffs stay stable. */
export function stableJson(value: unknown, indent = 2): string {
  const sorted = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sorted);
    if (v !== null && typeof v === "object") {
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(v as object).sort()) {
        out[key] = sorted((v as Record<string, unknown>)[key]);
      }
      return out;
    }
    return v;
  };
  return JSON.stringify(sorted(value), null, indent);
}

export function buildModelFiles(
  name: string, layers: ExportedLayer[], blobFile = "weights.bin"): ModelFiles {
  const total = layers.reduce((n, l) => n + l.weights.length, 0);
  const blob = new Uint8Array(total);
  const entries = [];
  let offset = 0;
  for (const { meta, weights } of layers) {
    blob.set(new Uint8Array(weights.buffer, weights.byteOffset, weights.length),
             offset);
    entries.push({
      name: meta.name,
      kind: meta.kind,
      in_channels: meta.in_channels,
      out_channels: meta.out_channels,
      kernel: meta.kernel,
      input_bits: meta.input_bits,
      weight_bits: meta.weight_bits,
      encoding: meta.encoding,
      adc_mode: meta.adc_mode,
      input_height: meta.input_height,
      input_width: meta.input_width,
      stride: meta.stride,
      padding: meta.padding,
      blob_offset: offset,
      blob_length: weights.length,
      requant_scale: meta.requant_scale,
      output_bits: meta.output_bits,
      activation: meta.activation,
    });
    offset += weights.length;
  }
  const sha256 = createHash("sha256").update(blob).digest("hex");
  const doc = {
    format: MODEL_FORMAT,
    version: MODEL_VERSION,
    name,
    layers: entries,
    blob: { file: blobFile, length: blob.length, sha256 },
  };
  return { manifest: stableJson(doc) + "\n", blobFile, blob, sha256 };
}

/** Read a layer's integers back out of a blob slice (verification aid). */
export function decodeBlobSlice(
  blob: Uint8Array, offset: number, length: number): Int8Array {
  if (offset < 0 || offset + length > blob.length) {
    throw new RangeError("blob slice out of range");
  }
  return new Int8Array(blob.buffer, blob.byteOffset + offset, length).slice();
}
