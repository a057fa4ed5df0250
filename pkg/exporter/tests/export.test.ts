import { existsSync, readFileSync } from "node:fs";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, describe, expect, it } from "vitest";

import { parseCheckpoint } from "../src/checkpoint.js";
import { readIdxImages } from "../src/idx.js";
import { exportCheckpoint, writeExport } from "../src/export.js";
import { weightRange } from "../src/quantize.js";

const ROOT = new URL("../fixtures/", import.meta.url);
const ckpt = parseCheckpoint(
  readFileSync(fileURLToPath(new URL("checkpoint.json", ROOT)), "utf-8"));
const images = readIdxImages(
  new Uint8Array(readFileSync(fileURLToPath(new URL("images-100.idx", ROOT)))));

const tmp = mkdtempSync(join(tmpdir(), "export-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe("exportCheckpoint", () => {
  const result = exportCheckpoint(ckpt, images);

  it("is deterministic for a fixed checkpoint", () => {
    const again = exportCheckpoint(ckpt, images);
    expect(again.files.manifest).toBe(result.files.manifest);
    expect(Buffer.compare(again.files.blob, result.files.blob)).toBe(0);
    expect(again.referenceCsv).toBe(result.referenceCsv);
  });

  it("quantizes every layer into its declared range", () => {
    for (const { meta, weights } of result.layers) {
      const [lo, hi] = weightRange(meta.weight_bits, meta.encoding);
      let peak = 0;
      for (const v of weights) {
        expect(v).toBeGreaterThanOrEqual(lo);
        expect(v).toBeLessThanOrEqual(hi);
        peak = Math.max(peak, Math.abs(v));
      }
      expect(peak).toBeGreaterThan(0);
    }
  });

  it("predicts a digit for each of the 100 reference images", () => {
    expect(result.predictions).toHaveLength(100);
    for (const p of result.predictions) {
      expect(p).toBeGreaterThanOrEqual(0);
      expect(p).toBeLessThan(10);
    }
    const lines = result.referenceCsv.trimEnd().split("\n");
    expect(lines[0]).toBe("index,prediction");
    expect(lines).toHaveLength(101);
  });

  it("mostly agrees with the shipped labels", () => {
    // quantized but otherwise exact inference; anything near chance level
    // would mean the arithmetic is wrong, not the model
    const labels = new Uint8Array(
      readFileSync(fileURLToPath(new URL("labels-100.idx", ROOT)))).subarray(8);
    const hits = result.predictions.filter((p, i) => p === labels[i]).length;
    expect(hits).toBeGreaterThan(85);
  });

  it("estimates a scale when the checkpoint omits it", () => {
    const doc = JSON.parse(
      readFileSync(fileURLToPath(new URL("checkpoint.json", ROOT)), "utf-8"));
    for (const layer of doc.layers) delete layer.weight_scale;
    const derived = exportCheckpoint(parseCheckpoint(JSON.stringify(doc)), images);
    for (const { meta, weights } of derived.layers) {
      const [, hi] = weightRange(meta.weight_bits, meta.encoding);
      expect(Math.max(...Array.from(weights, Math.abs))).toBe(hi);
    }
  });
});

describe("writeExport", () => {
  it("writes manifest, blob and reference CSV", () => {
    const result = exportCheckpoint(ckpt, images, 10);
    const manifestPath = writeExport(join(tmp, "model"), result);
    expect(manifestPath).toBe(join(tmp, "model", "manifest.json"));
    expect(readFileSync(manifestPath, "utf-8")).toBe(result.files.manifest);
    for (const name of ["weights.bin", "reference.csv"]) {
      expect(existsSync(join(tmp, "model", name))).toBe(true);
    }
    const blob = new Uint8Array(readFileSync(join(tmp, "model", "weights.bin")));
    expect(Buffer.compare(blob, result.files.blob)).toBe(0);
  });
});
