/**
 * End-to-end export: float checkpoint in, macro model directory out.
 *
 * The output directory receives three files:
 *   manifest.json   layer metadata plus the blob digest
 *   weights.bin     quantized weights, int8, layer order
 *   reference.csv   integer-path predictions for the first N images
 *
 * The CSV gives the consumer a ground truth to diff against after it
 * loads the model, so a broken export fails loudly instead of silently
 * shifting accuracy.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Checkpoint } from "./checkpoint.js";
import { estimateScale, quantizeTensor } from "./quantize.js";
import { buildModelFiles, ExportedLayer, ModelFiles } from "./blob.js";
import { IdxImages } from "./idx.js";
import { referencePredictions } from "./reference.js";

export interface ExportResult {
  files: ModelFiles;
  layers: ExportedLayer[];
  predictions: number[];
  referenceCsv: string;
}

export function exportCheckpoint(
  checkpoint: Checkpoint, images: IdxImages,
  referenceLimit = 100): ExportResult {
  const layers: ExportedLayer[] = checkpoint.layers.map((layer) => {
    const scale = layer.weight_scale > 0 ? layer.weight_scale
      : estimateScale(layer.weights, layer.weight_bits, layer.encoding);
    return {
      meta: layer,
      weights: quantizeTensor(layer.weights, scale, layer.weight_bits,
                              layer.encoding),
    };
  });
  const files = buildModelFiles(checkpoint.name, layers);
  const run = referencePredictions(layers, images, referenceLimit);
  return { files, layers, predictions: run.predictions,
           referenceCsv: run.csv };
}

/** Write manifest, blob and reference CSV; returns the manifest path. */
export function writeExport(outdir: string, result: ExportResult): string {
  mkdirSync(outdir, { recursive: true });
  const manifestPath = join(outdir, "manifest.json");
  writeFileSync(manifestPath, result.files.manifest);
  writeFileSync(join(outdir, result.files.blobFile), result.files.blob);
  writeFileSync(join(outdir, "reference.csv"), result.referenceCsv);
  return manifestPath;
}
