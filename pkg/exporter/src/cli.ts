/**
 * cimsim-export: quantize a float checkpoint into a macro model directory.
 *
 *   cimsim-export --checkpoint ckpt.json --images test.idx --out dir [--limit N]
 *
 * Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input.
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { parseCheckpoint, CheckpointError } from "./checkpoint.js";
import { readIdxImages, IdxError } from "./idx.js";
import { exportCheckpoint, writeExport } from "./export.js";

const USAGE =
  "usage: cimsim-export --checkpoint <ckpt.json> --images <images.idx> " +
  "--out <dir> [--limit <n>]";

export function main(argv: string[]): number {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        checkpoint: { type: "string" },
        images: { type: "string" },
        out: { type: "string" },
        limit: { type: "string", default: "100" },
      },
      allowPositionals: false,
    });
  } catch (e) {
    console.error((e as Error).message);
    console.error(USAGE);
    return 1;
  }
  const { checkpoint, images, out, limit } = args.values;
  if (!checkpoint || !images || !out) {
    console.error(USAGE);
    return 1;
  }
  const n = Number(limit);
  if (!Number.isInteger(n) || n <= 0) {
    console.error(`--limit must be a positive integer, got ${limit}`);
    return 1;
  }

  try {
    const ckpt = parseCheckpoint(readFileSync(checkpoint, "utf-8"));
    const idx = readIdxImages(new Uint8Array(readFileSync(images)));
    const result = exportCheckpoint(ckpt, idx, n);
    const manifestPath = writeExport(out, result);
    const weights = result.layers.reduce((s, l) => s + l.weights.length, 0);
    console.log(`wrote ${manifestPath}`);
    console.log(`  layers: ${result.layers.length}  weights: ${weights}`
      + `  blob sha256: ${result.files.sha256.slice(0, 12)}...`);
    console.log(`  reference predictions: ${result.predictions.length} images`);
    return 0;
  } catch (e) {
    if (e instanceof CheckpointError || e instanceof IdxError
        || e instanceof RangeError
        || (e as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(e as Error).message}`);
      return 2;
    }
    throw e;
  }
}

process.exitCode = main(process.argv.slice(2));
