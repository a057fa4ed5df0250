/**
 * End-to-end checks through the built CLI, including the round trip into
 * the Python harness: the exported model, run in pass-through mode, must
 * reproduce the exporter's own reference predictions exactly.
 */

import { spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, describe, expect, it } from "vitest";

const EXPORTER_DIR = fileURLToPath(new URL("..", import.meta.url));
const CLI = join(EXPORTER_DIR, "dist", "cli.js");
const CHECKPOINT = join(EXPORTER_DIR, "fixtures", "checkpoint.json");
const IMAGES = join(EXPORTER_DIR, "fixtures", "images-100.idx");
const LABELS = join(EXPORTER_DIR, "fixtures", "labels-100.idx");

const tmp = mkdtempSync(join(tmpdir(), "roundtrip-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

function runCli(args: string[]) {
  return spawnSync(process.execPath, [CLI, ...args], { encoding: "utf-8" });
}

function parsePredictions(csv: string): number[] {
  const lines = csv.trimEnd().split("\n");
  expect(lines[0].startsWith("index,prediction")).toBe(true);
  return lines.slice(1).map((line) => Number(line.split(",")[1]));
}

describe("cimsim-export CLI", () => {
  it("exits 1 on missing arguments", () => {
    expect(runCli([]).status).toBe(1);
    expect(runCli(["--checkpoint", CHECKPOINT]).status).toBe(1);
  });

  it("exits 1 on an unusable limit", () => {
    const r = runCli(["--checkpoint", CHECKPOINT, "--images", IMAGES,
                      "--out", join(tmp, "x"), "--limit", "zero"]);
    expect(r.status).toBe(1);
    expect(r.stderr).toMatch(/--limit/);
  });

  it("exits 2 when the checkpoint is missing or malformed", () => {
    expect(runCli(["--checkpoint", join(tmp, "nope.json"),
                   "--images", IMAGES, "--out", join(tmp, "x")]).status).toBe(2);
    const bad = join(tmp, "bad.json");
    writeFileSync(bad, "{not json");
    const r = runCli(["--checkpoint", bad, "--images", IMAGES,
                      "--out", join(tmp, "x")]);
    expect(r.status).toBe(2);
    expect(r.stderr).toMatch(/error:/);
  });

  it("exits 2 when handed labels instead of images", () => {
    const r = runCli(["--checkpoint", CHECKPOINT, "--images", LABELS,
                      "--out", join(tmp, "x")]);
    expect(r.status).toBe(2);
    expect(r.stderr).toMatch(/magic/);
  });

  it("writes the model directory and reports what it did", () => {
    const out = join(tmp, "model");
    const r = runCli(["--checkpoint", CHECKPOINT, "--images", IMAGES,
                      "--out", out]);
    expect(r.stderr).toBe("");
    expect(r.status).toBe(0);
    expect(r.stdout).toContain("manifest.json");
    expect(r.stdout).toContain("reference predictions: 100 images");
    for (const f of ["manifest.json", "weights.bin", "reference.csv"]) {
      expect(existsSync(join(out, f))).toBe(true);
    }
  }, 30_000);
});

describe("round trip through the inference harness", () => {
  it("pass-through predictions match the reference CSV exactly", () => {
    const model = join(tmp, "rt-model");
    expect(runCli(["--checkpoint", CHECKPOINT, "--images", IMAGES,
                   "--out", model]).status).toBe(0);

    const runOut = join(tmp, "rt-run");
    const py = spawnSync("python3", [
      "-m", "cimsim.cli", "--out", runOut,
      "run", join(model, "manifest.json"),
      "--images", IMAGES, "--mode", "pass_through", "--limit", "100",
    ], { encoding: "utf-8" });
    expect(py.stderr).toBe("");
    expect(py.status).toBe(0);

    const reference = parsePredictions(
      readFileSync(join(model, "reference.csv"), "utf-8"));
    const harness = parsePredictions(
      readFileSync(join(runOut, "predictions.csv"), "utf-8"));
    expect(reference).toHaveLength(100);
    expect(harness).toEqual(reference);
  }, 180_000);
});
