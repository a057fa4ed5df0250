import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { CheckpointError, parseCheckpoint } from "../src/checkpoint.js";

const FIXTURE = fileURLToPath(new URL("../fixtures/checkpoint.json", import.meta.url));

function fixtureDoc(): any {
  return JSON.parse(readFileSync(FIXTURE, "utf-8"));
}

describe("parseCheckpoint on the shipped fixture", () => {
  const ckpt = parseCheckpoint(readFileSync(FIXTURE, "utf-8"));

  it("finds the three layers with their geometry", () => {
    expect(ckpt.layers.map((l) => l.name)).toEqual(["conv1", "conv2", "fc"]);
    expect(ckpt.layers.map((l) => l.kind)).toEqual(["conv", "conv", "fc"]);
    expect(ckpt.layers.map((l) => l.weights.length)).toEqual([100, 600, 6000]);
    expect(ckpt.layers[1].stride).toBe(2);
    expect(ckpt.layers[2].kernel).toBe(0);
  });

  it("keeps the requantization constants", () => {
    expect(ckpt.layers[0].output_bits).toBe(4);
    expect(ckpt.layers[0].requant_scale).toBeGreaterThan(0);
    expect(ckpt.layers[2].output_bits).toBe(0);
  });
});

describe("parseCheckpoint validation", () => {
  it("rejects non-JSON input", () => {
    expect(() => parseCheckpoint("{nope")).toThrow(CheckpointError);
  });

  it("rejects a wrong format tag", () => {
    const doc = fixtureDoc();
    doc.format = "something-else";
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/not a checkpoint/);
  });

  it("rejects unknown versions", () => {
    const doc = fixtureDoc();
    doc.version = 7;
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/version/);
  });

  it("rejects an empty layer list", () => {
    const doc = fixtureDoc();
    doc.layers = [];
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/no layers/);
  });

  it("rejects unsupported layer kinds", () => {
    const doc = fixtureDoc();
    doc.layers[0].kind = "attention";
    expect(() => parseCheckpoint(JSON.stringify(doc)))
      .toThrow(/unsupported layer kind/);
  });

  it("rejects unknown encodings and adc modes", () => {
    let doc = fixtureDoc();
    doc.layers[0].encoding = "gray";
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/encoding/);
    doc = fixtureDoc();
    doc.layers[0].adc_mode = "sigma-delta";
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/adc_mode/);
  });

  it("rejects weight arrays that disagree with the shape", () => {
    const doc = fixtureDoc();
    doc.layers[0].weights = doc.layers[0].weights.slice(0, 99);
    expect(() => parseCheckpoint(JSON.stringify(doc)))
      .toThrow(/99 weights, shape implies 100/);
  });

  it("rejects an explicit non-positive weight_scale", () => {
    const doc = fixtureDoc();
    doc.layers[0].weight_scale = 0;
    expect(() => parseCheckpoint(JSON.stringify(doc))).toThrow(/weight_scale/);
  });

  it("treats a missing weight_scale as to-be-estimated", () => {
    const doc = fixtureDoc();
    delete doc.layers[0].weight_scale;
    const ckpt = parseCheckpoint(JSON.stringify(doc));
    expect(ckpt.layers[0].weight_scale).toBe(0);
  });

  it("defaults stride, padding and requantization fields", () => {
    const doc = fixtureDoc();
    delete doc.layers[0].stride;
    delete doc.layers[0].padding;
    delete doc.layers[0].requant_scale;
    delete doc.layers[0].output_bits;
    delete doc.layers[0].activation;
    const layer = parseCheckpoint(JSON.stringify(doc)).layers[0];
    expect(layer.stride).toBe(1);
    expect(layer.padding).toBe(0);
    expect(layer.requant_scale).toBe(1.0);
    expect(layer.output_bits).toBe(0);
    expect(layer.activation).toBe("none");
  });
});
