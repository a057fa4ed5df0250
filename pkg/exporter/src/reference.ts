/**
 * Integer reference inference.
 *
 * An independent implementation of the harness's exact-arithmetic path:
 * uniform input requantization, integer convolution / matmul over the
 * exported weights, round-and-clamp requantization between layers, raw
 * accumulators out of the last layer, first-maximum argmax. Every
 * operation is integer-valued in doubles, far below 2^53, so the results
 * are exact.
 */

import { ExportedLayer } from "./blob.js";
import { roundHalfUp } from "./quantize.js";

/** 8-bit pixels to first-layer input codes: x -> rhu(x*top/255). */
export function quantizePixels(pixels: Uint8Array, bits: number): Int32Array {
  if (bits < 1 || bits > 8) {
    throw new RangeError(`unsupported input bitwidth: ${bits}`);
  }
  const out = new Int32Array(pixels.length);
  if (bits === 8) {
    out.set(pixels);
    return out;
  }
  const top = (1 << bits) - 1;
  for (let i = 0; i < pixels.length; i++) {
    out[i] = roundHalfUp((pixels[i] * top) / 255.0);
  }
  return out;
}

interface Activations {
  channels: number;
  height: number;
  width: number;
  data: Int32Array; // channel-major [c][h][w]
}

function convForward(acts: Activations, layer: ExportedLayer): Activations {
  const m = layer.meta;
  if (acts.channels !== m.in_channels || acts.height !== m.input_height
      || acts.width !== m.input_width) {
    throw new RangeError(
      `layer ${m.name}: input shape ${acts.channels}x${acts.height}x` +
      `${acts.width} does not match the layer spec`);
  }
  const k = m.kernel;
  const oh = Math.floor((acts.height + 2 * m.padding - k) / m.stride) + 1;
  const ow = Math.floor((acts.width + 2 * m.padding - k) / m.stride) + 1;
  const out = new Int32Array(m.out_channels * oh * ow);
  const w = layer.weights;
  for (let f = 0; f < m.out_channels; f++) {
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let acc = 0;
        for (let c = 0; c < m.in_channels; c++) {
          for (let ky = 0; ky < k; ky++) {
            const iy = oy * m.stride + ky - m.padding;
            if (iy < 0 || iy >= acts.height) continue;
            for (let kx = 0; kx < k; kx++) {
              const ix = ox * m.stride + kx - m.padding;
              if (ix < 0 || ix >= acts.width) continue;
              acc += acts.data[(c * acts.height + iy) * acts.width + ix]
                * w[((f * m.in_channels + c) * k + ky) * k + kx];
            }
          }
        }
        out[(f * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return { channels: m.out_channels, height: oh, width: ow, data: out };
}

function fcForward(acts: Activations, layer: ExportedLayer): Activations {
  const m = layer.meta;
  const flat = acts.data; // channel-major flatten matches the harness
  if (flat.length !== m.in_channels) {
    throw new RangeError(
      `layer ${m.name}: got ${flat.length} input features, expected ${m.in_channels}`);
  }
  const out = new Int32Array(m.out_channels);
  for (let f = 0; f < m.out_channels; f++) {
    let acc = 0;
    const base = f * m.in_channels;
    for (let i = 0; i < m.in_channels; i++) {
      acc += flat[i] * layer.weights[base + i];
    }
    out[f] = acc;
  }
  return { channels: m.out_channels, height: 1, width: 1, data: out };
}

function requantize(acts: Activations, layer: ExportedLayer): Activations {
  const m = layer.meta;
  if (m.output_bits === 0) return acts;
  const top = (1 << m.output_bits) - 1;
  const data = new Int32Array(acts.data.length);
  for (let i = 0; i < data.length; i++) {
    const scaled = roundHalfUp(acts.data[i] * m.requant_scale);
    data[i] = Math.min(Math.max(scaled, 0), top);
  }
  return { ...acts, data };
}

export function argmaxFirst(values: Int32Array): number {
  let best = 0;
  for (let i = 1; i < values.length; i++) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

/** Logits for one single-channel image already quantized to input codes. */
export function forwardImage(
  layers: ExportedLayer[], codes: Int32Array, height: number,
  width: number): Int32Array {
  let acts: Activations = { channels: 1, height, width, data: codes };
  for (const layer of layers) {
    acts = layer.meta.kind === "conv" ? convForward(acts, layer)
      : fcForward(acts, layer);
    acts = requantize(acts, layer);
  }
  return acts.data;
}

export interface ReferenceRun {
  predictions: number[];
  csv: string;
}

export function referencePredictions(
  layers: ExportedLayer[], images: { count: number; height: number;
    width: number; pixels: Uint8Array }, limit: number): ReferenceRun {
  const n = Math.min(limit, images.count);
  const size = images.height * images.width;
  const inputBits = layers[0].meta.input_bits;
  const predictions: number[] = [];
  for (let i = 0; i < n; i++) {
    const codes = quantizePixels(
      images.pixels.subarray(i * size, (i + 1) * size), inputBits);
    predictions.push(argmaxFirst(
      forwardImage(layers, codes, images.height, images.width)));
  }
  const lines = ["index,prediction"];
  predictions.forEach((p, i) => lines.push(`${i},${p}`));
  return { predictions, csv: lines.join("\n") + "\n" };
}
