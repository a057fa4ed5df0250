/**
 * Checkpoint parsing.
 *
 * A checkpoint is the float-weight snapshot a training script leaves
 * behind: per-layer geometry, the float weights row-major [out][in][R][R],
 * and the requantization constants the inference harness expects. The
 * symmetric per-tensor weight scale is optional; when a layer omits it,
 * the exporter estimates one from the tensor's peak magnitude.
 */

export const CHECKPOINT_FORMAT = "cimsim-checkpoint";
export const CHECKPOINT_VERSION = 1;

export type LayerKind = "conv" | "fc";
export type Encoding = "twos" | "ternary";
export type AdcMode = "single" | "differential";

export interface CheckpointLayer {
  name: string;
  kind: LayerKind;
  in_channels: number;
  out_channels: number;
  kernel: number;
  input_bits: number;
  weight_bits: number;
  encoding: Encoding;
  adc_mode: AdcMode;
  input_height: number;
  input_width: number;
  stride: number;
  padding: number;
  weight_scale: number;
  weights: number[];
  requant_scale: number;
  output_bits: number;
  activation: string;
}

export interface Checkpoint {
  name: string;
  layers: CheckpointLayer[];
}

export class CheckpointError extends Error {}

const KINDS = new Set<string>(["conv", "fc"]);
const ENCODINGS = new Set<string>(["twos", "ternary"]);
const ADC_MODES = new Set<string>(["single", "differential"]);

function asPositiveInt(value: unknown, what: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value <= 0) {
    throw new CheckpointError(`${what} must be a positive integer`);
  }
  return value;
}

function weightCount(layer: CheckpointLayer): number {
  if (layer.kind === "conv") {
    return layer.out_channels * layer.in_channels * layer.kernel * layer.kernel;
  }
  return layer.out_channels * layer.in_channels;
}

function parseLayer(raw: Record<string, unknown>, index: number): CheckpointLayer {
  const name = typeof raw.name === "string" && raw.name ? raw.name : `layer${index}`;
  const kind = raw.kind;
  if (typeof kind !== "string" || !KINDS.has(kind)) {
    throw new CheckpointError(`layer ${name}: unsupported layer kind: ${String(kind)}`);
  }
  const encoding = raw.encoding;
  if (typeof encoding !== "string" || !ENCODINGS.has(encoding)) {
    throw new CheckpointError(`layer ${name}: unknown encoding: ${String(encoding)}`);
  }
  const adcMode = raw.adc_mode;
  if (typeof adcMode !== "string" || !ADC_MODES.has(adcMode)) {
    throw new CheckpointError(`layer ${name}: unknown adc_mode: ${String(adcMode)}`);
  }
  // absent scale means "estimate from the tensor"; explicit junk is an error
  const scale = raw.weight_scale === undefined ? 0 : raw.weight_scale;
  if (typeof scale !== "number" || scale < 0 || !Number.isFinite(scale)
      || (raw.weight_scale !== undefined && scale === 0)) {
    throw new CheckpointError(`layer ${name}: weight_scale must be > 0`);
  }
  if (!Array.isArray(raw.weights) || raw.weights.some((w) => typeof w !== "number")) {
    throw new CheckpointError(`layer ${name}: weights must be a number array`);
  }

  const layer: CheckpointLayer = {
    name,
    kind: kind as LayerKind,
    in_channels: asPositiveInt(raw.in_channels, `layer ${name}: in_channels`),
    out_channels: asPositiveInt(raw.out_channels, `layer ${name}: out_channels`),
    kernel: kind === "conv" ? asPositiveInt(raw.kernel, `layer ${name}: kernel`) : 0,
    input_bits: asPositiveInt(raw.input_bits, `layer ${name}: input_bits`),
    weight_bits: asPositiveInt(raw.weight_bits, `layer ${name}: weight_bits`),
    encoding: encoding as Encoding,
    adc_mode: adcMode as AdcMode,
    input_height: kind === "conv"
      ? asPositiveInt(raw.input_height, `layer ${name}: input_height`) : 0,
    input_width: kind === "conv"
      ? asPositiveInt(raw.input_width, `layer ${name}: input_width`) : 0,
    stride: raw.stride === undefined ? 1
      : asPositiveInt(raw.stride, `layer ${name}: stride`),
    padding: raw.padding === undefined ? 0 : (raw.padding as number),
    weight_scale: scale,
    weights: raw.weights as number[],
    requant_scale: raw.requant_scale === undefined ? 1.0 : (raw.requant_scale as number),
    output_bits: raw.output_bits === undefined ? 0 : (raw.output_bits as number),
    activation: raw.activation === undefined ? "none" : (raw.activation as string),
  };
  if (!Number.isInteger(layer.padding) || layer.padding < 0) {
    throw new CheckpointError(`layer ${name}: padding must be a non-negative integer`);
  }
  const expected = weightCount(layer);
  if (layer.weights.length !== expected) {
    throw new CheckpointError(
      `layer ${name}: ${layer.weights.length} weights, shape implies ${expected}`);
  }
  return layer;
}

export function parseCheckpoint(text: string): Checkpoint {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new CheckpointError(`checkpoint is not valid JSON: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new CheckpointError("checkpoint root must be a JSON object");
  }
  const root = doc as Record<string, unknown>;
  if (root.format !== CHECKPOINT_FORMAT) {
    throw new CheckpointError("not a checkpoint file");
  }
  if (root.version !== CHECKPOINT_VERSION) {
    throw new CheckpointError(
      `checkpoint version ${String(root.version)}, expected ${CHECKPOINT_VERSION}`);
  }
  if (!Array.isArray(root.layers) || root.layers.length === 0) {
    throw new CheckpointError("checkpoint has no layers");
  }
  const name = typeof root.name === "string" && root.name ? root.name : "model";
  const layers = root.layers.map((l, i) =>
    parseLayer(l as Record<string, unknown>, i));
  return { name, layers };
}
