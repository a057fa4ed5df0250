"""Quantized-network container and its on-disk formats.

A model is a versioned JSON manifest plus a raw weight blob: signed 8-bit,
little-endian, row-major [out][in][R][R] per layer at manifest-given
offsets, integrity-checked by sha256. Input images use the IDX convention
(big-endian header).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adc import round_half_up
from .mapping import LayerSpec, MappingError

MODEL_FORMAT = "cimsim-model"
MODEL_VERSION = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class ModelChecksumError(ModelFormatError):
    pass


class ModelBitwidthError(ModelFormatError):
    pass


@dataclass(frozen=True)
class QuantizedLayer:
    spec: LayerSpec
    weights: np.ndarray  # signed integers, shape per spec.kind
    requant_scale: float = 1.0  # accumulator -> next layer's input codes
    output_bits: int = 0  # 0: raw accumulators out (final layer)
    activation: str = "none"  # none | relu_clamp

    def __post_init__(self):
        w = np.asarray(self.weights)
        if self.spec.kind == "conv":
            expect = (self.spec.out_channels, self.spec.in_channels,
                      self.spec.kernel, self.spec.kernel)
        else:
            expect = (self.spec.out_channels, self.spec.in_channels)
        if w.shape != expect:
            raise ModelFormatError(
                f"layer {self.spec.name}: weight shape {w.shape} != {expect}")
        if self.requant_scale <= 0:
            raise ModelFormatError(f"layer {self.spec.name}: scale must be > 0")
        if self.activation not in ("none", "relu_clamp"):
            raise ModelFormatError(f"unknown activation: {self.activation}")
        _check_bitwidth(self.spec, w)


def _check_bitwidth(spec: LayerSpec, w: np.ndarray) -> None:
    if spec.encoding == "twos":
        lo, hi = -(1 << (spec.weight_bits - 1)), (1 << (spec.weight_bits - 1)) - 1
    else:
        hi = (1 << (spec.weight_bits - 1)) - 1
        lo = -hi
    if w.size and (w.min() < lo or w.max() > hi):
        raise ModelBitwidthError(
            f"layer {spec.name}: weight outside {spec.weight_bits}-bit "
            f"{spec.encoding} range [{lo}, {hi}]")


@dataclass(frozen=True)
class QuantizedNetwork:
    name: str
    layers: tuple[QuantizedLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ModelFormatError("network has no layers")

    @property
    def input_bits(self) -> int:
        return self.layers[0].spec.input_bits


_LAYER_KEYS = ("name", "kind", "in_channels", "out_channels", "kernel",
               "input_bits", "weight_bits", "encoding", "adc_mode",
               "input_height", "input_width", "stride", "padding")


def save_model(net: QuantizedNetwork, manifest_path, blob_path=None) -> None:
    manifest_path = Path(manifest_path)
    blob_path = Path(blob_path) if blob_path else manifest_path.with_name("weights.bin")
    blob = bytearray()
    layers = []
    for layer in net.layers:
        w = np.asarray(layer.weights, dtype=np.int8)
        entry = {k: getattr(layer.spec, k) for k in _LAYER_KEYS}
        entry.update({
            "blob_offset": len(blob),
            "blob_length": int(w.size),
            "requant_scale": float(layer.requant_scale),
            "output_bits": int(layer.output_bits),
            "activation": layer.activation,
        })
        layers.append(entry)
        blob.extend(w.tobytes())
    blob = bytes(blob)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "name": net.name,
        "layers": layers,
        "blob": {
            "file": blob_path.name,
            "length": len(blob),
            "sha256": hashlib.sha256(blob).hexdigest(),
        },
    }
    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(manifest_path, blob_path=None) -> QuantizedNetwork:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"manifest is not valid JSON: {e}") from e
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model manifest")
    if doc.get("version") != MODEL_VERSION:
        raise ModelVersionError(
            f"manifest version {doc.get('version')}, expected {MODEL_VERSION}")
    blob_info = doc["blob"]
    blob_path = Path(blob_path) if blob_path else manifest_path.parent / blob_info["file"]
    blob = blob_path.read_bytes()
    if len(blob) != blob_info["length"]:
        raise ModelChecksumError(
            f"blob is {len(blob)} bytes, manifest says {blob_info['length']}")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != blob_info["sha256"]:
        raise ModelChecksumError("blob sha256 mismatch")

    layers = []
    for entry in doc["layers"]:
        try:
            spec = LayerSpec(**{k: entry[k] for k in _LAYER_KEYS})
        except MappingError as e:
            raise ModelFormatError(str(e)) from e
        off, length = entry["blob_offset"], entry["blob_length"]
        if off < 0 or off + length > len(blob):
            raise ModelFormatError(f"layer {spec.name}: blob slice out of range")
        w = np.frombuffer(blob, dtype=np.int8, count=length, offset=off)
        if spec.kind == "conv":
            w = w.reshape(spec.out_channels, spec.in_channels, spec.kernel,
                          spec.kernel)
        else:
            w = w.reshape(spec.out_channels, spec.in_channels)
        layers.append(QuantizedLayer(
            spec=spec, weights=w.astype(np.int64),
            requant_scale=entry["requant_scale"],
            output_bits=entry["output_bits"],
            activation=entry["activation"]))
    return QuantizedNetwork(name=doc["name"], layers=tuple(layers))


class IdxFormatError(ValueError):
    pass


def load_idx_images(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise IdxFormatError("IDX image file too short for its header")
    magic, n, h, w = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"bad IDX image magic: {magic:#010x}")
    if n == 0:
        raise IdxFormatError("IDX image file holds zero images")
    if len(data) != 16 + n * h * w:
        raise IdxFormatError(
            f"IDX payload is {len(data) - 16} bytes, header implies {n * h * w}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, h, w)


def load_idx_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise IdxFormatError("IDX label file too short for its header")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"bad IDX label magic: {magic:#010x}")
    if n == 0:
        raise IdxFormatError("IDX label file holds zero labels")
    if len(data) != 8 + n:
        raise IdxFormatError(
            f"IDX payload is {len(data) - 8} bytes, header implies {n}")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def save_idx_images(images, path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise IdxFormatError("images must be (n, h, w)")
    n, h, w = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w)
                           + images.tobytes())


def save_idx_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise IdxFormatError("labels must be one-dimensional")
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size)
                           + labels.tobytes())


def quantize_images(images: np.ndarray, bits: int) -> np.ndarray:
    """Uniform requantization of 8-bit pixels to the first layer's input
    codes (identity at 8 bits)."""
    if not 1 <= bits <= 8:
        raise ValueError(f"unsupported input bitwidth: {bits}")
    images = np.asarray(images, dtype=np.uint8)
    if bits == 8:
        return images.astype(np.int64)
    top = (1 << bits) - 1
    return round_half_up(images.astype(np.float64) * top / 255.0).astype(np.int64)
