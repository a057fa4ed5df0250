"""End-to-end inference on the mapped macro model.

Three execution modes share one lowering path (im2col patches, nibble
passes, row-group jobs, shift-add recombination) and differ only at the
quantizer: pass_through keeps exact integer partials, ideal applies the
ideal converter transfer, variation runs the full analog signal chain with
a sampled mismatch profile and optional calibration read-back.

Accumulators live in pre-ADC integer units throughout (one ADC LSB is 30
units), so requantization scales mean the same thing in every mode.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .adc import AdcParams, convert_array, round_half_up
from .analog import slice_signal
from .calibration import CalibrationTable, calibrate
from .config import (AnalogParams, MacroGeometry, default_analog_params,
                     default_geometry)
from .mapping import (LayerMapping, NetworkMapping, map_network,
                      nibble_passes, write_layer, empty_cells)
from .model import QuantizedNetwork, quantize_images
from .variation import VariationSpec, ideal_profile, sample_profile

MODES = ("pass_through", "ideal", "variation")
CALIB_METHODS = ("none", "linear", "two-step")


class InvariantViolation(RuntimeError):
    """A runtime self-check failed; the simulation result is not trustworthy."""


@dataclass(frozen=True)
class RunReport:
    mode: str
    seed: int
    calib: str
    config_hash: str
    predictions: np.ndarray
    logits: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    layer_cycles: tuple[dict, ...] = ()
    cycles_per_image: int = 0
    saturated_conversions: int = 0

    @property
    def images(self) -> int:
        return int(self.predictions.size)

    @property
    def correct(self) -> int | None:
        if self.labels is None:
            return None
        return int(np.sum(self.predictions == self.labels))

    @property
    def accuracy(self) -> float | None:
        if self.labels is None:
            return None
        return self.correct / self.images

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "calib": self.calib,
            "config_hash": self.config_hash,
            "images": self.images,
            "accuracy": self.accuracy,
            "correct": self.correct,
            "cycles_per_image": self.cycles_per_image,
            "total_cycles": self.cycles_per_image * self.images,
            "saturated_conversions": self.saturated_conversions,
            "layer_cycles": list(self.layer_cycles),
            "predictions": [int(p) for p in self.predictions],
        }
        if self.labels is not None:
            doc["labels"] = [int(l) for l in self.labels]
        return doc


def config_digest(geometry: MacroGeometry, analog: AnalogParams,
                  variation: VariationSpec, mode: str, seed: int,
                  calib: str, model_name: str) -> str:
    doc = {
        "geometry": vars(geometry), "analog": vars(analog),
        "variation": vars(variation), "mode": mode, "seed": seed,
        "calib": calib, "model": model_name,
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _im2col(acts: np.ndarray, spec) -> np.ndarray:
    """Patch matrix (batch, positions, filter_length), channel-major within
    a patch to match the blob's [in][R][R] filter order."""
    if spec.kind == "fc":
        flat = acts.reshape(acts.shape[0], -1)
        if flat.shape[1] != spec.in_channels:
            raise ValueError(f"layer {spec.name}: got {flat.shape[1]} input "
                             f"features, expected {spec.in_channels}")
        return flat[:, None, :]
    b, c, h, w = acts.shape
    if c != spec.in_channels or h != spec.input_height or w != spec.input_width:
        raise ValueError(f"layer {spec.name}: input shape {(c, h, w)} does not "
                         "match the layer spec")
    if spec.padding:
        acts = np.pad(acts, ((0, 0), (0, 0), (spec.padding, spec.padding),
                             (spec.padding, spec.padding)))
    windows = np.lib.stride_tricks.sliding_window_view(
        acts, (spec.kernel, spec.kernel), axis=(2, 3))
    windows = windows[:, :, ::spec.stride, ::spec.stride]
    _, _, oh, ow, _, _ = windows.shape
    patches = windows.transpose(0, 2, 3, 1, 4, 5)
    return np.ascontiguousarray(patches).reshape(b, oh * ow, -1)


def _requantize(acc: np.ndarray, layer) -> np.ndarray:
    """Pre-ADC-unit accumulators to the next layer's input codes (round,
    then ReLU-style clamp into the declared bitwidth)."""
    if layer.output_bits == 0:
        return acc
    top = (1 << layer.output_bits) - 1
    scaled = round_half_up(acc.astype(np.float64) * layer.requant_scale)
    return np.clip(scaled, 0, top).astype(np.int64)


@dataclass
class _RowJob:
    group: int
    split: int
    macro: int
    filters: np.ndarray  # (units,)
    plane_shift: np.ndarray  # (units,) significance of each unit's plane
    negate: np.ndarray  # (units,) bool, 2's-complement MSB planes
    slice_ids: np.ndarray  # (units,) plus-side physical slice per unit
    adc_ids: np.ndarray  # (units,)
    bits_plus: np.ndarray  # (units, cols)
    bits_minus: np.ndarray | None  # ternary only


def _build_jobs(mapping: LayerMapping, cells: np.ndarray,
                geometry: MacroGeometry) -> list[_RowJob]:
    spec = mapping.layer
    jobs = []
    for g in range(mapping.filter_groups):
        units = mapping.group_units(g)
        for s in range(mapping.splits):
            macro, row = mapping.row_of(g, s, geometry)
            filters = np.array([u.filter for u in units])
            planes = np.array([u.plane for u in units])
            rotated = np.array([mapping.unit_for(u, s) for u in units])
            if spec.encoding == "twos":
                slice_ids = rotated
                bits_plus = cells[macro, row, slice_ids].astype(np.int64)
                bits_minus = None
                negate = planes == spec.weight_bits - 1
                adc_ids = slice_ids // 2
            else:
                slice_ids = 2 * rotated
                bits_plus = cells[macro, row, slice_ids].astype(np.int64)
                bits_minus = cells[macro, row, slice_ids + 1].astype(np.int64)
                negate = np.zeros(len(units), dtype=bool)
                adc_ids = rotated
            jobs.append(_RowJob(group=g, split=s, macro=macro, filters=filters,
                                plane_shift=planes, negate=negate,
                                slice_ids=slice_ids, adc_ids=adc_ids,
                                bits_plus=bits_plus, bits_minus=bits_minus))
    return jobs


class _Macro:
    """One physical macro instance: mismatch profile, calibration table,
    and its own noise stream."""

    def __init__(self, profile, table: CalibrationTable | None, rng):
        self.profile = profile
        self.table = table
        self.rng = rng


class Engine:
    def __init__(self, net: QuantizedNetwork, mode: str, seed: int = 0,
                 calib: str = "none",
                 geometry: MacroGeometry | None = None,
                 analog: AnalogParams | None = None,
                 variation: VariationSpec | None = None,
                 calib_repeats: int = 8, check_bounds: bool = True):
        if mode not in MODES:
            raise ValueError(f"unknown mode: {mode}")
        if calib not in CALIB_METHODS:
            raise ValueError(f"unknown calibration method: {calib}")
        if mode != "variation" and calib != "none":
            raise ValueError("calibration only applies to variation mode")
        self.net = net
        self.mode = mode
        self.seed = seed
        self.calib = calib
        self.geometry = geometry or default_geometry()
        self.analog = analog or default_analog_params()
        self.variation = variation or VariationSpec()
        self.adc = AdcParams.from_analog(self.analog, self.geometry)
        self.check_bounds = check_bounds
        self.saturated = 0

        for layer in net.layers[:-1]:
            if layer.output_bits < 1:
                raise ValueError(
                    f"hidden layer {layer.spec.name} must requantize")

        self.mapping: NetworkMapping = map_network(
            [l.spec for l in net.layers], self.geometry)
        cells = empty_cells(self.mapping.macros_needed, self.geometry)
        occupancy = np.zeros_like(cells)
        for layer, m in zip(net.layers, self.mapping.mappings):
            write_layer(m, layer.weights, cells, occupancy, self.geometry)
        self.jobs = [_build_jobs(m, cells, self.geometry)
                     for m in self.mapping.mappings]

        self.macros: list[_Macro] = []
        if mode == "variation":
            root = np.random.SeedSequence(seed)
            for child in root.spawn(self.mapping.macros_needed):
                profile_seed, calib_seed, run_seed = child.spawn(3)
                profile = sample_profile(self.variation, self.geometry,
                                         seed=profile_seed,
                                         adc_params=self.adc)
                table = None
                if calib != "none":
                    table = calibrate(profile, self.analog, self.geometry,
                                      method=calib, repeats=calib_repeats,
                                      seed=calib_seed)
                self.macros.append(_Macro(profile, table,
                                          np.random.default_rng(run_seed)))
        else:
            prof = ideal_profile(self.geometry)
            for _ in range(self.mapping.macros_needed):
                self.macros.append(_Macro(prof, None, None))

    # one unit column in one mode -> partial value in pre-ADC units
    def _quantize_ideal(self, d: np.ndarray, mode: str) -> np.ndarray:
        lsb = self.analog.adc_lsb_pre
        code = round_half_up(d / lsb)
        lo, hi = (0, 63) if mode == "single" else (-64, 63)
        clipped = np.clip(code, lo, hi)
        sat = clipped != code
        self.saturated += int(sat.sum())
        if self.check_bounds:
            err = np.abs(lsb * clipped - d)
            if np.any(err[~sat] > lsb / 2):
                raise InvariantViolation(
                    "ideal conversion strayed past half an LSB")
        return lsb * clipped

    def _quantize_variation(self, d_plus, d_minus, macro: _Macro,
                            slice_id: int, adc_id: int, mode: str) -> np.ndarray:
        p = macro.profile
        s_p = slice_signal(d_plus, self.analog, self.geometry,
                           gain=p.gain[slice_id],
                           line_offset_v=p.line_offset_v[slice_id])
        if mode == "single":
            v_plus = np.full(s_p.shape, self.adc.v_top)
            v_minus = self.analog.vdd - s_p
            pair = [slice_id]
        else:
            s_m = slice_signal(d_minus, self.analog, self.geometry,
                               gain=p.gain[slice_id + 1],
                               line_offset_v=p.line_offset_v[slice_id + 1])
            v_plus = self.analog.vdd - s_m
            v_minus = self.analog.vdd - s_p
            pair = [slice_id, slice_id + 1]
        raw, sat = convert_array(v_plus, v_minus, self.adc, mode, profile=p,
                                 adc_index=adc_id, rng=macro.rng)
        self.saturated += int(sat.sum())
        code = (raw - 64).astype(np.float64)
        if macro.table is not None:
            code = round_half_up(macro.table.apply(code, pair))
        lo, hi = (0, 63) if mode == "single" else (-64, 63)
        return self.analog.adc_lsb_pre * np.clip(code, lo, hi)

    def _layer_forward(self, index: int, acts: np.ndarray) -> np.ndarray:
        layer = self.net.layers[index]
        spec = layer.spec
        patches = _im2col(acts, spec)
        b, positions, length = patches.shape
        x = patches.reshape(b * positions, length)
        pad = self.mapping.mappings[index].splits * self.geometry.cols - length
        if pad:
            x = np.pad(x, ((0, 0), (0, pad)))

        passes = nibble_passes(spec.input_bits)
        acc = np.zeros((spec.out_channels, b * positions),
                       dtype=np.int64 if self.mode != "variation" else np.float64)
        for nibble in range(passes):
            codes = x if passes == 1 else (x & 15 if nibble == 0 else x >> 4)
            for job in self.jobs[index]:
                seg = codes[:, job.split * self.geometry.cols:
                            (job.split + 1) * self.geometry.cols]
                d_plus = seg @ job.bits_plus.T  # (N, units)
                d_minus = (seg @ job.bits_minus.T
                           if job.bits_minus is not None else None)
                if self.mode == "pass_through":
                    vals = (d_plus if d_minus is None else d_plus - d_minus)
                elif self.mode == "ideal":
                    d = d_plus if d_minus is None else d_plus - d_minus
                    vals = self._quantize_ideal(d, spec.adc_mode)
                else:
                    macro = self.macros[job.macro]
                    cols = []
                    for u in range(job.filters.size):
                        dm = (np.zeros_like(d_plus[:, u]) if d_minus is None
                              else d_minus[:, u])
                        cols.append(self._quantize_variation(
                            d_plus[:, u], dm, macro,
                            int(job.slice_ids[u]), int(job.adc_ids[u]),
                            spec.adc_mode))
                    vals = np.stack(cols, axis=1)
                signed = np.where(job.negate, -vals, vals)
                weighted = signed * (1 << job.plane_shift) * (16 ** nibble)
                np.add.at(acc, job.filters, weighted.T)

        out_c, oh, ow = spec.output_shape()
        acc = acc.T.reshape(b, positions, out_c).transpose(0, 2, 1)
        acc = acc.reshape(b, out_c, oh, ow)
        return _requantize(acc, layer)

    def forward(self, codes: np.ndarray) -> np.ndarray:
        """Batch of layer-0 input codes (b, c, h, w) -> final accumulators."""
        acts = codes
        for i in range(len(self.net.layers)):
            acts = self._layer_forward(i, acts)
        return acts.reshape(acts.shape[0], -1)


def run_inference(net: QuantizedNetwork, images: np.ndarray,
                  mode: str = "ideal", seed: int = 0, calib: str = "none",
                  labels: np.ndarray | None = None,
                  geometry: MacroGeometry | None = None,
                  analog: AnalogParams | None = None,
                  variation: VariationSpec | None = None,
                  batch_size: int = 64, calib_repeats: int = 8,
                  check_bounds: bool = True) -> RunReport:
    geometry = geometry or default_geometry()
    analog = analog or default_analog_params()
    variation = variation or VariationSpec()
    engine = Engine(net, mode, seed=seed, calib=calib, geometry=geometry,
                    analog=analog, variation=variation,
                    calib_repeats=calib_repeats, check_bounds=check_bounds)
    codes = quantize_images(images, net.input_bits)[:, None, :, :]
    logits = []
    for start in range(0, codes.shape[0], batch_size):
        logits.append(engine.forward(codes[start:start + batch_size]))
    logits = np.concatenate(logits, axis=0)
    predictions = np.argmax(logits, axis=1)
    sched = engine.mapping.schedule()
    return RunReport(
        mode=mode, seed=seed, calib=calib,
        config_hash=config_digest(geometry, analog, variation, mode, seed,
                                  calib, net.name),
        predictions=predictions, logits=logits,
        labels=None if labels is None else np.asarray(labels),
        layer_cycles=tuple(sched["layers"]),
        cycles_per_image=sched["total_cycles"],
        saturated_conversions=engine.saturated)


def integer_reference(net: QuantizedNetwork, images: np.ndarray,
                      labels: np.ndarray | None = None) -> RunReport:
    """Plain integer MAC inference, no macro model: the equivalence target
    for pass_through mode."""
    codes = quantize_images(images, net.input_bits)[:, None, :, :]
    acts = codes
    for layer in net.layers:
        spec = layer.spec
        patches = _im2col(acts, spec)
        flat_w = np.asarray(layer.weights, dtype=np.int64).reshape(
            spec.out_channels, -1)
        acc = patches @ flat_w.T  # (b, positions, out)
        out_c, oh, ow = spec.output_shape()
        acc = acc.transpose(0, 2, 1).reshape(acts.shape[0], out_c, oh, ow)
        acts = _requantize(acc, layer)
    logits = acts.reshape(acts.shape[0], -1)
    predictions = np.argmax(logits, axis=1)
    return RunReport(
        mode="integer_reference", seed=0, calib="none", config_hash="",
        predictions=predictions, logits=logits,
        labels=None if labels is None else np.asarray(labels))
