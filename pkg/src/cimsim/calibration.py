"""Transfer-curve characterization and the two-step calibration flow.

Step one fits every slice's measured transfer y_i = k_i * x + b_i and reads
back (y - b) / k. Step two builds a master curve from the cross-slice median
residual per output code and subtracts it, absorbing the systematic
nonlinearity the linear fit cannot see. Sweeps drive the ADC differentially
with the idle side pinned, so comparator offsets stay visible (no bottom
clamp) over the 0..1920 pre-ADC range.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .adc import AdcParams, convert_array, round_half_up
from .analog import slice_signal
from .config import (AnalogParams, MacroGeometry, default_analog_params,
                     default_geometry)
from .variation import VariationProfile

CALIBRATION_FORMAT = "cimsim-calibration"
CALIBRATION_VERSION = 1


class CalibrationError(ValueError):
    pass


def fit_linear(ideal_codes, measured_codes) -> tuple[float, float]:
    """Least-squares gain/offset of one slice's transfer curve."""
    x = np.asarray(ideal_codes, dtype=float)
    y = np.asarray(measured_codes, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise CalibrationError("need at least two sweep points")
    dx = x - x.mean()
    sxx = np.dot(dx, dx)
    if sxx == 0:
        raise CalibrationError("degenerate sweep: all inputs identical")
    k = np.dot(dx, y - y.mean()) / sxx
    b = y.mean() - k * x.mean()
    return float(k), float(b)


@dataclass(frozen=True)
class MasterCurve:
    codes: np.ndarray  # knot positions, output-code domain
    correction: np.ndarray  # median residual per knot

    def apply(self, codes):
        """Subtract the systematic residual; odd-extended for negative codes
        (the converter is differential around code 0)."""
        codes = np.asarray(codes, dtype=float)
        corr = np.interp(np.abs(codes), self.codes, self.correction)
        return codes - np.sign(codes) * corr


def fit_master_curve(bucket_codes, residuals, domain: int = 64) -> MasterCurve:
    """Median residual per output-code bucket, gaps interpolated, and the
    resulting correction map forced monotone non-decreasing."""
    bucket_codes = np.asarray(bucket_codes)
    residuals = np.asarray(residuals, dtype=float)
    knots = np.arange(domain, dtype=float)
    medians = np.full(domain, np.nan)
    for c in range(domain):
        hit = residuals[bucket_codes == c]
        if hit.size:
            medians[c] = np.median(hit)
    have = ~np.isnan(medians)
    if not have.any():
        raise CalibrationError("no residuals to fit a master curve")
    medians = np.interp(knots, knots[have], medians[have])
    corrected = np.maximum.accumulate(knots - medians)
    return MasterCurve(codes=knots, correction=knots - corrected)


@dataclass(frozen=True)
class CalibrationTable:
    gain: np.ndarray  # (slices,)
    offset: np.ndarray  # (slices,)
    master: MasterCurve | None = None

    @property
    def method(self) -> str:
        return "two-step" if self.master is not None else "linear"

    def apply(self, codes, slice_index):
        """Read back zero-referenced codes of one slice (or of a slice pair
        in differential mode, using the pair-mean gain and offset)."""
        codes = np.asarray(codes, dtype=float)
        slices = np.atleast_1d(np.asarray(slice_index))
        k = self.gain[slices].mean()
        b = self.offset[slices].mean()
        out = (codes - b) / k
        if self.master is not None:
            out = self.master.apply(out)
        return out

    def to_json(self) -> str:
        doc = {
            "format": CALIBRATION_FORMAT,
            "version": CALIBRATION_VERSION,
            "method": self.method,
            "slices": [
                {"slice": i, "gain": float(k), "offset": float(b)}
                for i, (k, b) in enumerate(zip(self.gain, self.offset))
            ],
            "master_curve": None if self.master is None else {
                "codes": [float(c) for c in self.master.codes],
                "correction": [float(c) for c in self.master.correction],
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationTable":
        doc = json.loads(text)
        if doc.get("format") != CALIBRATION_FORMAT:
            raise CalibrationError("not a calibration table")
        if doc.get("version") != CALIBRATION_VERSION:
            raise CalibrationError(
                f"unsupported calibration version: {doc.get('version')}")
        entries = sorted(doc["slices"], key=lambda e: e["slice"])
        if [e["slice"] for e in entries] != list(range(len(entries))):
            raise CalibrationError("slice ids must be dense from 0")
        gain = np.array([e["gain"] for e in entries])
        offset = np.array([e["offset"] for e in entries])
        if np.any(gain == 0):
            raise CalibrationError("zero gain in calibration table")
        master = None
        if doc.get("master_curve"):
            mc = doc["master_curve"]
            master = MasterCurve(codes=np.array(mc["codes"]),
                                 correction=np.array(mc["correction"]))
        return cls(gain=gain, offset=offset, master=master)


def sweep_codes(profile: VariationProfile, pre_adc_values,
                analog: AnalogParams | None = None,
                geometry: MacroGeometry | None = None,
                repeats: int = 16, seed=0,
                switching_error: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Measured mean zero-referenced code per (slice, sweep point).

    Each slice is driven differentially against its idle pair partner, the
    same configuration a differential MAC sees, so the fitted offset absorbs
    both line offsets and the comparator offset of the shared ADC.

    Also returns an in-range mask: False where the conversion railed, since a
    railed code carries no transfer-curve information. High-gain slices rail
    below the top of the sweep, so characterization must drop those points.
    """
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    adc = AdcParams.from_analog(analog, geometry)
    x = np.asarray(pre_adc_values, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty((geometry.slices, x.size))
    ok = np.empty((geometry.slices, x.size), dtype=bool)
    for i in range(geometry.slices):
        s = slice_signal(x, analog, geometry, gain=profile.gain[i],
                         line_offset_v=profile.line_offset_v[i],
                         switching_error=switching_error)
        idle = analog.vdd - profile.line_offset_v[i ^ 1]
        v_minus = np.repeat(analog.vdd - s, repeats)
        v_plus = np.full(v_minus.shape, idle)
        raw, sat = convert_array(v_plus, v_minus, adc, "differential",
                                 profile=profile, adc_index=i // 2, rng=rng)
        out[i] = (raw - 64).reshape(x.size, repeats).mean(axis=1)
        ok[i] = ~sat.reshape(x.size, repeats).any(axis=1)
    return out, ok


def calibrate(profile: VariationProfile, analog: AnalogParams | None = None,
              geometry: MacroGeometry | None = None, method: str = "two-step",
              repeats: int = 16, seed=0) -> CalibrationTable:
    """Full calibration procedure over the 0..1920 pre-ADC sweep."""
    if method not in ("linear", "two-step"):
        raise CalibrationError(f"unknown calibration method: {method}")
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    x = np.arange(15 * geometry.clusters_per_slice + 1)
    ideal = round_half_up(x / analog.adc_lsb_pre)
    measured, ok = sweep_codes(profile, x, analog, geometry, repeats=repeats,
                               seed=seed)
    fits = [fit_linear(ideal[keep], row[keep])
            for row, keep in zip(measured, ok)]
    gain = np.array([k for k, _ in fits])
    offset = np.array([b for _, b in fits])
    if np.any(gain == 0):
        raise CalibrationError("zero fitted gain")
    master = None
    if method == "two-step":
        linear = (measured - offset[:, None]) / gain[:, None]
        resid = (linear - ideal).ravel()
        buckets = np.broadcast_to(ideal, measured.shape).ravel().astype(int)
        keep = ok.ravel() & (buckets < 64)  # top bucket is partial anyway
        master = fit_master_curve(buckets[keep], resid[keep])
    return CalibrationTable(gain=gain, offset=offset, master=master)


def inl_profile(profile: VariationProfile, table: CalibrationTable,
                analog: AnalogParams | None = None,
                geometry: MacroGeometry | None = None,
                repeats: int = 16, seed=1) -> dict:
    """Post-calibration INL per (slice, output code) over the full sweep.

    INL(c) is the mean calibrated read-back minus c across the in-range sweep
    points whose ideal code is c. Codes a slice cannot reach before railing
    are NaN: the converter has no transfer curve there to be nonlinear about.
    Returns per-code INL, per-slice max |INL|, and the cross-slice envelope.
    """
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    x = np.arange(15 * geometry.clusters_per_slice + 1)
    ideal = round_half_up(x / analog.adc_lsb_pre).astype(int)
    measured, ok = sweep_codes(profile, x, analog, geometry, repeats=repeats,
                               seed=seed)
    inl = np.full((geometry.slices, 64), np.nan)
    for i in range(geometry.slices):
        calibrated = table.apply(measured[i], i)
        for c in range(64):
            sel = (ideal == c) & ok[i]
            if sel.any():
                inl[i, c] = calibrated[sel].mean() - c
    max_per_slice = np.nanmax(np.abs(inl), axis=1)
    with warnings.catch_warnings():
        # codes unreachable on every slice leave all-NaN columns, which is
        # the documented meaning, not an error
        warnings.simplefilter("ignore", RuntimeWarning)
        code_mean = np.nanmean(inl, axis=0)
        code_sigma = np.nanstd(inl, axis=0)
    return {
        "inl": inl,
        "max_abs_per_slice": max_per_slice,
        "max_abs": float(max_per_slice.max()),
        "code_mean": code_mean,
        "code_sigma": code_sigma,
    }


@dataclass(frozen=True)
class ErrorHistogram:
    errors: np.ndarray  # integer code errors, one per sample
    mean: float
    sigma: float
    total_samples: int


def error_histogram(profile: VariationProfile,
                    table: CalibrationTable | None = None,
                    analog: AnalogParams | None = None,
                    geometry: MacroGeometry | None = None,
                    sets: int = 16, patterns_per_set: int = 64,
                    repeats: int = 16, seed=0) -> ErrorHistogram:
    """MAC-code error distribution over the staged random-input protocol.

    Set k draws patterns_per_set 128-lane inputs with per-element codes from
    N(k-1, 2), rounded and clipped to [0, 15]; each pattern is measured on
    every ADC (all-ones weights on the plus slice, minus slice idle) repeats
    times, the configuration the calibration sweep characterizes, so the plus
    slice's own fit applies. The full protocol is sets * patterns * adcs *
    repeats samples.
    """
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    adc = AdcParams.from_analog(analog, geometry)
    rng = np.random.default_rng(seed)
    n = geometry.clusters_per_slice

    errors = []
    for k in range(sets):
        draws = rng.normal(k, 2.0, size=(patterns_per_set, n))
        codes = np.clip(round_half_up(draws), 0, 15)
        d = codes.sum(axis=1)  # ideal pre-ADC value per pattern
        ideal = round_half_up(d / analog.adc_lsb_pre)
        for a in range(geometry.slice_pairs):
            plus, minus = 2 * a, 2 * a + 1
            s_p = slice_signal(d, analog, geometry, gain=profile.gain[plus],
                               line_offset_v=profile.line_offset_v[plus])
            s_m = slice_signal(np.zeros_like(d), analog, geometry,
                               gain=profile.gain[minus],
                               line_offset_v=profile.line_offset_v[minus])
            v_plus = np.repeat(analog.vdd - s_m, repeats)
            v_minus = np.repeat(analog.vdd - s_p, repeats)
            raw, _ = convert_array(v_plus, v_minus, adc, "differential",
                                   profile=profile, adc_index=a, rng=rng)
            out = (raw - 64).astype(float)
            if table is not None:
                out = round_half_up(table.apply(out, plus))
            errors.append(out - np.repeat(ideal, repeats))
    errors = np.concatenate(errors).astype(np.int64)
    expected = sets * patterns_per_set * geometry.slice_pairs * repeats
    assert errors.size == expected
    return ErrorHistogram(errors=errors, mean=float(errors.mean()),
                          sigma=float(errors.std()), total_samples=errors.size)


def affine_r_squared(x, y) -> float:
    """Coefficient of determination of the best affine fit y ~ k*x + b."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k, b = fit_linear(x, y)
    ss_res = np.sum((y - (k * x + b)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        return 1.0
    return float(1.0 - ss_res / ss_tot)
