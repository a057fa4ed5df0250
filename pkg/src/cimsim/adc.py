"""Charge-injection SAR ADC model (7-bit differential / 6-bit single-ended).

The converter resolves the line difference by monotonic switching: every
comparison deducts charge from whichever side is currently higher, using a
bank of 16 unary charge-injection cells. The MSB fires the whole bank twice
(32 units), then 16/8/4/2/1, and the last bit is decided by comparison alone,
so the schedule totals 63 units across a 127-step offset-binary range.

Code convention: raw = 64 means zero differential. convert() treats a rising
(v_plus - v_minus) as a rising code. Single-ended operation pins the disabled
side's line at vdd, so the signal nominally spans the upper half of the code
range (raw - 64 in [0, 63]); the converter itself stays 7-bit, and comparator
offsets may push raw below 64, which downstream calibration removes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AnalogParams, MacroGeometry, default_analog_params, default_geometry

FIRING_SCHEDULE = (32, 16, 8, 4, 2, 1, 0)
# (first cell, last cell, firings per cell) backing each schedule entry.
_CELL_SPANS = ((0, 16, 2), (0, 16, 1), (0, 8, 1), (0, 4, 1), (0, 2, 1), (0, 1, 1))
_TIE_SNAP = 1e-9  # LSB; residuals this close to a comparison threshold are exact ties


@dataclass(frozen=True)
class AdcParams:
    bits: int = 7
    ci_cells: int = 16
    fullscale: float = 0.0  # single-ended signal span, volts
    unit_step: float = 0.0  # volts per CI firing unit = one LSB
    v_top: float = 1.2  # precharge rail; pins the disabled side in single mode

    @classmethod
    def from_analog(cls, params: AnalogParams | None = None,
                    geometry: MacroGeometry | None = None) -> "AdcParams":
        params = params or default_analog_params()
        geometry = geometry or default_geometry()
        n = geometry.clusters_per_slice
        span = 15 * n * params.dac_step * params.c_mom / (n * params.c_mom + params.c_p)
        return cls(fullscale=span, unit_step=span / 64, v_top=params.vdd)

    def __post_init__(self):
        if self.fullscale and abs(self.unit_step - self.fullscale / 64) > 1e-15:
            raise ValueError("unit_step ≠ fullscale/64")
        assert sum(FIRING_SCHEDULE) == 63


@dataclass(frozen=True)
class AdcCode:
    raw: int
    mode: str  # "single" | "differential"
    saturated: bool = False
    firings: tuple = ()

    @property
    def value(self) -> int:
        """Zero-referenced code: raw - 64 in both modes."""
        return self.raw - 64


def round_half_up(x):
    """Round to nearest with .5 away from minus infinity (global convention)."""
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def ideal_quantize(pre_adc_diff, mode: str, lsb_pre: float = 30) -> AdcCode:
    """Arithmetic oracle: raw = clamp(64 + round_half_up(diff / lsb), 0, 127)."""
    _check_mode(mode)
    if mode == "single" and pre_adc_diff < 0:
        raise ValueError("single mode requires a non-negative input")
    unclamped = 64 + int(round_half_up(pre_adc_diff / lsb_pre))
    raw = min(max(unclamped, 0), 127)
    return AdcCode(raw=raw, mode=mode, saturated=unclamped != raw)


def ideal_quantize_array(pre_adc_diff, lsb_pre: float = 30):
    """Vector form of the oracle; returns raw codes without clamp flags."""
    unclamped = 64 + round_half_up(np.asarray(pre_adc_diff, dtype=float) / lsb_pre)
    return np.clip(unclamped, 0, 127).astype(np.int64)


def _check_mode(mode):
    if mode not in ("single", "differential"):
        raise ValueError(f"unknown ADC mode: {mode}")


def _deductions(cell_errors) -> np.ndarray:
    """Per-step deduction in units, from the 16 per-cell mismatch factors."""
    cells = np.asarray(cell_errors, dtype=float)
    ded = [f * cells[a:b].sum() for a, b, f in _CELL_SPANS]
    return np.array(ded + [0.0])


IDEAL_DEDUCTIONS = _deductions(np.ones(16))


def convert_array(v_plus, v_minus, adc: AdcParams, mode: str, profile=None,
                  adc_index: int = 0, rng=None):
    """Vectorized SAR conversion. Returns (raw codes, saturated flags).

    Residuals are tracked in LSB units with a built-in half-LSB bias so the
    noise-free transfer lands exactly on round_half_up; comparison ties
    resolve to bit = 1. The profile supplies the comparator offset, the
    per-comparison noise sigma, and the CI-cell mismatch of this ADC.
    """
    _check_mode(mode)
    v_plus = np.asarray(v_plus, dtype=float)
    v_minus = np.asarray(v_minus, dtype=float)
    r = (v_plus - v_minus) / adc.unit_step + 0.5
    noise_sigma = 0.0
    ded = IDEAL_DEDUCTIONS
    if profile is not None:
        r = r + profile.comparator_offset_lsb[adc_index]
        noise_sigma = profile.comparator_noise_sigma
        ded = profile.adc_deductions[adc_index]
    snapped = np.round(r)
    r = np.where(np.abs(r - snapped) < _TIE_SNAP, snapped, r)
    saturated = (r >= 64.0) | (r < -64.0)

    raw = np.zeros(np.shape(r), dtype=np.int64)
    for j, units in enumerate(FIRING_SCHEDULE):
        observed = r
        if noise_sigma:
            if rng is None:
                raise ValueError("comparator noise requires an rng")
            observed = r + rng.normal(0.0, noise_sigma, size=np.shape(r))
        hi = observed >= 0.0
        raw = raw + (hi.astype(np.int64) << (6 - j))
        if units:
            r = np.where(hi, r - ded[j], r + ded[j])
    return raw, saturated


def convert(v_plus: float, v_minus: float, adc: AdcParams, mode: str,
            profile=None, adc_index: int = 0, rng=None) -> AdcCode:
    """Scalar conversion with a firing log (step, units, cells, firings, side)."""
    _check_mode(mode)
    r = (v_plus - v_minus) / adc.unit_step + 0.5
    noise_sigma = 0.0
    ded = IDEAL_DEDUCTIONS
    if profile is not None:
        r += profile.comparator_offset_lsb[adc_index]
        noise_sigma = profile.comparator_noise_sigma
        ded = profile.adc_deductions[adc_index]
    snapped = round(r)
    if abs(r - snapped) < _TIE_SNAP:
        r = snapped
    saturated = r >= 64.0 or r < -64.0

    raw = 0
    firings = []
    for j, units in enumerate(FIRING_SCHEDULE):
        observed = r
        if noise_sigma:
            if rng is None:
                raise ValueError("comparator noise requires an rng")
            observed = r + rng.normal(0.0, noise_sigma)
        hi = observed >= 0.0
        raw += int(hi) << (6 - j)
        if units:
            first, last, per_cell = _CELL_SPANS[j]
            firings.append((j, units, last - first, per_cell,
                            "plus" if hi else "minus"))
            r = r - ded[j] if hi else r + ded[j]
    return AdcCode(raw=raw, mode=mode, saturated=bool(saturated),
                   firings=tuple(firings))


def measure_rms(v: float, adc: AdcParams, profile, runs: int = 128,
                rng=None, mode: str = "single", adc_index: int = 0) -> float:
    """Code spread (population std, in LSB) over repeated conversions of one
    line voltage, single-ended against the pinned rail."""
    if rng is None and profile is not None and profile.comparator_noise_sigma:
        raise ValueError("comparator noise requires an rng")
    v_arr = np.full(runs, v, dtype=float)
    raw, _ = convert_array(np.full(runs, adc.v_top), v_arr, adc, mode,
                           profile=profile, adc_index=adc_index, rng=rng)
    return float(np.std(raw))
