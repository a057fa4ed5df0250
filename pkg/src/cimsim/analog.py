"""Charge-domain model of one slice: DAC sampling, in-cluster multiply,
charge-sharing accumulation, and the switching-error terms.

Voltages follow the line convention: a code of 0 leaves the capacitor at
vdd, so the signal magnitude is always (vdd - v). All error formulas work
elementwise on numpy arrays as well as scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import AnalogParams, MacroGeometry


@dataclass(frozen=True)
class InputVector:
    """One 128-lane activation vector, 4-bit codes per lane."""

    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        object.__setattr__(self, "codes", codes)
        if codes.ndim != 1:
            raise ValueError("input vector must be one-dimensional")
        if np.any((codes < 0) | (codes > 15)):
            raise ValueError("input code outside [0, 15]")


@dataclass(frozen=True)
class SliceBits:
    """Weight bits stored in one cluster row of a slice."""

    bits: np.ndarray
    cluster_row: int = 0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int64)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1:
            raise ValueError("slice bits must be one-dimensional")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("weight bit outside {0, 1}")
        if self.cluster_row < 0:
            raise ValueError("negative cluster_row")


@dataclass(frozen=True)
class SliceVoltage:
    """Accumulated output-line voltage plus the ideal integer MAC it encodes."""

    v_out: float
    pre_adc_value: int = 0


def dac_convert(code, params: AnalogParams):
    """4-bit input code -> sampled capacitor voltage vdd - code*dac_step."""
    code = np.asarray(code)
    if np.any((code < 0) | (code > 15)):
        raise ValueError("input code outside [0, 15]")
    return params.vdd - code * params.dac_step


def multiply_bit(v_in, weight_bit, params: AnalogParams):
    """AND-style multiply: a stored 0 pulls the capacitor back to vdd,
    a stored 1 keeps the sampled voltage."""
    v_in = np.asarray(v_in, dtype=float)
    weight_bit = np.asarray(weight_bit)
    if np.any((weight_bit != 0) & (weight_bit != 1)):
        raise ValueError("weight bit outside {0, 1}")
    return np.where(weight_bit == 1, v_in, params.vdd)


def coupling_error_mom(params: AnalogParams) -> float:
    """Gate-coupling step seen by one local capacitor when its switch toggles."""
    return params.c_gs / (params.c_gs + params.c_mom) * params.vdd


def coupling_error_out(params: AnalogParams, geometry: MacroGeometry) -> float:
    """Gate-coupling step on the shared output line, per cluster switch."""
    c_share = params.c_p / geometry.clusters_per_slice
    return params.c_gs / (params.c_gs + c_share) * params.vdd


def charge_injection_error(v_mom, params: AnalogParams):
    """Channel-charge injection onto one local capacitor at switch-off.

    Half the channel charge lands on the capacitor; the overdrive term
    (vdd - v_th - v_mom) vanishes when the switch barely conducts.
    """
    v_mom = np.asarray(v_mom, dtype=float)
    return params.ci_channel_cap * (params.vdd - params.v_th - v_mom) / (2 * params.c_mom)


def _switching_error_raw(v_mom, params: AnalogParams, geometry: MacroGeometry):
    n = geometry.clusters_per_slice
    num = (params.c_p * coupling_error_out(params, geometry)
           - n * params.c_mom * charge_injection_error(v_mom, params))
    return num / (n * params.c_mom + params.c_p)


def net_switching_error(v_mom, params: AnalogParams, geometry: MacroGeometry):
    """Residual output-line error from switch edges, after offset tuning.

    The coupling and injection contributions combine into an operating-point
    dependent term; hardware trims the switch sizing until the error is zero
    with every input at code 0 (all capacitors at vdd). The model applies the
    same trim by referencing the combined term to that all-zero point, which
    leaves only the input-dependent part.
    """
    return (_switching_error_raw(v_mom, params, geometry)
            - _switching_error_raw(params.vdd, params, geometry))


def accumulate(v_moms, params: AnalogParams, geometry: MacroGeometry,
               switching_error: bool = False) -> float:
    """Charge-share all local capacitors with the precharged output line.

    v_out = (c_mom * sum(v_moms) + c_p * vdd) / (n * c_mom + c_p), with the
    net switching error (evaluated at the mean capacitor voltage) added once
    per accumulation when enabled.
    """
    v_moms = np.asarray(v_moms, dtype=float)
    n = geometry.clusters_per_slice
    if v_moms.shape != (n,):
        raise ValueError(f"expected {n} capacitor voltages, got {v_moms.shape}")
    if np.any((v_moms < 0) | (v_moms > params.vdd + 1e-12)):
        raise ValueError("capacitor voltage outside [0, vdd]")
    v_out = (params.c_mom * v_moms.sum() + params.c_p * params.vdd) / (
        n * params.c_mom + params.c_p)
    if switching_error:
        v_out += net_switching_error(v_moms.mean(), params, geometry)
    return float(v_out)


def signal_step(params: AnalogParams, geometry: MacroGeometry) -> float:
    """Output-line signal in volts contributed by one pre-ADC unit."""
    n = geometry.clusters_per_slice
    return params.dac_step * params.c_mom / (n * params.c_mom + params.c_p)


def slice_signal(pre_adc, params: AnalogParams, geometry: MacroGeometry,
                 gain=1.0, line_offset_v=0.0, switching_error: bool = False):
    """Vectorized signal magnitude (vdd - v_out) for integer MAC values.

    Mirrors dac_convert -> multiply_bit -> accumulate without materializing
    the 128 per-cluster voltages; used by sweeps and the inference harness.
    """
    pre_adc = np.asarray(pre_adc, dtype=float)
    s = pre_adc * signal_step(params, geometry)
    if switching_error:
        n = geometry.clusters_per_slice
        v_mean = params.vdd - params.dac_step * pre_adc / n
        s = s - net_switching_error(v_mean, params, geometry)
    return gain * s + line_offset_v


def slice_mac(x: InputVector, w: SliceBits, params: AnalogParams,
              geometry: MacroGeometry, profile=None, slice_index: int = 0,
              switching_error: bool = False) -> SliceVoltage:
    """Full analog MAC of one slice row: returns the output-line voltage and
    the ideal integer MAC sum(bits * codes) it encodes."""
    n = geometry.clusters_per_slice
    if x.codes.shape != (n,) or w.bits.shape != (n,):
        raise ValueError(f"input and weight vectors must have {n} lanes")
    if w.cluster_row >= geometry.cells_per_cluster:
        raise ValueError("cluster_row outside the cluster")
    v_in = dac_convert(x.codes, params)
    v_moms = multiply_bit(v_in, w.bits, params)
    v_out = accumulate(v_moms, params, geometry, switching_error=switching_error)
    pre_adc = int(np.dot(w.bits, x.codes))
    if profile is not None:
        s = params.vdd - v_out
        s = profile.gain[slice_index] * s + profile.line_offset_v[slice_index]
        v_out = params.vdd - s
    v_out = float(min(max(v_out, 0.0), params.vdd))
    return SliceVoltage(v_out=v_out, pre_adc_value=pre_adc)
