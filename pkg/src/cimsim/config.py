"""Macro geometry and analog operating-point parameters.

Everything downstream (analog model, ADC, mapping compiler, harness) is
parameterized by these two frozen dataclasses, so a single --config file
can retarget the whole simulator.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MacroGeometry:
    """Array dimensions of one macro."""

    rows: int = 512
    cols: int = 128
    cells_per_cluster: int = 8
    slices: int = 64
    slice_pairs: int = 32
    clusters_per_slice: int = 128


@dataclass(frozen=True)
class AnalogParams:
    """Electrical operating point. Capacitances in fF, voltages in V."""

    vdd: float = 1.2
    c_mom: float = 1.2
    c_p: float = 80.0
    c_gs: float = 0.2
    ci_channel_cap: float = 0.4  # effective C_OX*W*L of the sampling switch
    v_th: float = 0.4
    dac_step: float = 0.04  # V per input code step
    adc_lsb_pre: int = 30  # pre-ADC integer units per single-ended ADC LSB


def default_geometry() -> MacroGeometry:
    return MacroGeometry()


def default_analog_params() -> AnalogParams:
    return AnalogParams()


def validate(geometry: MacroGeometry, params: AnalogParams) -> list[str]:
    """Check cross-field invariants. Returns a list of violations, never raises."""
    errors = []
    g, a = geometry, params

    for field in dataclasses.fields(g):
        if getattr(g, field.name) < 1:
            errors.append(f"non-positive count: {field.name}")
    if g.rows != g.cells_per_cluster * g.slices:
        errors.append("rows ≠ cells_per_cluster×slices")
    if g.slices != 2 * g.slice_pairs:
        errors.append("slices ≠ 2×slice_pairs")
    if g.clusters_per_slice != g.cols:
        errors.append("clusters_per_slice ≠ cols")

    for name in ("c_mom", "c_p", "c_gs", "ci_channel_cap"):
        if getattr(a, name) <= 0:
            errors.append(f"non-positive capacitance: {name}")
    if a.vdd <= 0:
        errors.append("non-positive vdd")
    if a.dac_step <= 0:
        errors.append("non-positive dac_step")
    # The bitline must stay at or above 600 mV at the largest input code.
    elif a.vdd - 15 * a.dac_step < 0.6 - 1e-12:
        errors.append("DAC floor below 600 mV")
    if a.adc_lsb_pre * 64 != g.clusters_per_slice * 15:
        errors.append("adc_lsb_pre ≠ clusters_per_slice×15/64")

    return errors


def load_config(path: str, geometry: MacroGeometry | None = None,
                analog: AnalogParams | None = None):
    """Read a JSON config file and overlay it on the defaults.

    The file holds up to three objects: "geometry", "analog", "variation".
    Unknown keys inside a section are rejected so typos fail loudly.
    Returns (geometry, analog, variation_overrides_dict).
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - {"geometry", "analog", "variation"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    geometry = geometry or default_geometry()
    analog = analog or default_analog_params()
    if "geometry" in raw:
        geometry = _replace_checked(geometry, raw["geometry"], "geometry")
    if "analog" in raw:
        analog = _replace_checked(analog, raw["analog"], "analog")
    return geometry, analog, dict(raw.get("variation", {}))


def _replace_checked(obj, overrides: dict, section: str):
    known = {f.name for f in dataclasses.fields(obj)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown {section} fields: {sorted(unknown)}")
    return dataclasses.replace(obj, **overrides)
