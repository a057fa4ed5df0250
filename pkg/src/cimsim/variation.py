"""Monte Carlo device variation: what gets sampled and how it is applied.

A VariationProfile freezes one macro's mismatch realization: per-slice gain,
per-ADC comparator offset, per-CI-cell unit errors, and a small per-slice
line offset from the switching-edge spread. Comparator noise stays a sigma
(it is redrawn on every comparison); everything else is static per profile.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import adc as adc_mod
from .config import MacroGeometry, default_geometry


@dataclass(frozen=True)
class VariationSpec:
    gain_sigma: float = 0.03  # relative, per slice
    offset_sigma: float = 2.0  # LSB, per ADC comparator
    ci_mismatch_sigma: float = 0.01  # relative, per CI cell
    comparator_noise_sigma: float = 0.255  # LSB per comparison, tuned for
    # a 0.35 LSB whole-conversion rms averaged over the input range
    switching_error_sigma: float = 0.6e-3  # volts, per slice

    def zeroed(self) -> "VariationSpec":
        return VariationSpec(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class VariationProfile:
    gain: np.ndarray  # (slices,)
    offset_lsb: np.ndarray  # (slices,) observable per-slice intercept
    line_offset_v: np.ndarray  # (slices,)
    comparator_offset_lsb: np.ndarray  # (adcs,)
    ci_cell_errors: np.ndarray  # (adcs, ci_cells) multiplicative
    adc_deductions: np.ndarray  # (adcs, len(schedule)) precomputed units
    comparator_noise_sigma: float
    seed: int | None = None

    @property
    def slices(self) -> int:
        return self.gain.shape[0]


def sample_profile(spec: VariationSpec, geometry: MacroGeometry | None = None,
                   seed=None, adc_params: adc_mod.AdcParams | None = None
                   ) -> VariationProfile:
    """Draw one macro's variation realization, reproducible from the seed.

    seed may be anything numpy's default_rng accepts, including a
    SeedSequence spawned for parallel Monte Carlo tasks.
    """
    geometry = geometry or default_geometry()
    adc_params = adc_params or adc_mod.AdcParams.from_analog(geometry=geometry)
    rng = np.random.default_rng(seed)
    n_slices = geometry.slices
    n_adcs = geometry.slice_pairs

    gain = 1.0 + spec.gain_sigma * rng.standard_normal(n_slices)
    comp_offset = spec.offset_sigma * rng.standard_normal(n_adcs)
    ci_errors = 1.0 + spec.ci_mismatch_sigma * rng.standard_normal((n_adcs, 16))
    line_offset = spec.switching_error_sigma * rng.standard_normal(n_slices)

    deductions = np.stack([adc_mod._deductions(row) for row in ci_errors])
    offset_lsb = comp_offset[np.arange(n_slices) // 2] + line_offset / adc_params.unit_step
    return VariationProfile(
        gain=gain,
        offset_lsb=offset_lsb,
        line_offset_v=line_offset,
        comparator_offset_lsb=comp_offset,
        ci_cell_errors=ci_errors,
        adc_deductions=deductions,
        comparator_noise_sigma=spec.comparator_noise_sigma,
        seed=seed if isinstance(seed, int) else None,
    )


def ideal_profile(geometry: MacroGeometry | None = None) -> VariationProfile:
    """All sigmas zero: unity gain, zero offsets, exact CI cells, no noise."""
    return sample_profile(VariationSpec().zeroed(), geometry, seed=0)


def spec_from_overrides(overrides: dict) -> VariationSpec:
    base = VariationSpec()
    unknown = set(overrides) - set(base.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown variation fields: {sorted(unknown)}")
    return replace(base, **overrides)
