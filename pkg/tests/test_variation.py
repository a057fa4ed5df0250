import dataclasses

import numpy as np
import pytest

from cimsim.adc import FIRING_SCHEDULE, IDEAL_DEDUCTIONS, AdcParams
from cimsim.analog import signal_step
from cimsim.config import default_analog_params, default_geometry
from cimsim.variation import (VariationSpec, ideal_profile, sample_profile,
                              spec_from_overrides)

G = default_geometry()
A = default_analog_params()


def test_defaults():
    spec = VariationSpec()
    assert spec.gain_sigma == 0.03
    assert spec.offset_sigma == 2.0
    assert spec.ci_mismatch_sigma == 0.01
    assert spec.comparator_noise_sigma == 0.255
    assert spec.switching_error_sigma == pytest.approx(0.6e-3)


def test_zeroed_helper():
    z = VariationSpec().zeroed()
    assert all(v == 0 for v in dataclasses.asdict(z).values())


def test_sample_shapes():
    p = sample_profile(VariationSpec(), G, seed=0)
    assert p.gain.shape == (G.slices,)
    assert p.offset_lsb.shape == (G.slices,)
    assert p.line_offset_v.shape == (G.slices,)
    assert p.comparator_offset_lsb.shape == (G.slice_pairs,)
    assert p.ci_cell_errors.shape == (G.slice_pairs, 16)
    assert p.adc_deductions.shape == (G.slice_pairs, len(FIRING_SCHEDULE))
    assert p.slices == G.slices


def test_seed_reproducible_and_distinct():
    a = sample_profile(VariationSpec(), G, seed=4)
    b = sample_profile(VariationSpec(), G, seed=4)
    c = sample_profile(VariationSpec(), G, seed=5)
    assert np.array_equal(a.gain, b.gain)
    assert np.array_equal(a.offset_lsb, b.offset_lsb)
    assert not np.array_equal(a.gain, c.gain)


def test_ideal_profile_is_exact():
    p = ideal_profile(G)
    assert np.all(p.gain == 1.0)
    assert np.all(p.offset_lsb == 0.0)
    assert np.all(p.line_offset_v == 0.0)
    assert np.all(p.ci_cell_errors == 1.0)
    assert p.comparator_noise_sigma == 0.0
    assert np.array_equal(p.adc_deductions, np.broadcast_to(
        IDEAL_DEDUCTIONS, (G.slice_pairs, len(FIRING_SCHEDULE))))


def test_offset_composition():
    """Total offset per slice = shared comparator offset + line offset."""
    p = sample_profile(VariationSpec(), G, seed=8)
    adc = AdcParams.from_analog(A, G)
    step_lsb = p.line_offset_v / adc.unit_step
    for i in range(G.slices):
        assert p.offset_lsb[i] == pytest.approx(
            p.comparator_offset_lsb[i // 2] + step_lsb[i], rel=1e-12)


def test_deductions_reflect_cell_errors():
    p = sample_profile(VariationSpec(), G, seed=3)
    # per-cell capacitor errors perturb each firing deduction away from ideal
    assert not np.allclose(p.adc_deductions[:, :-1], IDEAL_DEDUCTIONS[:-1])
    with np.errstate(invalid="ignore"):
        scale = p.adc_deductions[:, :-1] / IDEAL_DEDUCTIONS[:-1]
    assert np.all(np.abs(scale - 1.0) < 0.1)


def test_zero_sigma_gives_ideal_arrays():
    p = sample_profile(VariationSpec().zeroed(), G, seed=99)
    q = ideal_profile(G)
    assert np.array_equal(p.gain, q.gain)
    assert np.array_equal(p.offset_lsb, q.offset_lsb)
    assert np.array_equal(p.adc_deductions, q.adc_deductions)


def test_spec_from_overrides():
    spec = spec_from_overrides({"gain_sigma": 0.05})
    assert spec.gain_sigma == 0.05
    assert spec.offset_sigma == 2.0
    with pytest.raises(ValueError, match="gain_sig"):
        spec_from_overrides({"gain_sig": 0.05})
