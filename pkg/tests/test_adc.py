import numpy as np
import pytest

from cimsim.adc import (FIRING_SCHEDULE, AdcCode, AdcParams, convert,
                        convert_array, ideal_quantize, ideal_quantize_array,
                        measure_rms, round_half_up)
from cimsim.analog import signal_step
from cimsim.config import default_analog_params, default_geometry
from cimsim.variation import ideal_profile, sample_profile, VariationSpec

A = default_analog_params()
G = default_geometry()
ADC = AdcParams.from_analog(A, G)
IDEAL = ideal_profile(G)
STEP = signal_step(A, G)

# Full-scale span frozen from the capacitor-divider formula:
# 15*128*dac_step*c_mom/(128*c_mom+c_p).
FULLSCALE = 0.39452054794520547
UNIT_STEP = 0.0061643835616438354


def test_params_oracle():
    assert ADC.fullscale == pytest.approx(FULLSCALE, rel=1e-14)
    assert ADC.unit_step == pytest.approx(UNIT_STEP, rel=1e-14)
    assert ADC.v_top == A.vdd
    assert sum(FIRING_SCHEDULE) == 63


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(-0.5) == 0
    assert round_half_up(2.49) == 2
    assert np.array_equal(round_half_up([-1.5, 1.5]), [-1.0, 2.0])


def test_ideal_quantize_contract():
    assert ideal_quantize(0, "single").raw == 64
    assert ideal_quantize(15, "single").raw == 65  # 15/30 rounds up
    assert ideal_quantize(14, "single").raw == 64
    assert ideal_quantize(1890, "single").raw == 127
    assert ideal_quantize(-45, "differential").raw == 63  # -1.5 LSB -> -1
    code = ideal_quantize(1920, "single")
    assert code.raw == 127 and code.saturated
    assert ideal_quantize(-1920, "differential").raw == 0
    with pytest.raises(ValueError):
        ideal_quantize(-1, "single")
    with pytest.raises(ValueError):
        ideal_quantize(0, "bipolar")


def test_adc_code_value_zero_references():
    assert AdcCode(raw=64, mode="single").value == 0
    assert AdcCode(raw=127, mode="differential").value == 63
    assert AdcCode(raw=0, mode="differential").value == -64


def test_single_sweep_matches_oracle():
    # every integer input on the single-ended range, via real line voltages
    x = np.arange(0, 15 * G.clusters_per_slice + 1)
    v_line = A.vdd - x * STEP
    raw, sat = convert_array(np.full(x.size, ADC.v_top), v_line, ADC,
                             "single", profile=IDEAL)
    assert np.array_equal(raw, ideal_quantize_array(x))
    # the flag marks exactly the clamped tail
    assert np.array_equal(sat, round_half_up(x / 30) + 64 > 127)


def test_differential_sweep_matches_oracle():
    d = np.arange(-15 * G.clusters_per_slice, 15 * G.clusters_per_slice + 1)
    vp = A.vdd - np.where(d < 0, -d, 0) * STEP
    vm = A.vdd - np.where(d >= 0, d, 0) * STEP
    raw, _ = convert_array(vp, vm, ADC, "differential", profile=IDEAL)
    assert np.array_equal(raw, ideal_quantize_array(d))


def test_random_float_inputs_match_rounding_oracle():
    # the SAR loop must implement floor(x+0.5) for arbitrary residuals
    rng = np.random.default_rng(17)
    x = rng.uniform(-2200, 2200, 100_000) / 30.0  # LSB units
    raw, _ = convert_array(x * ADC.unit_step, np.zeros(x.size), ADC,
                           "differential")
    want = np.clip(64 + np.floor(x + 0.5), 0, 127)
    assert np.array_equal(raw, want)


def test_scalar_convert_agrees_with_array():
    rng = np.random.default_rng(23)
    d = rng.uniform(-70, 70, 200)
    got = [convert(di * ADC.unit_step, 0.0, ADC, "differential").raw for di in d]
    arr, _ = convert_array(d * ADC.unit_step, np.zeros(d.size), ADC,
                           "differential")
    assert np.array_equal(got, arr)


def test_transfer_monotone_under_static_mismatch():
    profile = sample_profile(
        VariationSpec(gain_sigma=0, offset_sigma=2.0, ci_mismatch_sigma=0.01,
                      comparator_noise_sigma=0, switching_error_sigma=0),
        G, seed=9)
    d = np.linspace(-70, 70, 4001)
    for adc_index in (0, 13, 31):
        raw, _ = convert_array(d * ADC.unit_step, np.zeros(d.size), ADC,
                               "differential", profile=profile,
                               adc_index=adc_index)
        assert np.all(np.diff(raw) >= 0)


def test_firing_log():
    code = convert(40 * ADC.unit_step, 0.0, ADC, "differential")
    steps = [f[0] for f in code.firings]
    units = [f[1] for f in code.firings]
    assert steps == [0, 1, 2, 3, 4, 5]  # final compare-only step fires nothing
    assert units == [32, 16, 8, 4, 2, 1]
    # MSB decision for a positive input deducts from the plus side
    assert code.firings[0][4] == "plus"
    # the MSB step fires all 16 cells twice
    assert code.firings[0][2] == 16 and code.firings[0][3] == 2


def test_saturation_flags():
    assert convert(64 * ADC.unit_step, 0.0, ADC, "differential").saturated
    assert not convert(63.4 * ADC.unit_step, 0.0, ADC, "differential").saturated
    assert convert(-64.6 * ADC.unit_step, 0.0, ADC, "differential").saturated


def test_comparator_offset_shifts_code():
    spec = VariationSpec(gain_sigma=0, offset_sigma=3.0, ci_mismatch_sigma=0,
                         comparator_noise_sigma=0, switching_error_sigma=0)
    profile = sample_profile(spec, G, seed=2)
    raw, _ = convert_array(np.zeros(1), np.zeros(1), ADC, "differential",
                           profile=profile, adc_index=0)
    shift = raw[0] - 64
    assert shift == round_half_up(profile.comparator_offset_lsb[0])


def test_noise_requires_rng():
    profile = sample_profile(VariationSpec(), G, seed=0)
    with pytest.raises(ValueError, match="rng"):
        convert_array(np.zeros(4), np.zeros(4), ADC, "differential",
                      profile=profile)
    with pytest.raises(ValueError, match="rng"):
        convert(0.0, 0.0, ADC, "differential", profile=profile)


def test_noisy_conversion_deterministic_per_seed():
    profile = sample_profile(VariationSpec(), G, seed=1)
    d = np.linspace(0, 60, 500) * ADC.unit_step
    a, _ = convert_array(d, np.zeros(d.size), ADC, "differential",
                         profile=profile, rng=np.random.default_rng(42))
    b, _ = convert_array(d, np.zeros(d.size), ADC, "differential",
                         profile=profile, rng=np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_measure_rms_noise_free_is_zero():
    v = A.vdd - 300 * STEP
    assert measure_rms(v, ADC, IDEAL, runs=32) == 0.0


def test_measure_rms_peaks_at_code_transition():
    profile = sample_profile(
        VariationSpec(gain_sigma=0, offset_sigma=0, ci_mismatch_sigma=0,
                      comparator_noise_sigma=0.255, switching_error_sigma=0),
        G, seed=0)
    rng = np.random.default_rng(7)
    # mid-code input vs an input halfway between two codes
    mid = A.vdd - 300 * STEP
    edge = A.vdd - 315 * STEP
    r_mid = measure_rms(mid, ADC, profile, runs=512, rng=rng)
    r_edge = measure_rms(edge, ADC, profile, runs=512, rng=rng)
    assert r_edge > r_mid
    assert r_edge == pytest.approx(0.5, abs=0.1)
