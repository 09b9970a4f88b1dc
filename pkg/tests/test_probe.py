import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotdr.golay import BipolarSequence, generate_golay_pair
from cotdr.probe import (
    DEFAULT_MAX_SAMPLES,
    HARD_MAX_SAMPLES,
    ModulationSpec,
    ProbeError,
    build_probe_frame,
    reference_waveform,
    samples_per_bit,
)

MOD = ModulationSpec(on_power=1e-3, extinction_ratio_db=13.0)


def small_frame(order=4, layout="same-packet"):
    pair = generate_golay_pair(order)
    return pair, build_probe_frame(pair, MOD, 10e9, 50e9, 2 * pair.length / 10e9 * 1.5, layout=layout)


def test_10g_bits_at_50gs_give_five_samples_per_bit():
    assert samples_per_bit(50e9, 10e9) == 5
    _, fr = small_frame()
    assert 1 / fr.sample_rate == pytest.approx(20e-12)


def test_order_twelve_subframe_duration():
    pair = generate_golay_pair(12)
    fr = build_probe_frame(pair, MOD, 10e9, 50e9, 1e-6)
    assert fr.subframe_duration == pytest.approx(409.6e-9, rel=1e-12)


def test_layout_and_levels():
    pair, fr = small_frame()
    n = int(round(fr.frame_period * fr.sample_rate))
    assert len(fr) == n
    assert fr.subframe_b_offset == pytest.approx(fr.frame_period / 2, abs=1 / fr.sample_rate)
    p = np.abs(fr.field_samples) ** 2
    a0, b0 = fr.subframe_offsets_samples
    L = fr.subframe_samples
    assert b0 >= a0 + L
    outside = np.ones(n, bool)
    outside[a0 : a0 + L] = False
    outside[b0 : b0 + L] = False
    np.testing.assert_allclose(p[outside], MOD.off_power, rtol=1e-12)
    assert p.max() <= MOD.on_power * (1 + 1e-12)


@pytest.mark.parametrize("order", [0, 3, 7])
def test_threshold_demodulation_recovers_bits(order):
    pair, fr = small_frame(order)
    p = np.abs(fr.field_samples) ** 2
    mid = 0.5 * (MOD.on_power + MOD.off_power)
    spb = fr.samples_per_bit
    for start, seq in zip(fr.subframe_offsets_samples, (pair.a, pair.b)):
        centres = p[start + spb // 2 : start + fr.subframe_samples : spb]
        assert np.array_equal(np.where(centres > mid, 1, -1), seq.elements)


def test_subframe_energy():
    pair, fr = small_frame(5)
    spb = fr.samples_per_bit
    a0 = fr.subframe_offsets_samples[0]
    e = np.sum(np.abs(fr.field_samples[a0 : a0 + fr.subframe_samples]) ** 2) / fr.sample_rate
    n_on = int(np.sum(pair.a.elements > 0)) * spb
    n_off = pair.length * spb - n_on
    assert e == pytest.approx((n_on * MOD.on_power + n_off * MOD.off_power) / fr.sample_rate, rel=1e-12)


def test_alternating_layout_puts_b_in_next_packet():
    pair, fr = small_frame(4, layout="alternating")
    assert fr.subframe_b_offset == pytest.approx(fr.frame_period)
    assert len(fr) == 2 * int(round(fr.frame_period * fr.sample_rate))


def test_non_integer_oversampling_rejected():
    with pytest.raises(ProbeError):
        build_probe_frame(generate_golay_pair(3), MOD, 3e9, 50e9, 1e-6)


def test_frame_too_short_rejected():
    pair = generate_golay_pair(6)
    with pytest.raises(ProbeError):
        build_probe_frame(pair, MOD, 10e9, 50e9, 1.5 * pair.length / 10e9)


def test_order_12_one_ms_frame_needs_raised_guard():
    pair = generate_golay_pair(12)
    with pytest.raises(ProbeError, match=str(DEFAULT_MAX_SAMPLES)):
        build_probe_frame(pair, MOD, 10e9, 50e9, 1e-3)
    fr = build_probe_frame(pair, MOD, 10e9, 50e9, 1e-3, max_samples=1 << 26)
    assert len(fr) == 50_000_000


def test_guard_above_hard_limit_rejected():
    with pytest.raises(ProbeError, match="hard limit"):
        build_probe_frame(generate_golay_pair(2), MOD, 10e9, 50e9, 1e-6, max_samples=HARD_MAX_SAMPLES + 1)


def test_reference_examples():
    np.testing.assert_array_equal(reference_waveform(BipolarSequence([1, -1]), 1), [1, -1])
    np.testing.assert_array_equal(reference_waveform(BipolarSequence([1, 1]), 2), [0, 0, 0, 0])
    r = reference_waveform(generate_golay_pair(3).a, 5)
    assert r.size == 40
    assert abs(r.sum()) < 1e-12


@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=200), st.integers(1, 8))
def test_reference_zero_mean(x, spb):
    r = reference_waveform(BipolarSequence(x), spb)
    assert r.size == len(x) * spb
    assert abs(r.mean()) < 1e-12


def test_modulation_validation():
    with pytest.raises(ProbeError):
        ModulationSpec(on_power=0)
    with pytest.raises(ProbeError):
        ModulationSpec(extinction_ratio_db=0)
    assert MOD.off_power == pytest.approx(1e-3 / 10**1.3)
