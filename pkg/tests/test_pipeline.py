import numpy as np
import pytest

from cotdr.channel import fiber_one_way_delay
from cotdr.pipeline import PipelineError, Simulator, measurement_seed, series_schedule
from cotdr.scenario import load_scenario

DT = 20e-12


def sim(**sections):
    sections.setdefault("frontend", {})
    sections["frontend"] = {"ideal": True, **sections["frontend"]}
    return Simulator(load_scenario("desk-10km", overrides=sections))


def configured_interval(s, mode="reflective"):
    link = s.link(mode)
    return link.paths[-1].delay - link.paths[0].delay


def test_noiseless_recovers_truth(ideal_desk):
    m = ideal_desk.measure()
    assert abs(m.error) < 1e-12
    assert len(m.peak_indices) == 2
    rt = configured_interval(ideal_desk)
    assert abs(m.estimate.round_trip - rt) < 1e-12
    assert abs((m.peak_indices[1] - m.peak_indices[0]) * DT - rt) < 2 * DT


def test_end_peak_at_configured_delay(ideal_desk):
    m = ideal_desk.measure()
    link = ideal_desk.link("reflective")
    assert abs(m.estimate.end_fit.t0 - link.path("end-reflection").delay) < 1e-12
    assert abs(m.estimate.ref_fit.t0 - link.path("input-reflection").delay) < 1e-12


@pytest.mark.parametrize("delta", [13e-12, 20e-12, 333e-12])
def test_end_shift_equivariance(ideal_desk, delta):
    base = ideal_desk.measure().estimate.round_trip
    shifted = sim(reflectors={"demarc_round_trip": 160e-12 + delta}, estimator={"demarc_calibration": 160e-12})
    assert abs(shifted.measure().estimate.round_trip - base - delta) < 1e-12


@pytest.mark.parametrize("delta", [7e-12, 250e-12])
def test_common_shift_moves_both_peaks(ideal_desk, delta):
    m0 = ideal_desk.measure()
    # half the shift in each grating transit moves every path by delta
    m1 = sim(gratings={"transit_delay": 25e-9 + delta / 2}).measure()
    assert abs(m1.estimate.ref_fit.t0 - m0.estimate.ref_fit.t0 - delta) < 1e-12
    assert abs(m1.estimate.end_fit.t0 - m0.estimate.end_fit.t0 - delta) < 1e-12
    assert abs(m1.estimate.round_trip - m0.estimate.round_trip) < 1e-12


@pytest.mark.parametrize("skew", [2.44, -7.0])
def test_skew_correction_exact(skew):
    s = sim(environment={"clock_skew_ppm": skew})
    m = s.measure()
    assert abs(m.error) < 1e-12
    raw = sim(environment={"clock_skew_ppm": skew}, estimator={"skew_correction_ppm": 0.0}).measure()
    expected_bias = -2 * fiber_one_way_delay(s.fiber()) * skew * 1e-6 / 2
    assert raw.error == pytest.approx(expected_bias, abs=2e-12)


def test_fwhm_ordering_with_matched_gratings(ideal_desk):
    e = ideal_desk.measure().estimate
    assert e.ref_fit.half_width > e.end_fit.half_width


def test_fwhm_equal_without_any_dispersion():
    e = sim(gratings={"enabled": False}, fiber={"dispersion": 0.0}).measure().estimate
    assert abs(e.ref_fit.half_width - e.end_fit.half_width) < 2e-12


def test_transmissive_reports_one_way_directly(ideal_desk):
    m = ideal_desk.measure(mode="transmissive")
    assert not m.estimate.reflective
    assert m.estimate.one_way == m.estimate.round_trip
    assert m.estimate.demarc_round_trip == 0.0
    assert abs(m.error) < 1e-12


def test_demarcation_miscalibration_shifts_half(ideal_desk):
    good = ideal_desk.measure().estimate.one_way
    bad = sim(estimator={"demarc_calibration": 80e-12}).measure().estimate.one_way
    assert bad - good == pytest.approx(40e-12, abs=1e-15)


def test_temperature_schedule_moves_truth():
    s = sim(environment={"temperature_schedule": "0:0, 1000:1.0"})
    m0, m1 = s.measure(0, 0.0), s.measure(1, 1000.0)
    d = m1.truth_one_way - m0.truth_one_way
    assert d == pytest.approx(fiber_one_way_delay(s.fiber()) * 7e-6, rel=1e-9)
    assert abs(m1.estimate.one_way - m0.estimate.one_way - d) < 1e-12


def test_sub_lsb_regime():
    s = Simulator(load_scenario("desk-10km", overrides={"frontend": {"n_averages": 1}}))
    single = s.measure(0)
    averaged = Simulator(load_scenario("desk-10km", overrides={"frontend": {"n_averages": 60}})).measure(0)
    assert single.end_swing_lsb < 1.0

    def snr(m):
        v = m.profile.values
        a, b = m.peak_indices
        # quiet stretch after the near echo, clear of the cross-subframe ghost
        noise = v[a + 50_000 : a + 1_500_000]
        return v[b] / noise.std()

    assert snr(single) < snr(averaged)
    assert snr(averaged) > 4 * snr(single)
    # the raw averaged trace shows no bit pattern around the end echo
    tr = averaged.trace.samples
    k = averaged.peak_indices[1]
    window = tr[k : k + s.frame.subframe_samples]
    on = np.repeat(s.pair.a.elements > 0, s.frame.samples_per_bit)
    assert abs(window[on].mean() - window[~on].mean()) < 1.0


def test_seeds_are_distinct_and_stable():
    seeds = {measurement_seed(1, i, r) for i in range(5) for r in ("reflective", "transmissive")}
    assert len(seeds) == 10
    assert measurement_seed(9, 3, "reflective") == measurement_seed(9, 3, "reflective")


def test_series_schedule():
    assert series_schedule(4, False, "strict") == ["reflective"] * 4
    assert series_schedule(4, True, "strict") == ["reflective", "transmissive"] * 2
    assert series_schedule(4, True, "pairs") == ["reflective", "reflective", "transmissive", "transmissive"]


def test_memory_guard_reports_stage():
    with pytest.raises(PipelineError, match="probe.*memory guard"):
        Simulator(load_scenario("desk-10km", overrides={"limits": {"max_samples": 1 << 20}}))
    with pytest.raises(PipelineError, match="channel.*receiver record"):
        sim(limits={"max_samples": 7_000_000}).measure()


@pytest.mark.slow
def test_100km_order_12_round_trip():
    s = Simulator(load_scenario("paper-100km", overrides={"frontend": {"ideal": True}}))
    m = s.measure()
    assert abs(m.estimate.round_trip - configured_interval(s)) < 1e-9
    assert abs(m.error) < 1e-12
