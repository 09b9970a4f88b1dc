import pytest

from cotdr.scenario import PRESETS, ConfigError, Scenario, load_scenario, parse_schedule


def test_presets_load():
    for name in PRESETS:
        scn = load_scenario(name)
        assert scn.name == name


def test_100km_preset_values():
    s = load_scenario("paper-100km")
    assert s.probe.golay_order == 12
    assert s.probe.frame_period == 1e-3
    assert s.frontend.n_averages == 4000
    assert s.fiber.length == 100e3
    assert s.gratings.pre_dispersion == s.gratings.post_dispersion == -1700.0
    assert s.reflectors.demarc_reflectivity == 0.95
    assert s.reflectors.demarc_round_trip == 160e-12


def test_desk_preset_values():
    s = load_scenario("desk-10km")
    assert (s.probe.golay_order, s.probe.frame_period, s.frontend.n_averages) == (10, 120e-6, 200)
    assert s.fiber.length == 10e3


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        load_scenario("moon-link")


def test_config_text_overrides_preset():
    text = """
[scenario]
preset = desk-10km
master_seed = 77
[fiber]
length = 5000   # metres
[frontend]
full_scale = 2e-5
"""
    s = load_scenario(config_text=text)
    assert s.master_seed == 77
    assert s.fiber.length == 5000.0
    assert s.frontend.full_scale == 2e-5
    assert s.probe.golay_order == 10


def test_field_level_errors_are_all_reported():
    text = "[probe]\nbit_rate = 3e9\n[series]\ncount = 0\n[fiber]\nbogus = 1\n[frontend]\nbits = many\n"
    with pytest.raises(ConfigError) as info:
        load_scenario(config_text=text)
    joined = " | ".join(info.value.problems)
    for key in ("probe.sample_rate", "series.count", "fiber.bogus", "frontend.bits"):
        assert key in joined


def test_unknown_section_and_bad_syntax():
    with pytest.raises(ConfigError, match="unknown section"):
        load_scenario(config_text="[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_scenario(config_text="no header line\n")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(config=tmp_path / "absent.ini")


def test_round_trip_through_text():
    s = load_scenario("paper-100km", overrides={"environment": {"clock_skew_ppm": 2.44}})
    back = load_scenario(config_text=s.to_config_text())
    assert back.to_config_text() == s.to_config_text()
    assert back == s


def test_auto_fields():
    s = Scenario()
    assert s.skew_correction == s.environment.clock_skew_ppm
    assert s.demarc_calibration == s.reflectors.demarc_round_trip
    s2 = s.replace(estimator={"demarc_calibration": 80e-12, "skew_correction_ppm": 0.0})
    assert s2.demarc_calibration == 80e-12
    assert s2.skew_correction == 0.0


def test_schedule():
    t, d = parse_schedule("600:0.05, 0:0")
    assert list(t) == [0.0, 600.0]
    assert list(d) == [0.0, 0.05]
    s = Scenario().replace(environment={"temperature_schedule": "0:0, 1000:1"})
    assert s.temperature_at(500) == pytest.approx(0.5)
    assert s.temperature_at(5000) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        Scenario().replace(environment={"temperature_schedule": " "})
    with pytest.raises(ConfigError):
        Scenario().replace(environment={"temperature_schedule": "0:0, 0:1"})


def test_guard_limits():
    with pytest.raises(ConfigError, match="limits.max_samples"):
        load_scenario("desk-10km", overrides={"limits": {"max_samples": 1 << 29}})
