"""Scenario configuration: presets, ``key = value`` config files and validation.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines. Values left out fall back to the chosen preset, then to the defaults
below, which match the ``desk-10km`` preset. ``auto`` is accepted wherever a field is optional.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frontend import NOISE_METHODS
from .probe import DEFAULT_MAX_SAMPLES, HARD_MAX_SAMPLES, LAYOUTS

MODES = ("reflective", "transmissive")
INTERLEAVES = ("strict", "pairs")


class ConfigError(ValueError):
    """Scenario validation failure; ``problems`` lists ``section.key: message`` strings."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ScenarioInfo:
    name: str = "custom"
    mode: str = "reflective"
    master_seed: int = 1


@dataclass
class ProbeConfig:
    golay_order: int = 10
    bit_rate: float = 10e9
    sample_rate: float = 50e9
    frame_period: float = 120e-6
    on_power: float = 1e-3
    extinction_ratio_db: float = 13.0
    layout: str = "same-packet"
    bandwidth: typing.Optional[float] = 15e9


@dataclass
class FiberConfig:
    length: float = 10e3
    group_index: float = 1.4682
    attenuation: float = 2.0
    dispersion: float = 170.0
    thermal_coeff: float = 7e-6
    wavelength: float = 1550e-9


@dataclass
class GratingConfig:
    enabled: bool = True
    pre_dispersion: float = -1700.0
    post_dispersion: float = -1700.0
    insertion_loss: float = 3.0
    transit_delay: float = 25e-9


@dataclass
class ReflectorConfig:
    connector_return_loss: float = 14.0
    demarc_reflectivity: float = 0.95
    demarc_round_trip: float = 160e-12


@dataclass
class FrontendConfig:
    ideal: bool = False
    bits: int = 7
    full_scale: typing.Optional[float] = None
    full_scale_headroom: float = 1.1
    noise_sigma_lsb: float = 1.0
    noise_method: str = "table"
    n_averages: int = 200
    workers: int = 1


@dataclass
class EstimatorConfig:
    fit_half_window: int = 5
    skew_correction_ppm: typing.Optional[float] = None
    demarc_calibration: typing.Optional[float] = None


@dataclass
class EnvironmentConfig:
    clock_skew_ppm: float = 0.0
    temperature_schedule: str = "0:0"


@dataclass
class SeriesConfig:
    count: int = 24
    spacing: float = 274.0
    compare: bool = False
    interleave: str = "strict"


@dataclass
class LimitsConfig:
    max_samples: int = DEFAULT_MAX_SAMPLES


@dataclass
class Scenario:
    scenario: ScenarioInfo = field(default_factory=ScenarioInfo)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    fiber: FiberConfig = field(default_factory=FiberConfig)
    gratings: GratingConfig = field(default_factory=GratingConfig)
    reflectors: ReflectorConfig = field(default_factory=ReflectorConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    series: SeriesConfig = field(default_factory=SeriesConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def master_seed(self) -> int:
        return self.scenario.master_seed

    def temperature_at(self, t: float) -> float:
        times, temps = parse_schedule(self.environment.temperature_schedule)
        return float(np.interp(t, times, temps))

    @property
    def skew_correction(self) -> float:
        s = self.estimator.skew_correction_ppm
        return self.environment.clock_skew_ppm if s is None else s

    @property
    def demarc_calibration(self) -> float:
        d = self.estimator.demarc_calibration
        return self.reflectors.demarc_round_trip if d is None else d

    def replace(self, **sections: dict) -> Scenario:
        """Copy with per-section overrides, e.g. ``replace(fiber={"length": 5e3})``."""
        new = dataclasses.replace(self)
        for sec, values in sections.items():
            setattr(new, sec, dataclasses.replace(getattr(self, sec), **values))
        validate(new)
        return new

    def to_config_text(self) -> str:
        lines = []
        for sec in dataclasses.fields(self):
            lines.append(f"[{sec.name}]")
            obj = getattr(self, sec.name)
            for f in dataclasses.fields(obj):
                lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


PRESETS: dict[str, dict[str, dict[str, object]]] = {
    # 10 km of delay with 100 km-equivalent loss and dispersion, so the
    # end echo sits below one ADC step and the gratings fully compensate it
    "desk-10km": {
        "scenario": {"name": "desk-10km"},
        "probe": {"golay_order": 10, "frame_period": 120e-6},
        "fiber": {"length": 10e3, "attenuation": 2.0, "dispersion": 170.0},
        "frontend": {"n_averages": 200},
        "limits": {"max_samples": DEFAULT_MAX_SAMPLES},
    },
    "paper-100km": {
        "scenario": {"name": "paper-100km"},
        "probe": {"golay_order": 12, "frame_period": 1e-3},
        "fiber": {"length": 100e3, "attenuation": 0.2, "dispersion": 17.0},
        "frontend": {"n_averages": 4000},
        "limits": {"max_samples": 1 << 27},
    },
}


def parse_schedule(text: str) -> tuple[np.ndarray, np.ndarray]:
    """``"t0:dT0, t1:dT1, ..."`` into arrays; linear interpolation in between."""
    times, temps = [], []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        t, _, dt = item.partition(":")
        times.append(float(t))
        temps.append(float(dt))
    if not times:
        raise ValueError("schedule is empty")
    order = np.argsort(times, kind="stable")
    t_arr = np.asarray(times)[order]
    if np.any(np.diff(t_arr) <= 0):
        raise ValueError("schedule times must be distinct")
    return t_arr, np.asarray(temps)[order]


def _format_value(v: object) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(raw: str, tp: object) -> object:
    raw = raw.strip()
    optional = typing.get_origin(tp) is typing.Union and type(None) in typing.get_args(tp)
    if optional:
        if raw.lower() in ("auto", "none", ""):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if tp is int:
        f = float(raw)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(f)
    if tp is float:
        return float(raw)
    return raw


def _section_types(cls: type) -> dict[str, object]:
    return typing.get_type_hints(cls)


def apply_overrides(scn: Scenario, values: dict[str, dict[str, object]], problems: list[str]) -> None:
    for sec_name, items in values.items():
        if sec_name in ("DEFAULT", "manifest"):
            continue
        if not hasattr(scn, sec_name):
            problems.append(f"{sec_name}: unknown section")
            continue
        sec = getattr(scn, sec_name)
        types = _section_types(type(sec))
        for key, raw in items.items():
            if key not in types:
                problems.append(f"{sec_name}.{key}: unknown key")
                continue
            try:
                val = _convert(raw, types[key]) if isinstance(raw, str) else raw
            except ValueError as exc:
                problems.append(f"{sec_name}.{key}: {exc}")
                continue
            setattr(sec, key, val)


def validate(scn: Scenario) -> None:
    """Raise ConfigError listing every invalid field."""
    p: list[str] = []

    def need(cond: bool, where: str, msg: str) -> None:
        if not cond:
            p.append(f"{where}: {msg}")

    s = scn
    need(s.scenario.mode in MODES, "scenario.mode", f"must be one of {MODES}")
    need(0 <= s.scenario.master_seed < 1 << 64, "scenario.master_seed", "must be an unsigned 64-bit integer")
    need(0 <= s.probe.golay_order <= 24, "probe.golay_order", "must lie in [0, 24]")
    need(s.probe.bit_rate > 0, "probe.bit_rate", "must be > 0")
    need(s.probe.sample_rate > 0, "probe.sample_rate", "must be > 0")
    if s.probe.bit_rate > 0 and s.probe.sample_rate > 0:
        ratio = s.probe.sample_rate / s.probe.bit_rate
        need(ratio >= 1 and abs(ratio - round(ratio)) < 1e-9 * ratio, "probe.sample_rate",
             "must be an integer multiple of probe.bit_rate")
    need(s.probe.frame_period > 0, "probe.frame_period", "must be > 0")
    need(s.probe.on_power > 0, "probe.on_power", "must be > 0")
    need(s.probe.extinction_ratio_db > 0, "probe.extinction_ratio_db", "must be > 0")
    if s.probe.bandwidth is not None and s.probe.sample_rate > 0:
        need(0 < s.probe.bandwidth < s.probe.sample_rate / 2, "probe.bandwidth",
             "must lie between 0 and half the sample rate, or auto for no band limit")
    need(s.probe.layout in LAYOUTS, "probe.layout", f"must be one of {LAYOUTS}")
    need(s.fiber.length > 0, "fiber.length", "must be > 0")
    need(1.4 <= s.fiber.group_index <= 1.6, "fiber.group_index", "must lie in [1.4, 1.6]")
    need(s.fiber.attenuation >= 0, "fiber.attenuation", "must be >= 0")
    need(s.fiber.thermal_coeff >= 0, "fiber.thermal_coeff", "must be >= 0")
    need(s.fiber.wavelength > 0, "fiber.wavelength", "must be > 0")
    need(s.gratings.transit_delay >= 0, "gratings.transit_delay", "must be >= 0")
    need(s.reflectors.connector_return_loss >= 0, "reflectors.connector_return_loss", "must be >= 0 dB")
    need(0 < s.reflectors.demarc_reflectivity <= 1, "reflectors.demarc_reflectivity", "must lie in (0, 1]")
    need(s.reflectors.demarc_round_trip >= 0, "reflectors.demarc_round_trip", "must be >= 0")
    need(2 <= s.frontend.bits <= 16, "frontend.bits", "must lie in [2, 16]")
    need(s.frontend.full_scale is None or s.frontend.full_scale > 0, "frontend.full_scale", "must be > 0 or auto")
    need(s.frontend.full_scale_headroom >= 1, "frontend.full_scale_headroom", "must be >= 1")
    need(s.frontend.noise_sigma_lsb >= 0, "frontend.noise_sigma_lsb", "must be >= 0")
    need(s.frontend.noise_method in NOISE_METHODS, "frontend.noise_method", f"must be one of {NOISE_METHODS}")
    need(s.frontend.n_averages >= 1, "frontend.n_averages", "must be >= 1")
    need(s.frontend.workers >= 1, "frontend.workers", "must be >= 1")
    need(s.estimator.fit_half_window >= 2, "estimator.fit_half_window", "must be >= 2")
    need(abs(s.environment.clock_skew_ppm) < 100, "environment.clock_skew_ppm", "|skew| must be < 100 ppm")
    try:
        parse_schedule(s.environment.temperature_schedule)
    except ValueError as exc:
        p.append(f"environment.temperature_schedule: {exc}")
    need(s.series.count >= 1, "series.count", "must be >= 1")
    need(s.series.spacing > 0, "series.spacing", "must be > 0")
    need(s.series.interleave in INTERLEAVES, "series.interleave", f"must be one of {INTERLEAVES}")
    need(1 <= s.limits.max_samples <= HARD_MAX_SAMPLES, "limits.max_samples",
         f"must lie in [1, {HARD_MAX_SAMPLES}]")
    if p:
        raise ConfigError(p)


def load_scenario(
    preset: str | None = None,
    config: str | Path | None = None,
    config_text: str | None = None,
    overrides: dict[str, dict[str, object]] | None = None,
) -> Scenario:
    """Build a validated scenario: defaults, then preset, then config, then overrides."""
    scn = Scenario()
    problems: list[str] = []
    if config is not None:
        try:
            config_text = Path(config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"config: cannot read {config}: {exc.strerror}"]) from exc
    parsed: dict[str, dict[str, str]] = {}
    if config_text is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(config_text)
        except configparser.Error as exc:
            raise ConfigError([f"config: {exc}"]) from exc
        parsed = {sec: dict(cp.items(sec)) for sec in cp.sections()}
        if preset is None:
            preset = parsed.get("scenario", {}).get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"preset: unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}"])
        apply_overrides(scn, PRESETS[preset], problems)
    if parsed:
        parsed.get("scenario", {}).pop("preset", None)
        apply_overrides(scn, parsed, problems)
    if overrides:
        apply_overrides(scn, overrides, problems)
    try:
        validate(scn)
    except ConfigError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return scn
