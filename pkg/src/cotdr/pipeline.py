"""Measurement chain wiring: scenario -> frame -> link -> receiver -> latency.

The simulator keeps the probe frame and the last few detected power traces,
so a series over a static environment propagates the waveform only once and
then draws fresh receiver noise per measurement.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .analysis import MeasurementSeries
from .channel import (
    Environment,
    FiberSpec,
    GratingSpec,
    LinkModel,
    build_reflective_link,
    build_transmissive_link,
    fiber_one_way_delay,
    propagate_intensity,
    scale_timebase,
)
from .estimator import (
    CorrelationProfile,
    LatencyEstimate,
    PeakFit,
    compute_latency,
    correlate_golay,
    find_reflection_peaks,
    fit_raised_cosine,
    peak_window,
)
from .frontend import AdcSpec, AveragedTrace, NoiseSpec, auto_full_scale, average_traces, ideal_trace
from .golay import GolayPair, generate_golay_pair
from .probe import ModulationSpec, ProbeFrame, build_probe_frame, check_sample_budget
from .scenario import Scenario

RECORD_PAD_SAMPLES = 256
_ROLES = {"reflective": 0, "transmissive": 1, "back-to-back": 2}
_CACHE_SIZE = 3


class PipelineError(RuntimeError):
    """A stage of the measurement chain failed; the message names the stage."""


@dataclass(frozen=True, eq=False)
class Measurement:
    index: int
    t: float
    mode: str
    estimate: LatencyEstimate
    truth_one_way: float
    delta_temperature: float
    seed: int
    trace: AveragedTrace
    profile: CorrelationProfile
    peak_indices: tuple[int, ...]
    full_scale: float
    end_swing_lsb: float

    @property
    def error(self) -> float:
        return self.estimate.one_way - self.truth_one_way


@dataclass(frozen=True, eq=False)
class SeriesResult:
    measurements: tuple[Measurement, ...]

    def select(self, mode: str) -> tuple[Measurement, ...]:
        return tuple(m for m in self.measurements if m.mode == mode)

    def series(self, mode: str, demarc_calibration: float | None = None) -> MeasurementSeries:
        """One-way latencies of one measurement type, optionally re-calibrated."""
        ms = self.select(mode)
        if demarc_calibration is None or mode != "reflective":
            y = [m.estimate.one_way for m in ms]
        else:
            y = [(m.estimate.round_trip - demarc_calibration) / 2.0 for m in ms]
        return MeasurementSeries(np.array([m.t for m in ms]), np.array(y), mode)


def measurement_seed(master_seed: int, index: int, role: str) -> int:
    """Noise seed for one measurement, derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(index), _ROLES[role]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def series_schedule(count: int, compare: bool, interleave: str) -> list[str]:
    """Measurement type per slot. ``strict`` alternates every slot, ``pairs`` every two."""
    if not compare:
        return ["reflective"] * count
    if interleave == "strict":
        return ["reflective" if i % 2 == 0 else "transmissive" for i in range(count)]
    return ["reflective" if (i // 2) % 2 == 0 else "transmissive" for i in range(count)]


def _stage(name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except (ValueError, ArithmeticError, MemoryError) as exc:
                raise PipelineError(f"{name}: {exc}") from exc

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


class Simulator:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.pair: GolayPair = self._make_pair()
        self.frame: ProbeFrame = self._make_frame()
        self._power_cache: OrderedDict[tuple, np.ndarray] = OrderedDict()
        self._b2b_fit: PeakFit | None = None

    @_stage("golay")
    def _make_pair(self) -> GolayPair:
        return generate_golay_pair(self.scenario.probe.golay_order)

    @_stage("probe")
    def _make_frame(self) -> ProbeFrame:
        p = self.scenario.probe
        mod = ModulationSpec(p.on_power, p.extinction_ratio_db)
        return build_probe_frame(
            self.pair, mod, p.bit_rate, p.sample_rate, p.frame_period,
            max_samples=self.scenario.limits.max_samples, layout=p.layout,
        )

    # -- link ---------------------------------------------------------------

    def fiber(self) -> FiberSpec:
        f = self.scenario.fiber
        return FiberSpec(f.length, f.group_index, f.attenuation, f.dispersion, f.thermal_coeff)

    def gratings(self) -> tuple[GratingSpec, GratingSpec]:
        g = self.scenario.gratings
        if not g.enabled:
            return GratingSpec(0.0, 0.0, g.transit_delay), GratingSpec(0.0, 0.0, g.transit_delay)
        return (
            GratingSpec(g.pre_dispersion, g.insertion_loss, g.transit_delay),
            GratingSpec(g.post_dispersion, g.insertion_loss, g.transit_delay),
        )

    @_stage("channel")
    def link(self, mode: str, delta_temperature: float = 0.0) -> LinkModel:
        """Link as seen by the receiver timebase."""
        s = self.scenario
        env = Environment(delta_temperature, s.environment.clock_skew_ppm)
        pre, post = self.gratings()
        if mode == "reflective":
            r = s.reflectors
            link = build_reflective_link(
                self.fiber(), pre, post, r.connector_return_loss, r.demarc_reflectivity,
                r.demarc_round_trip, env, s.fiber.wavelength,
            )
        elif mode == "transmissive":
            link = build_transmissive_link(self.fiber(), pre, post, env, s.fiber.wavelength)
        elif mode == "back-to-back":
            fiber = FiberSpec(0.0, s.fiber.group_index)
            link = build_transmissive_link(fiber, pre, post, env, s.fiber.wavelength)
        else:
            raise ValueError(f"unknown measurement mode {mode!r}")
        return scale_timebase(link, s.environment.clock_skew_ppm)

    def truth_one_way(self, mode: str, delta_temperature: float = 0.0) -> float:
        if mode == "back-to-back":
            return 0.0
        return fiber_one_way_delay(self.fiber(), delta_temperature)

    def record_length(self, link: LinkModel) -> float:
        fs = self.frame.sample_rate
        n = int(math.ceil((link.max_delay + self.frame.extent) * fs)) + RECORD_PAD_SAMPLES
        check_sample_budget(n, self.scenario.limits.max_samples, "receiver record")
        return n / fs

    @_stage("channel")
    def received_power(self, mode: str, delta_temperature: float = 0.0) -> np.ndarray:
        key = (mode, float(delta_temperature))
        if key in self._power_cache:
            self._power_cache.move_to_end(key)
            return self._power_cache[key]
        link = self.link(mode, delta_temperature)
        power = propagate_intensity(self.frame, link, self.record_length(link), self.scenario.probe.bandwidth)
        self._power_cache[key] = power
        while len(self._power_cache) > _CACHE_SIZE:
            self._power_cache.popitem(last=False)
        return power

    # -- receiver -----------------------------------------------------------

    def adc(self, power: np.ndarray) -> AdcSpec:
        fe = self.scenario.frontend
        fs = fe.full_scale if fe.full_scale is not None else auto_full_scale(power, fe.full_scale_headroom)
        return AdcSpec(fe.bits, fs, self.frame.sample_rate)

    @_stage("frontend")
    def acquire(self, power: np.ndarray, seed: int, workers: int | None = None) -> tuple[AveragedTrace, AdcSpec]:
        fe = self.scenario.frontend
        adc = self.adc(power)
        if fe.ideal:
            return ideal_trace(power, adc), adc
        noise = NoiseSpec(fe.noise_sigma_lsb * adc.lsb, seed, fe.noise_method)
        n_workers = fe.workers if workers is None else workers
        return average_traces(power, noise, adc, fe.n_averages, workers=n_workers), adc

    # -- estimation ---------------------------------------------------------

    @_stage("estimator")
    def locate(self, trace: AveragedTrace, count: int) -> tuple[CorrelationProfile, list[int], list[PeakFit]]:
        """Correlate, pick ``count`` echoes and fit each one."""
        fr = self.frame
        profile = correlate_golay(trace, self.pair, fr.samples_per_bit, fr.subframe_b_offset)
        ghost = fr.subframe_b_offset if fr.layout == "same-packet" else None
        peaks = find_reflection_peaks(
            profile, count, 1.5 * fr.subframe_duration,
            ghost_offset=ghost, ghost_halfwidth=fr.subframe_duration,
        )
        fits = []
        for k in peaks:
            center, half_window, center_est, fwhm = peak_window(
                profile, k, self.scenario.estimator.fit_half_window
            )
            fits.append(
                fit_raised_cosine(
                    profile, center, half_window,
                    center_init=center_est, half_width_init=max(2.0, fwhm),
                )
            )
        return profile, peaks, fits

    def back_to_back_fit(self) -> PeakFit:
        """Single-pass reference with the fibre removed, measured once."""
        if self._b2b_fit is None:
            power = self.received_power("back-to-back")
            trace, _ = self.acquire(power, measurement_seed(self.scenario.master_seed, 0, "back-to-back"))
            _, _, fits = self.locate(trace, 1)
            self._b2b_fit = fits[0]
        return self._b2b_fit

    def end_swing_lsb(self, mode: str, adc: AdcSpec) -> float:
        """On/off power swing of the far echo in one acquisition, in LSB."""
        link = self.link(mode)
        path = link.paths[-1]
        mod = self.frame.modulation
        return (mod.on_power - mod.off_power) * 10.0 ** (-path.loss / 10.0) / adc.lsb

    def measure(self, index: int = 0, t: float = 0.0, mode: str | None = None,
                workers: int | None = None) -> Measurement:
        s = self.scenario
        mode = mode or s.scenario.mode
        dtemp = s.temperature_at(t)
        seed = measurement_seed(s.master_seed, index, mode)
        power = self.received_power(mode, dtemp)
        trace, adc = self.acquire(power, seed, workers)
        if mode == "reflective":
            profile, peaks, fits = self.locate(trace, 2)
            est = self._latency(fits[0], fits[1], s.skew_correction, s.demarc_calibration, True)
        else:
            ref = self.back_to_back_fit()
            profile, peaks, fits = self.locate(trace, 1)
            est = self._latency(ref, fits[0], s.skew_correction, 0.0, False)
        return Measurement(
            index=index, t=t, mode=mode, estimate=est,
            truth_one_way=self.truth_one_way(mode, dtemp), delta_temperature=dtemp, seed=seed,
            trace=trace, profile=profile, peak_indices=tuple(peaks), full_scale=adc.full_scale,
            end_swing_lsb=self.end_swing_lsb(mode, adc),
        )

    @staticmethod
    @_stage("estimator")
    def _latency(ref: PeakFit, end: PeakFit, skew: float, demarc: float, reflective: bool) -> LatencyEstimate:
        return compute_latency(ref, end, skew, demarc, reflective=reflective)

    def run_series(self, count: int | None = None, workers: int | None = None,
                   keep_traces: bool = False) -> SeriesResult:
        """Measurements at ``index * spacing`` seconds, sequentially."""
        s = self.scenario
        n = s.series.count if count is None else count
        kinds = series_schedule(n, s.series.compare, s.series.interleave)
        out = []
        for i, kind in enumerate(kinds):
            m = self.measure(i, i * s.series.spacing, kind, workers)
            if not keep_traces and i != n - 1:
                m = _strip(m)
            out.append(m)
        return SeriesResult(tuple(out))


def _strip(m: Measurement) -> Measurement:
    empty = AveragedTrace(np.zeros(1), m.trace.sample_rate, m.trace.n_averages, m.trace.bits)
    return Measurement(
        m.index, m.t, m.mode, m.estimate, m.truth_one_way, m.delta_temperature, m.seed,
        empty, CorrelationProfile(np.zeros(1), m.profile.sample_rate), m.peak_indices,
        m.full_scale, m.end_swing_lsb,
    )
