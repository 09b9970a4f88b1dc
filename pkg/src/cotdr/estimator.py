"""From an averaged trace to a latency: Golay correlation, peak picking,
raised-cosine sub-sample fitting and timebase-skew handling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .frontend import AveragedTrace
from .golay import BipolarSequence, GolayPair
from .probe import reference_waveform

FIT_HALF_WINDOW = 5
FIT_MAX_ITER = 100
FIT_STEP_TOL = 1e-4  # in sample periods


class EstimatorError(ValueError):
    """Estimator input that cannot produce a result."""


class FitError(EstimatorError):
    """Raised-cosine fit did not converge; ``best`` holds the last parameters, flagged invalid."""

    def __init__(self, message: str, best: PeakFit):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True, eq=False)
class CorrelationProfile:
    """Correlation value per lag; lag index ``k`` is trace sample ``k``."""

    values: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        if self.values.size < 1:
            raise EstimatorError("empty correlation profile")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate

    def lag_time(self, index):
        """Seconds for a lag index (scalar or array)."""
        return index / self.sample_rate

    def scaled(self, factor: float) -> CorrelationProfile:
        return CorrelationProfile(self.values * factor, self.sample_rate)


@dataclass(frozen=True)
class PeakFit:
    """Raised-cosine fit; times in seconds, levels in profile units.

    Model: ``baseline + amplitude/2 * (1 + cos(pi*(t - t0)/half_width))``
    for ``|t - t0| <= half_width``, ``baseline`` elsewhere.
    """

    t0: float
    amplitude: float
    half_width: float
    baseline: float
    residual_rms: float
    valid: bool = True
    iterations: int = 0


@dataclass(frozen=True)
class LatencyEstimate:
    """Skew-corrected latency.

    For reflective links ``round_trip`` is end minus reference and
    ``one_way = (round_trip - demarc_round_trip) / 2``. For a single pass
    both fields carry the corrected interval.
    """

    round_trip: float
    one_way: float
    skew_ppm_applied: float
    ref_fit: PeakFit
    end_fit: PeakFit
    reflective: bool = True
    demarc_round_trip: float = 0.0


# -- correlation -------------------------------------------------------------


def sliding_correlation(x: np.ndarray, ref: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Valid-mode ``out[k] = sum_i ref[i] * x[k + i]`` by overlap-save FFT blocks.

    Memory beyond the output is a few FFT blocks, independent of ``x.size``.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    m = ref.size
    n_out = x.size - m + 1
    if m < 1 or n_out < 1:
        raise EstimatorError(f"trace of {x.size} samples is shorter than the {m}-sample reference")
    if out is None:
        out = np.empty(n_out)
    nfft = sfft.next_fast_len(max(4 * m, 1 << 16), real=True)
    step = nfft - m + 1
    spec = np.conj(sfft.rfft(ref, nfft))
    seg = np.empty(nfft)
    for start in range(0, n_out, step):
        avail = min(nfft, x.size - start)
        seg[:avail] = x[start : start + avail]
        seg[avail:] = 0.0
        y = sfft.irfft(sfft.rfft(seg) * spec, nfft)
        k = min(step, n_out - start)
        out[start : start + k] = y[:k]
    return out


def correlate_sequence(samples: np.ndarray, seq: BipolarSequence, samples_per_bit: int) -> np.ndarray:
    """Valid-mode cross-correlation of the mean-removed trace with one reference.

    ``out[k] = sum_i ref[i] * x[k + i]``.
    """
    x = np.asarray(samples, dtype=np.float64)
    ref = reference_waveform(seq, samples_per_bit)
    if x.size < ref.size:
        raise EstimatorError(f"trace of {x.size} samples is shorter than the {ref.size}-sample reference")
    # the reference has zero mean, so removing the trace mean only helps rounding
    return sliding_correlation(x - x.mean(), ref)


def correlate_golay(
    trace: AveragedTrace,
    pair: GolayPair,
    samples_per_bit: int,
    subframe_b_offset: float,
) -> CorrelationProfile:
    """Sum of the A and B correlations, with B advanced by its subframe offset."""
    fs = trace.sample_rate
    shift_f = subframe_b_offset * fs
    shift = int(round(shift_f))
    if abs(shift_f - shift) > 1e-6:
        raise EstimatorError(f"subframe_b_offset {subframe_b_offset:g} s is not a whole number of samples")
    ref_len = pair.length * samples_per_bit
    if len(trace) < ref_len + shift + 1:
        raise EstimatorError(
            f"trace of {len(trace)} samples cannot hold both echo subframes "
            f"({ref_len} reference samples, B offset {shift})"
        )
    x = trace.samples - trace.samples.mean()
    n = x.size - ref_len + 1 - shift
    values = sliding_correlation(x[: n + ref_len - 1], reference_waveform(pair.a, samples_per_bit))
    values += sliding_correlation(x[shift:], reference_waveform(pair.b, samples_per_bit))
    return CorrelationProfile(values, fs)


# -- peak selection ----------------------------------------------------------


def find_reflection_peaks(
    profile: CorrelationProfile,
    count: int,
    min_separation: float,
    *,
    ghost_offset: float | None = None,
    ghost_halfwidth: float = 0.0,
) -> list[int]:
    """Indices of the ``count`` largest local maxima, pairwise at least
    ``min_separation`` seconds apart, in ascending order.

    Peaks are taken greedily by height. With ``ghost_offset`` set, lags within
    ``ghost_halfwidth`` of ``accepted +/- ghost_offset`` are also excluded:
    that is where a strong echo's A/B cross-correlation lands when both
    subframes share one packet.
    """
    if count < 1:
        raise EstimatorError(f"count must be >= 1, got {count}")
    v = profile.values
    fs = profile.sample_rate
    if v.size >= 3:
        cand = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1
    else:
        cand = np.array([int(np.argmax(v))])
    heights = v[cand]
    alive = np.ones(cand.size, dtype=bool)
    sep = min_separation * fs
    ghost = None if ghost_offset is None else ghost_offset * fs
    ghost_hw = ghost_halfwidth * fs
    chosen: list[int] = []
    while len(chosen) < count and alive.any():
        j = int(np.argmax(np.where(alive, heights, -np.inf)))
        k = int(cand[j])
        chosen.append(k)
        alive &= np.abs(cand - k) >= sep
        if ghost is not None:
            for g in (k - ghost, k + ghost):
                alive &= np.abs(cand - g) > ghost_hw
    if len(chosen) < count:
        raise EstimatorError(f"requested {count} peaks but found only {len(chosen)} qualifying maxima")
    return sorted(chosen)


def peak_window(
    profile: CorrelationProfile,
    peak_index: int,
    min_half_window: int = FIT_HALF_WINDOW,
    max_walk: int = 400,
) -> tuple[int, int, float, float]:
    """Fit window adapted to the peak's half-maximum extent.

    Returns ``(center_index, half_window, center_estimate, fwhm_samples)``;
    the centre is the midpoint of the interpolated half-maximum crossings,
    which stays on the peak when dispersion flattens or splits its top.
    """
    v = profile.values
    k = int(peak_index)
    half = v[k] / 2.0
    lo = k
    while lo > 0 and k - lo < max_walk and v[lo] > half:
        lo -= 1
    hi = k
    while hi < v.size - 1 and hi - k < max_walk and v[hi] > half:
        hi += 1
    if v[lo] > half or v[hi] > half or lo == k or hi == k:
        return k, min_half_window, float(k), 2.0
    left = lo + (half - v[lo]) / (v[lo + 1] - v[lo])
    right = hi - 1 + (v[hi - 1] - half) / (v[hi - 1] - v[hi])
    mid = 0.5 * (left + right)
    fwhm = right - left
    return int(round(mid)), max(min_half_window, int(math.ceil(fwhm))), float(mid), float(fwhm)


# -- raised-cosine fit -------------------------------------------------------


def raised_cosine(t: np.ndarray, t0: float, amplitude: float, half_width: float, baseline: float) -> np.ndarray:
    u = (np.asarray(t, dtype=np.float64) - t0) / half_width
    inside = np.abs(u) <= 1.0
    return baseline + np.where(inside, 0.5 * amplitude * (1.0 + np.cos(np.pi * u)), 0.0)


def _rc_jacobian(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    t0, amp, hw, _ = p
    u = (t - t0) / hw
    inside = np.abs(u) <= 1.0
    s = np.where(inside, np.sin(np.pi * u), 0.0)
    jac = np.empty((t.size, 4))
    jac[:, 0] = 0.5 * amp * s * np.pi / hw
    jac[:, 1] = np.where(inside, 0.5 * (1.0 + np.cos(np.pi * u)), 0.0)
    jac[:, 2] = 0.5 * amp * s * np.pi * u / hw
    jac[:, 3] = 1.0
    return jac


def _parabolic_offset(y_m: float, y_0: float, y_p: float) -> float:
    den = y_m - 2.0 * y_0 + y_p
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (y_m - y_p) / den, -1.0, 1.0))


def fit_raised_cosine(
    profile: CorrelationProfile,
    peak_index: int,
    half_window_samples: int = FIT_HALF_WINDOW,
    *,
    center_init: float | None = None,
    half_width_init: float = 2.0,
    max_iter: int = FIT_MAX_ITER,
) -> PeakFit:
    """Levenberg-Marquardt fit of a raised cosine around ``peak_index``.

    The window is ``peak_index +/- half_window_samples``. The centre starts
    from a 3-point parabola through the discrete maximum unless
    ``center_init`` (a fractional sample index) is given; ``half_width_init``
    is in samples. Convergence is declared once an accepted step moves the
    centre and half-width by less than 1e-4 samples.

    Raises
    ------
    EstimatorError
        If the window runs past either end of the profile.
    FitError
        If the iteration cap is reached or the result leaves the window.
    """
    if half_window_samples < 2:
        raise EstimatorError(f"half_window_samples must be >= 2, got {half_window_samples}")
    v = profile.values
    c = int(peak_index)
    w = int(half_window_samples)
    if c - w < 0 or c + w >= v.size:
        raise EstimatorError(
            f"fit window [{c - w}, {c + w}] is clipped by the profile edge (length {v.size})"
        )
    t = np.arange(-w, w + 1, dtype=np.float64)
    y = v[c - w : c + w + 1].astype(np.float64)

    base0 = float(y.min())
    if center_init is None:
        u0 = _parabolic_offset(v[c - 1], v[c], v[c + 1])
    else:
        u0 = float(center_init) - c
    p = np.array([u0, float(v[c]) - base0, float(half_width_init), base0])
    scale = max(abs(p[1]), float(np.max(np.abs(y))), 1e-300)

    def cost(q: np.ndarray) -> float:
        r = y - raised_cosine(t, *q)
        return float(r @ r)

    f = cost(p)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = _rc_jacobian(t, p)
        r = y - raised_cosine(t, *p)
        jtj = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1e-12 * max(float(diag.max()), 1e-300)
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            if trial[2] > 0.05:
                f_trial = cost(trial)
                if f_trial <= f:
                    accepted = True
                    break
            lam *= 4.0
        if not accepted:
            # no downhill step at any damping: at a (numerical) minimum
            converged = True
            break
        p, f = trial, f_trial
        lam = max(lam / 3.0, 1e-12)
        small = abs(step[0]) < FIT_STEP_TOL and abs(step[2]) < FIT_STEP_TOL
        small &= abs(step[1]) < FIT_STEP_TOL * scale and abs(step[3]) < FIT_STEP_TOL * scale
        if small or f <= 1e-30 * scale**2:
            converged = True
            break

    fs = profile.sample_rate
    rms = math.sqrt(f / y.size)
    inside = -w <= p[0] <= w and p[2] > 0
    fit = PeakFit(
        t0=(c + p[0]) / fs,
        amplitude=float(p[1]),
        half_width=float(p[2]) / fs,
        baseline=float(p[3]),
        residual_rms=rms,
        valid=bool(converged and inside),
        iterations=it,
    )
    if not converged:
        raise FitError(f"raised-cosine fit did not converge in {max_iter} iterations", fit)
    if not inside:
        raise FitError("raised-cosine fit left the fit window", fit)
    return fit


def peak_fwhm(fit: PeakFit) -> float:
    """Full width at half maximum of the fitted raised cosine (equals ``half_width``)."""
    return fit.half_width


# -- clock skew --------------------------------------------------------------


def rising_zero_crossings(recording: np.ndarray) -> np.ndarray:
    """Fractional sample positions of rising zero crossings after mean removal."""
    x = np.asarray(recording, dtype=np.float64)
    x = x - x.mean()
    idx = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    return idx + (-x[idx]) / (x[idx + 1] - x[idx])


def count_periods(recording: np.ndarray, sample_rate: float) -> tuple[int, float]:
    """Number of whole periods between the first and last rising crossing, and their duration."""
    tc = rising_zero_crossings(recording)
    if tc.size < 2:
        raise EstimatorError(f"found {tc.size} rising zero crossings; need at least 2")
    return int(tc.size - 1), float((tc[-1] - tc[0]) / sample_rate)


def estimate_clock_skew(recording: np.ndarray, nominal_frequency: float, sample_rate: float) -> float:
    """Timebase error in ppm from a recorded reference tone.

    Positive when the recorded duration of N periods reads short of
    ``N / nominal_frequency``.
    """
    n, duration = count_periods(recording, sample_rate)
    if n < 1000:
        raise EstimatorError(f"recording holds {n} whole periods; at least 1000 are required")
    return (n / nominal_frequency / duration - 1.0) * 1e6


def synthesize_reference(
    nominal_frequency: float,
    periods: int,
    sample_rate: float,
    skew_ppm: float = 0.0,
    *,
    noise_rms: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Sine reference as recorded by a timebase with the given skew.

    The recording spans exactly ``periods`` whole periods between its first
    and last rising zero crossing, which fall between samples.
    """
    f_app = nominal_frequency * (1.0 + skew_ppm * 1e-6)
    t_first = 0.25 / f_app + 0.3137 / sample_rate
    t_end = t_first + (periods + 0.25) / f_app
    n = int(math.ceil(t_end * sample_rate))
    t = np.arange(n, dtype=np.float64) / sample_rate
    x = np.sin(2.0 * np.pi * f_app * (t - t_first))
    if noise_rms > 0:
        x += np.random.default_rng(seed).normal(0.0, noise_rms, n)
    return x


# -- latency -----------------------------------------------------------------


def compute_latency(
    ref_fit: PeakFit,
    end_fit: PeakFit,
    skew_ppm: float,
    demarc_round_trip: float = 0.0,
    *,
    reflective: bool = True,
) -> LatencyEstimate:
    """Skew-corrected interval between two fitted peaks.

    A timebase with skew ``s`` reads durations short by ``1 + s*1e-6``, so the
    raw interval is scaled up by that factor.
    """
    if not end_fit.t0 > ref_fit.t0:
        raise EstimatorError(
            f"end peak at {end_fit.t0:.12g} s does not follow reference peak at {ref_fit.t0:.12g} s"
        )
    interval = (end_fit.t0 - ref_fit.t0) * (1.0 + skew_ppm * 1e-6)
    if reflective:
        one_way = (interval - demarc_round_trip) / 2.0
    else:
        one_way = interval
    return LatencyEstimate(
        round_trip=interval,
        one_way=one_way,
        skew_ppm_applied=skew_ppm,
        ref_fit=ref_fit,
        end_fit=end_fit,
        reflective=reflective,
        demarc_round_trip=demarc_round_trip if reflective else 0.0,
    )
