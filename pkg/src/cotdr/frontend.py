"""Direct-detection receiver: square-law detector, additive noise, ADC, averaging.

Noise for trace ``i`` comes from its own generator seeded by ``(seed, i)``,
and averaging sums integer codes before a single division, so the averaged
trace does not depend on how traces are split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_CHUNK = 1 << 16
NOISE_METHODS = ("table", "normal")

# Gaussian quantiles at the midpoints of 2**16 equal-probability bins.
# Indexing it with 16 random bits gives a Gaussian truncated at 4.3 sigma
# (variance 0.99998) about five times faster than standard_normal.
_GAUSS_TABLE = ndtri((np.arange(1 << 16) + 0.5) / (1 << 16)).astype(np.float32)


class FrontendError(ValueError):
    """Invalid receiver parameters."""


@dataclass(frozen=True)
class AdcSpec:
    bits: int = 7
    full_scale: float = 1e-3
    sample_rate: float = 50e9

    def __post_init__(self) -> None:
        if not (2 <= int(self.bits) <= 16 and int(self.bits) == self.bits):
            raise FrontendError(f"bits must be an integer in [2, 16], got {self.bits}")
        if not self.full_scale > 0:
            raise FrontendError(f"full_scale must be > 0, got {self.full_scale}")

    @property
    def top_code(self) -> int:
        return (1 << int(self.bits)) - 1

    @property
    def lsb(self) -> float:
        """Power per code step (W)."""
        return self.full_scale / self.top_code


@dataclass(frozen=True)
class NoiseSpec:
    """Additive receiver noise, ``sigma`` in watts.

    ``method="table"`` draws from a 2**16-entry Gaussian quantile table,
    ``"normal"`` from ``Generator.standard_normal``.
    """

    sigma: float = 0.0
    seed: int = 0
    method: str = "table"

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise FrontendError(f"sigma must be >= 0, got {self.sigma}")
        if self.method not in NOISE_METHODS:
            raise FrontendError(f"noise method must be one of {NOISE_METHODS}, got {self.method!r}")
        if not 0 <= int(self.seed) < 1 << 64:
            raise FrontendError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class AveragedTrace:
    """Mean code values of ``n_averages`` acquisitions (code units)."""

    samples: np.ndarray
    sample_rate: float
    n_averages: int
    bits: int = 7

    def __post_init__(self) -> None:
        if self.n_averages < 1:
            raise FrontendError("n_averages must be >= 1")

    def __len__(self) -> int:
        return int(self.samples.size)

    def scaled(self, factor: float) -> AveragedTrace:
        return AveragedTrace(self.samples * factor, self.sample_rate, self.n_averages, self.bits)


def detect(field: np.ndarray) -> np.ndarray:
    """Square-law detection, ``|E|^2`` in watts.

    A 2-D input is read as one row per mutually incoherent path; the path
    intensities are summed rather than the fields.
    """
    e = np.asarray(field)
    p = e.real**2 + e.imag**2 if np.iscomplexobj(e) else e.astype(np.float64) ** 2
    if p.ndim == 2:
        return p.sum(axis=0)
    return p


def auto_full_scale(power: np.ndarray, headroom: float = 1.1) -> float:
    """Scope range set to ``headroom`` times the strongest detected power."""
    peak = float(np.max(power))
    if not peak > 0:
        raise FrontendError("cannot calibrate full scale on an all-zero trace")
    return headroom * peak


def noise_stream(seed: int, trace_index: int) -> np.random.Generator:
    """Independent generator for one acquisition."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trace_index),))
    return np.random.Generator(np.random.SFC64(ss))


def _to_lsb(power: np.ndarray, adc: AdcSpec) -> np.ndarray:
    return np.asarray(power, dtype=np.float64) * (adc.top_code / adc.full_scale)


def gaussian_noise(rng: np.random.Generator, out: np.ndarray, method: str = "table") -> None:
    """Fill a float32 buffer with unit-variance noise."""
    if method == "normal":
        rng.standard_normal(out=out, dtype=np.float32)
        return
    raw = rng.bit_generator.random_raw((out.size + 3) // 4)
    np.take(_GAUSS_TABLE, raw.view(np.uint16)[: out.size], out=out)


def _acquire_into(acc: np.ndarray, level: np.ndarray, sigma_lsb: float, top: int, rng,
                  method: str = "table") -> None:
    """Add one trace's codes to ``acc``. ``level`` is the noiseless level in LSB plus 0.5."""
    hi = np.float32(top + 0.5)
    lo = np.float32(0.5)
    buf = np.empty(min(_CHUNK, level.size), dtype=np.float32)
    scale = np.float32(sigma_lsb)
    code_type = np.int16 if top <= np.iinfo(np.int16).max else np.int32
    for s in range(0, level.size, _CHUNK):
        e = min(s + _CHUNK, level.size)
        v = buf[: e - s]
        if sigma_lsb > 0:
            gaussian_noise(rng, v, method)
            if scale != 1:
                v *= scale
            v += level[s:e]
        else:
            v[:] = level[s:e]
        # clamp then truncate: floor(x + 0.5) on [0, top], i.e. round half up
        np.clip(v, lo, hi, out=v)
        acc[s:e] += v.astype(code_type)


def acquire_trace(power: np.ndarray, noise: NoiseSpec, adc: AdcSpec, trace_index: int) -> np.ndarray:
    """One noisy, quantised acquisition as integer codes in ``[0, 2**bits - 1]``.

    Codes are ``round(clamp(p + n, 0, full_scale) / full_scale * (2**bits - 1))``
    with halves rounded away from zero.
    """
    level = (_to_lsb(power, adc) + 0.5).astype(np.float32)
    acc = np.zeros(level.size, dtype=np.int32)
    _acquire_into(acc, level, noise.sigma / adc.lsb, adc.top_code, noise_stream(noise.seed, trace_index),
                  noise.method)
    return acc


def _sum_codes(level: np.ndarray, noise: NoiseSpec, adc: AdcSpec, indices: range) -> np.ndarray:
    acc = np.zeros(level.size, dtype=np.int32)
    sigma_lsb = noise.sigma / adc.lsb
    for i in indices:
        _acquire_into(acc, level, sigma_lsb, adc.top_code, noise_stream(noise.seed, i), noise.method)
    return acc


def average_traces(
    power: np.ndarray,
    noise: NoiseSpec,
    adc: AdcSpec,
    n: int,
    workers: int = 1,
) -> AveragedTrace:
    """Mean of ``n`` acquisitions with trace indices ``0 .. n-1``.

    Integer code sums are exact, so the result is bit-identical for any
    ``workers`` count.
    """
    if n < 1:
        raise FrontendError(f"n must be >= 1, got {n}")
    if n * adc.top_code >= 1 << 31:
        raise FrontendError("too many averages for a 32-bit code accumulator")
    level = (_to_lsb(power, adc) + 0.5).astype(np.float32)
    if noise.sigma == 0:
        total = _sum_codes(level, noise, adc, range(1)).astype(np.int64) * n
    elif workers <= 1:
        total = _sum_codes(level, noise, adc, range(n))
    else:
        bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
        parts = [range(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)]
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            sums = list(pool.map(lambda r: _sum_codes(level, noise, adc, r), parts))
        total = np.zeros(level.size, dtype=np.int64)
        for s in sums:
            total += s
    return AveragedTrace(total / float(n), adc.sample_rate, int(n), int(adc.bits))


def ideal_trace(power: np.ndarray, adc: AdcSpec) -> AveragedTrace:
    """Noiseless, unquantised receiver: power mapped to (fractional) code units."""
    x = np.clip(_to_lsb(power, adc), 0.0, float(adc.top_code))
    return AveragedTrace(x, adc.sample_rate, 1, int(adc.bits))
