"""Discrete-path fibre link model: delay, loss and accumulated chromatic dispersion.

A link is a small set of mutually incoherent paths (input-connector
reflection, far-end demarcation reflection, or a single transmissive pass).
Each path is an all-pass dispersion filter followed by an attenuation and a
delay. Delays are split into an integer-sample shift and a frequency-domain
linear-phase fractional part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft

from .probe import ProbeFrame

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_WAVELENGTH = 1550e-9
DEFAULT_GROUP_INDEX = 1.4682

_PS_PER_NM = 1e-3  # ps/nm expressed in s/m


class ChannelError(ValueError):
    """Invalid link parameters or a record that cannot hold the echoes."""


@dataclass(frozen=True)
class FiberSpec:
    """Fibre span. ``dispersion`` in ps/(nm km), ``attenuation`` in dB/km.

    ``thermal_coeff`` is the fractional group-delay change per kelvin.
    A zero length describes a back-to-back connection.
    """

    length: float
    group_index: float = DEFAULT_GROUP_INDEX
    attenuation: float = 0.2
    dispersion: float = 17.0
    thermal_coeff: float = 7e-6

    def __post_init__(self) -> None:
        if not self.length >= 0:
            raise ChannelError(f"fiber length must be >= 0 m, got {self.length}")
        if not 1.4 <= self.group_index <= 1.6:
            raise ChannelError(f"group_index must lie in [1.4, 1.6], got {self.group_index}")
        if not self.attenuation >= 0:
            raise ChannelError(f"attenuation must be >= 0 dB/km, got {self.attenuation}")
        if not self.thermal_coeff >= 0:
            raise ChannelError(f"thermal_coeff must be >= 0 /K, got {self.thermal_coeff}")
        if not math.isfinite(self.dispersion):
            raise ChannelError("fiber dispersion must be finite")

    @property
    def length_km(self) -> float:
        return self.length / 1e3

    @property
    def loss_db(self) -> float:
        return self.attenuation * self.length_km

    @property
    def dispersion_total(self) -> float:
        """Accumulated one-pass dispersion in ps/nm."""
        return self.dispersion * self.length_km


@dataclass(frozen=True)
class GratingSpec:
    """Dispersion-compensating grating: ps/nm, dB, seconds."""

    dispersion: float = -1700.0
    insertion_loss: float = 0.0
    transit_delay: float = 0.0

    def __post_init__(self) -> None:
        if not self.transit_delay >= 0:
            raise ChannelError(f"grating transit_delay must be >= 0 s, got {self.transit_delay}")
        if not math.isfinite(self.dispersion):
            raise ChannelError("grating dispersion must be finite")


IDEAL_GRATING = GratingSpec(dispersion=0.0, insertion_loss=0.0, transit_delay=0.0)


@dataclass(frozen=True)
class ReflectionPath:
    label: str
    delay: float
    loss: float
    dispersion_total: float

    def __post_init__(self) -> None:
        if not self.delay >= 0:
            raise ChannelError(f"path {self.label!r}: delay must be >= 0, got {self.delay}")
        if not math.isfinite(self.dispersion_total):
            raise ChannelError(f"path {self.label!r}: dispersion_total must be finite")

    @property
    def amplitude_gain(self) -> float:
        return 10.0 ** (-self.loss / 20.0)


@dataclass(frozen=True)
class LinkModel:
    paths: tuple[ReflectionPath, ...]
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self) -> None:
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        if not paths:
            raise ChannelError("link needs at least one path")
        labels = [p.label for p in paths]
        if len(set(labels)) != len(labels):
            raise ChannelError(f"path labels must be unique, got {labels}")

    def path(self, label: str) -> ReflectionPath:
        for p in self.paths:
            if p.label == label:
                return p
        raise KeyError(label)

    @property
    def max_delay(self) -> float:
        return max(p.delay for p in self.paths)

    def shifted(self, delta: float, labels: tuple[str, ...] | None = None) -> LinkModel:
        """Copy with ``delta`` seconds added to the named paths (all by default)."""
        paths = tuple(
            replace(p, delay=p.delay + delta) if labels is None or p.label in labels else p
            for p in self.paths
        )
        return replace(self, paths=paths)


@dataclass(frozen=True)
class Environment:
    """Temperature offset from calibration (K) and receiver timebase error (ppm).

    A positive ``clock_skew_ppm`` makes recorded durations read short by a
    factor ``1 / (1 + skew * 1e-6)``.
    """

    delta_temperature: float = 0.0
    clock_skew_ppm: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.clock_skew_ppm) < 100:
            raise ChannelError(f"|clock_skew_ppm| must be < 100, got {self.clock_skew_ppm}")


def fiber_one_way_delay(fiber: FiberSpec, delta_t: float = 0.0) -> float:
    """Group delay of one pass, including the thermal coefficient."""
    return fiber.group_index * fiber.length / SPEED_OF_LIGHT * (1.0 + fiber.thermal_coeff * delta_t)


def build_reflective_link(
    fiber: FiberSpec,
    dcg_pre: GratingSpec,
    dcg_post: GratingSpec,
    connector_return_loss: float,
    demarc_reflectivity: float,
    demarc_round_trip: float,
    env: Environment = Environment(),
    wavelength: float = DEFAULT_WAVELENGTH,
) -> LinkModel:
    """Two-echo link: input-connector reference and far-end demarcation reflector."""
    if not 0 < demarc_reflectivity <= 1:
        raise ChannelError(f"demarc_reflectivity must lie in (0, 1], got {demarc_reflectivity}")
    if not demarc_round_trip >= 0:
        raise ChannelError(f"demarc_round_trip must be >= 0, got {demarc_round_trip}")
    transit = dcg_pre.transit_delay + dcg_post.transit_delay
    dcg_loss = dcg_pre.insertion_loss + dcg_post.insertion_loss
    dcg_disp = dcg_pre.dispersion + dcg_post.dispersion
    one_way = fiber_one_way_delay(fiber, env.delta_temperature)
    ref = ReflectionPath(
        label="input-reflection",
        delay=transit,
        loss=dcg_loss + connector_return_loss,
        dispersion_total=dcg_disp,
    )
    end = ReflectionPath(
        label="end-reflection",
        delay=transit + 2.0 * one_way + demarc_round_trip,
        loss=dcg_loss + 2.0 * fiber.loss_db - 10.0 * math.log10(demarc_reflectivity),
        dispersion_total=dcg_disp + 2.0 * fiber.dispersion_total,
    )
    return LinkModel((ref, end), wavelength)


def build_transmissive_link(
    fiber: FiberSpec,
    dcg_pre: GratingSpec,
    dcg_post: GratingSpec,
    env: Environment = Environment(),
    wavelength: float = DEFAULT_WAVELENGTH,
) -> LinkModel:
    """Single pass through both gratings and the fibre."""
    path = ReflectionPath(
        label="single-pass",
        delay=dcg_pre.transit_delay + dcg_post.transit_delay + fiber_one_way_delay(fiber, env.delta_temperature),
        loss=dcg_pre.insertion_loss + dcg_post.insertion_loss + fiber.loss_db,
        dispersion_total=dcg_pre.dispersion + dcg_post.dispersion + fiber.dispersion_total,
    )
    return LinkModel((path,), wavelength)


def scale_timebase(link: LinkModel, skew_ppm: float) -> LinkModel:
    """Delays as seen by a receiver whose timebase has the given error."""
    factor = 1.0 / (1.0 + skew_ppm * 1e-6)
    return replace(link, paths=tuple(replace(p, delay=p.delay * factor) for p in link.paths))


def dispersion_coefficient(dispersion_total: float, wavelength: float) -> float:
    """lambda^2 * D / c in s/Hz (group-delay slope versus baseband frequency)."""
    return wavelength**2 * dispersion_total * _PS_PER_NM / SPEED_OF_LIGHT


def _dispersion_response(freqs: np.ndarray, dispersion_total: float, wavelength: float) -> np.ndarray:
    k = dispersion_coefficient(dispersion_total, wavelength)
    return np.exp(-1j * np.pi * k * freqs**2)


def apply_dispersion(
    field: np.ndarray,
    sample_rate: float,
    dispersion_total: float,
    wavelength: float = DEFAULT_WAVELENGTH,
) -> np.ndarray:
    """Frequency-domain all-pass chromatic dispersion over the whole vector.

    Each baseband component ``f`` is multiplied by
    ``exp(-j*pi*(lambda^2*D/c)*f^2)``; the filter is circular over the input.
    """
    x = np.asarray(field, dtype=np.complex128)
    if x.size == 0:
        raise ChannelError("field must be non-empty")
    if dispersion_total == 0:
        return x.copy()
    freqs = sfft.fftfreq(x.size, d=1.0 / sample_rate)
    return sfft.ifft(sfft.fft(x) * _dispersion_response(freqs, dispersion_total, wavelength))


def band_limit(freqs: np.ndarray, bandwidth: float | None, sample_rate: float) -> np.ndarray | None:
    """Raised-cosine taper: flat to ``bandwidth``, falling to zero at Nyquist.

    ``None`` means no band limit. The same taper applied to every path keeps
    integer and fractional delays on an equal footing; without it a
    fractional delay turns sharp NRZ edges into slowly decaying sinc tails.
    """
    if bandwidth is None:
        return None
    nyq = sample_rate / 2.0
    if not 0 < bandwidth < nyq:
        raise ChannelError(f"bandwidth must lie in (0, {nyq:g}) Hz, got {bandwidth}")
    u = np.clip((np.abs(freqs) - bandwidth) / (nyq - bandwidth), 0.0, 1.0)
    return np.cos(0.5 * np.pi * u) ** 2


def _guard_samples(dispersion_total: float, wavelength: float, sample_rate: float) -> int:
    # group delay spread across the simulated band, in samples
    spread = abs(dispersion_coefficient(dispersion_total, wavelength)) * sample_rate**2
    return int(4 * spread) + 256


def _subframe_starts(frame: ProbeFrame) -> list[int]:
    a, b = frame.subframe_offsets_samples
    return sorted({a, b})


def _check_record(frame: ProbeFrame, link: LinkModel, record_length: float) -> int:
    for p in link.paths:
        need = p.delay + frame.extent
        if need > record_length * (1 + 1e-12):
            raise ChannelError(
                f"record of {record_length:.6g} s is too short for path {p.label!r}: "
                f"needs {need:.6g} s (delay + frame extent)"
            )
    return int(round(record_length * frame.sample_rate))


def _path_blocks(frame: ProbeFrame, path: ReflectionPath, wavelength: float, bandwidth: float | None):
    """Yield ``(dst, y)``: filtered subframe modulation ``y`` landing at record index ``dst``."""
    fs = frame.sample_rate
    sub_len = frame.subframe_samples
    a0 = frame.off_amplitude
    src = frame.field_samples
    d = path.delay * fs
    shift = int(math.floor(d))
    frac = d - shift
    if frac > 1 - 1e-12:
        shift, frac = shift + 1, 0.0
    guard = _guard_samples(path.dispersion_total, wavelength, fs)
    nfft = sfft.next_fast_len(sub_len + 2 * guard)
    freqs = sfft.fftfreq(nfft, d=1.0 / fs)
    h = path.amplitude_gain * _dispersion_response(freqs, path.dispersion_total, wavelength)
    if frac:
        h = h * np.exp(-2j * np.pi * freqs * (frac / fs))
    taper = band_limit(freqs, bandwidth, fs)
    if taper is not None:
        h = h * taper
    for start in _subframe_starts(frame):
        block = np.zeros(nfft, dtype=np.complex128)
        block[guard : guard + sub_len] = src[start : start + sub_len] - a0
        yield shift + start - guard, sfft.ifft(sfft.fft(block) * h)


def _merged_blocks(blocks):
    """Sum overlapping ``(dst, y)`` blocks so that each record sample is covered once."""
    merged: list[tuple[int, np.ndarray]] = []
    for dst, y in sorted(blocks, key=lambda b: b[0]):
        if merged and dst < merged[-1][0] + merged[-1][1].size:
            d0, y0 = merged[-1]
            end = max(d0 + y0.size, dst + y.size)
            buf = np.zeros(end - d0, dtype=np.complex128)
            buf[: y0.size] = y0
            buf[dst - d0 : dst - d0 + y.size] += y
            merged[-1] = (d0, buf)
        else:
            merged.append((dst, y))
    return merged


def propagate_paths(
    frame: ProbeFrame, link: LinkModel, record_length: float, bandwidth: float | None = None
) -> np.ndarray:
    """Received field of every path separately, shape ``(n_paths, n_record)``.

    Only the subframe modulation needs filtering: the idle off level is a
    constant and passes every path unchanged apart from the loss. Each
    subframe is therefore filtered in its own padded FFT block and added to
    the constant background at the integer delay. ``bandwidth`` optionally
    band-limits the modulation (see ``band_limit``).
    """
    n_rec = _check_record(frame, link, record_length)
    out = np.empty((len(link.paths), n_rec), dtype=np.complex128)
    for i, p in enumerate(link.paths):
        out[i].fill(p.amplitude_gain * frame.off_amplitude)
        for dst, y in _path_blocks(frame, p, link.wavelength, bandwidth):
            lo, hi = max(dst, 0), min(dst + y.size, n_rec)
            if lo < hi:
                out[i, lo:hi] += y[lo - dst : hi - dst]
    return out


def propagate_intensity(
    frame: ProbeFrame, link: LinkModel, record_length: float, bandwidth: float | None = None
) -> np.ndarray:
    """Summed path intensities ``sum_p |E_p|^2`` without holding any path field.

    Equal to ``detect(propagate_paths(...))`` but needs one real vector of
    the record length, which keeps 100 km, 1 ms records in memory.
    """
    n_rec = _check_record(frame, link, record_length)
    background = [p.amplitude_gain * frame.off_amplitude for p in link.paths]
    out = np.full(n_rec, float(sum(b * b for b in background)))
    for p, b in zip(link.paths, background):
        for dst, y in _merged_blocks(_path_blocks(frame, p, link.wavelength, bandwidth)):
            lo, hi = max(dst, 0), min(dst + y.size, n_rec)
            if lo < hi:
                e = y[lo - dst : hi - dst] + b
                out[lo:hi] += e.real**2 + e.imag**2 - b * b
    return out


def propagate(
    frame: ProbeFrame, link: LinkModel, record_length: float, bandwidth: float | None = None
) -> np.ndarray:
    """Coherent sum of all path fields."""
    return propagate_paths(frame, link, record_length, bandwidth).sum(axis=0)
