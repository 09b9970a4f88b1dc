"""Transmit frame synthesis: NRZ on-off keyed Golay subframes in a fixed packet."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .golay import BipolarSequence, GolayPair

# Hard ceiling for any single waveform; the default guard is tighter so that
# full 100 km frames (5e7 samples per ms at 50 GS/s) must be asked for.
HARD_MAX_SAMPLES = 1 << 28
DEFAULT_MAX_SAMPLES = 1 << 24

LAYOUTS = ("same-packet", "alternating")


class ProbeError(ValueError):
    """Invalid probe frame parameters."""


@dataclass(frozen=True)
class ModulationSpec:
    """Idealised intensity modulator: on power and on/off extinction ratio."""

    on_power: float = 1e-3
    extinction_ratio_db: float = 13.0

    def __post_init__(self) -> None:
        if not self.on_power > 0:
            raise ProbeError(f"on_power must be > 0, got {self.on_power}")
        if not self.extinction_ratio_db > 0:
            raise ProbeError(f"extinction_ratio_db must be > 0, got {self.extinction_ratio_db}")

    @property
    def off_power(self) -> float:
        return self.on_power / 10.0 ** (self.extinction_ratio_db / 10.0)

    @property
    def on_amplitude(self) -> float:
        return math.sqrt(self.on_power)

    @property
    def off_amplitude(self) -> float:
        return math.sqrt(self.off_power)


@dataclass(frozen=True, eq=False)
class ProbeFrame:
    """Sampled baseband field of one transmit frame.

    ``field_samples`` is in sqrt(W). Outside the two subframes the modulator
    idles at the off level, and the laser is treated as emitting that level
    before and after the frame as well.
    """

    field_samples: np.ndarray
    sample_rate: float
    bit_rate: float
    subframe_a_offset: float
    subframe_b_offset: float
    frame_period: float
    subframe_duration: float
    modulation: ModulationSpec
    layout: str = "same-packet"

    @property
    def samples_per_bit(self) -> int:
        return int(round(self.sample_rate / self.bit_rate))

    @property
    def subframe_samples(self) -> int:
        return int(round(self.subframe_duration * self.sample_rate))

    @property
    def subframe_offsets_samples(self) -> tuple[int, int]:
        return (
            int(round(self.subframe_a_offset * self.sample_rate)),
            int(round(self.subframe_b_offset * self.sample_rate)),
        )

    @property
    def extent(self) -> float:
        """Time from frame start to the end of the last subframe."""
        return max(self.subframe_a_offset, self.subframe_b_offset) + self.subframe_duration

    @property
    def off_amplitude(self) -> float:
        return self.modulation.off_amplitude

    def __len__(self) -> int:
        return int(self.field_samples.size)


def samples_per_bit(sample_rate: float, bit_rate: float) -> int:
    """Integer oversampling factor, or ProbeError if the rates are not commensurate."""
    if bit_rate <= 0 or sample_rate <= 0:
        raise ProbeError("sample_rate and bit_rate must be positive")
    ratio = sample_rate / bit_rate
    spb = int(round(ratio))
    if spb < 1 or abs(ratio - spb) > 1e-9 * ratio:
        raise ProbeError(
            f"sample_rate {sample_rate:g} is not an integer multiple of bit_rate {bit_rate:g}"
        )
    return spb


def check_sample_budget(n_samples: int, max_samples: int, what: str) -> None:
    if max_samples > HARD_MAX_SAMPLES:
        raise ProbeError(f"memory guard {max_samples} exceeds hard limit {HARD_MAX_SAMPLES} (2^28)")
    if n_samples > max_samples:
        raise ProbeError(
            f"{what} needs {n_samples} samples, above the memory guard of {max_samples}; "
            "raise max_samples to allow it"
        )


def build_probe_frame(
    pair: GolayPair,
    mod: ModulationSpec,
    bit_rate: float,
    sample_rate: float,
    frame_period: float,
    *,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    layout: str = "same-packet",
) -> ProbeFrame:
    """Lay out both Golay sequences as NRZ-OOK subframes.

    With the default ``same-packet`` layout subframe A starts at 0 and
    subframe B at ``frame_period / 2``. The ``alternating`` layout sends B in
    the following packet, so the returned field spans two frame periods with
    B starting at ``frame_period``.
    """
    if layout not in LAYOUTS:
        raise ProbeError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    spb = samples_per_bit(sample_rate, bit_rate)
    n_bits = pair.length
    sub_len = n_bits * spb
    n_frame = int(round(frame_period * sample_rate))
    if layout == "same-packet":
        if frame_period < 2 * n_bits / bit_rate * (1 - 1e-12):
            raise ProbeError(
                f"frame_period {frame_period:g} s cannot hold two {n_bits}-bit subframes "
                f"at {bit_rate:g} bit/s"
            )
        b_start = n_frame // 2
        total = n_frame
    else:
        if frame_period < n_bits / bit_rate * (1 - 1e-12):
            raise ProbeError(f"frame_period {frame_period:g} s cannot hold a {n_bits}-bit subframe")
        b_start = n_frame
        total = 2 * n_frame
    check_sample_budget(total, max_samples, "probe frame")

    field = np.full(total, mod.off_amplitude, dtype=np.complex128)
    for start, seq in ((0, pair.a), (b_start, pair.b)):
        bits = np.repeat(seq.elements > 0, spb)
        field[start : start + sub_len] = np.where(bits, mod.on_amplitude, mod.off_amplitude)
    return ProbeFrame(
        field_samples=field,
        sample_rate=float(sample_rate),
        bit_rate=float(bit_rate),
        subframe_a_offset=0.0,
        subframe_b_offset=b_start / sample_rate,
        frame_period=float(frame_period),
        subframe_duration=sub_len / sample_rate,
        modulation=mod,
        layout=layout,
    )


def reference_waveform(seq: BipolarSequence, samples_per_bit: int) -> np.ndarray:
    """Sample-held bipolar reference with its mean removed.

    The received signal is unipolar (on/off power), so removing the mean of
    the reference keeps the DC level of the trace out of the correlation.
    """
    if samples_per_bit < 1:
        raise ProbeError(f"samples_per_bit must be >= 1, got {samples_per_bit}")
    ref = np.repeat(seq.elements.astype(np.float64), int(samples_per_bit))
    return ref - ref.mean()
