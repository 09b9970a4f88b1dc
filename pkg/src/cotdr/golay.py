"""Golay complementary sequence pairs and exact correlation primitives.

Pairs are built with the append/negate recursion

    A(k+1) = A(k) || B(k)
    B(k+1) = A(k) || -B(k)

starting from A(0) = B(0) = [+1], which gives sequences of length 2**k whose
aperiodic autocorrelations sum to a delta of height 2**(k+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ORDER = 24


class GolayError(ValueError):
    """Invalid sequence or pair parameters."""


@dataclass(frozen=True, eq=False)
class BipolarSequence:
    """Ordered +1/-1 code sequence."""

    elements: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.elements)
        if arr.ndim != 1 or arr.size == 0:
            raise GolayError("bipolar sequence must be a non-empty 1-D vector")
        if not np.all((arr == 1) | (arr == -1)):
            raise GolayError("bipolar sequence elements must be exactly -1 or +1")
        arr = arr.astype(np.int8)
        arr.flags.writeable = False
        object.__setattr__(self, "elements", arr)

    @property
    def length(self) -> int:
        return int(self.elements.size)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BipolarSequence):
            return NotImplemented
        return np.array_equal(self.elements, other.elements)

    def __hash__(self) -> int:
        return hash(self.elements.tobytes())

    def to_list(self) -> list[int]:
        return [int(v) for v in self.elements]


@dataclass(frozen=True)
class GolayPair:
    a: BipolarSequence
    b: BipolarSequence
    order: int

    def __post_init__(self) -> None:
        n = 1 << self.order
        if len(self.a) != n or len(self.b) != n:
            raise GolayError(
                f"pair of order {self.order} needs length {n}, got {len(self.a)}/{len(self.b)}"
            )

    @property
    def length(self) -> int:
        return len(self.a)


def generate_golay_pair(order: int) -> GolayPair:
    """Return the recursive Golay pair of length ``2**order``.

    Raises
    ------
    GolayError
        If ``order`` is negative or above ``MAX_ORDER`` (trace-size guard).
    """
    if int(order) != order or order < 0:
        raise GolayError(f"order must be a non-negative integer, got {order!r}")
    if order > MAX_ORDER:
        raise GolayError(f"order {order} exceeds the limit of {MAX_ORDER}")
    a = np.ones(1, dtype=np.int8)
    b = np.ones(1, dtype=np.int8)
    for _ in range(int(order)):
        a, b = np.concatenate([a, b]), np.concatenate([a, -b])
    return GolayPair(BipolarSequence(a), BipolarSequence(b), int(order))


def _as_int_vector(seq: BipolarSequence | np.ndarray | list[int]) -> np.ndarray:
    if isinstance(seq, BipolarSequence):
        return seq.elements.astype(np.int64)
    return BipolarSequence(np.asarray(seq)).elements.astype(np.int64)


def aperiodic_autocorrelation(seq: BipolarSequence | np.ndarray | list[int]) -> np.ndarray:
    """Aperiodic autocorrelation, lags ``-(N-1) .. N-1``.

    Element ``N-1`` of the result is lag 0. Accumulation is in 64-bit integers,
    so the values are exact.
    """
    x = _as_int_vector(seq)
    return np.correlate(x, x, mode="full")


def complementary_sum(pair: GolayPair) -> np.ndarray:
    """Elementwise sum of both autocorrelations (exact integers)."""
    return aperiodic_autocorrelation(pair.a) + aperiodic_autocorrelation(pair.b)


def complementary_offpeak(pair: GolayPair) -> int:
    """Largest magnitude of the autocorrelation sum away from lag 0.

    Zero for a true complementary pair.
    """
    total = complementary_sum(pair)
    n = pair.length
    off = np.concatenate([total[: n - 1], total[n:]])
    return int(np.max(np.abs(off))) if off.size else 0
