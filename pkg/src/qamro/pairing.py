"""Pair construction over a mini-batch and rating-scale normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class PairSet:
    """Unordered index pairs ``(i, j)`` with ``i < j`` and distinct targets.

    ``signs[k]`` is +1 when ``y[i] > y[j]`` and -1 otherwise, ``gaps[k]`` is
    ``|y[i] - y[j]|``.
    """

    i: np.ndarray
    j: np.ndarray
    signs: np.ndarray
    gaps: np.ndarray

    def __len__(self) -> int:
        return int(self.i.shape[0])

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.i.tolist(), self.j.tolist()))

    @classmethod
    def empty(cls) -> "PairSet":
        z = np.zeros(0, dtype=np.intp)
        f = np.zeros(0, dtype=np.float64)
        return cls(z, z.copy(), f, f.copy())


def sign(x):
    """+1 where ``x > 0``, -1 otherwise (zero maps to -1)."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


def build_pair_set(y_true, tie_tolerance: float = TIE_TOLERANCE) -> PairSet:
    y = np.asarray(y_true, dtype=np.float64).ravel()
    n = y.shape[0]
    if n < 2:
        return PairSet.empty()
    i, j = np.triu_indices(n, k=1)
    diff = y[i] - y[j]
    keep = np.abs(diff) > tie_tolerance
    i, j, diff = i[keep], j[keep], diff[keep]
    return PairSet(i.astype(np.intp), j.astype(np.intp), sign(diff), np.abs(diff))


def normalize_scores(y_true, scale_min: float, scale_max: float) -> np.ndarray:
    """Min-max normalize scores against fixed rating-scale bounds."""
    if not scale_min < scale_max:
        raise ValueError(f"scale_min ({scale_min}) must be < scale_max ({scale_max})")
    y = np.asarray(y_true, dtype=np.float64).ravel()
    bad = np.flatnonzero((y < scale_min) | (y > scale_max) | ~np.isfinite(y))
    if bad.size:
        k = int(bad[0])
        raise ValueError(
            f"score {y[k]!r} at index {k} outside rating scale [{scale_min}, {scale_max}]"
        )
    return (y - scale_min) / (scale_max - scale_min)
