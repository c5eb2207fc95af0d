"""Fixed row distributions and selectable-set-conditioned sampling.

Randomness comes from numpy's Philox generator (counter-based, 64-bit
seeded). Independent per-trial streams are derived with
``numpy.random.SeedSequence.spawn``, so trials can run in any order or
concurrently and still reproduce bit-identical draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix, row_norms

WEIGHT_MODES = ("uniform", "rownorm")

# Rejection is abandoned for an exact renormalized draw once the expected
# number of attempts (1 / selectable mass) would exceed this multiple of m.
FALLBACK_ATTEMPT_FACTOR = 8


class EmptySelectableSetError(ValueError):
    """Sampling was requested from an empty selectable set.

    An empty set means every equation is known solved, so callers should
    treat this as successful termination rather than a failure.
    """


@dataclass(frozen=True)
class RowWeights:
    """Normalized sampling probabilities over rows, with inverse-CDF table."""

    probabilities: np.ndarray
    cumulative: np.ndarray
    mode: str

    @property
    def num_rows(self) -> int:
        return self.probabilities.size


def build_weights(matrix: SparseMatrix, mode: str = "uniform") -> RowWeights:
    """Uniform or squared-row-norm probabilities for the given matrix."""
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}, expected one of {WEIGHT_MODES}")
    m = matrix.num_rows
    if mode == "uniform":
        p = np.full(m, 1.0 / m)
    else:
        sq = row_norms(matrix).squared_norms
        p = sq / sq.sum()
    return RowWeights(probabilities=p, cumulative=np.cumsum(p), mode=mode)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators for `count` trials under one base seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def sample_row(weights: RowWeights, rng: np.random.Generator) -> int:
    """One draw from the fixed row distribution (inverse CDF)."""
    u = rng.random() * weights.cumulative[-1]
    return int(np.searchsorted(weights.cumulative, u, side="right"))


def sample_selectable(
    weights: RowWeights,
    selectable,
    rng: np.random.Generator,
    selectable_mass: float | None = None,
) -> tuple[int, int]:
    """Draw a row conditioned on membership in the selectable set.

    Primary path is rejection: repeat fixed-distribution draws until one
    lands in the set, which realizes the conditional law p_i / sum_{j in S} p_j.
    When the expected attempt count 1/mass exceeds FALLBACK_ATTEMPT_FACTOR * m,
    a single exact renormalized inverse-CDF draw over the set is used instead.

    Returns ``(row index, attempts)``; the attempt count feeds cost reports.
    """
    mask = selectable.mask
    if selectable.size == 0:
        raise EmptySelectableSetError("selectable set is empty; system is solved")
    p = weights.probabilities
    if selectable_mass is None:
        selectable_mass = float(p[mask].sum())
    m = weights.num_rows
    if selectable_mass * FALLBACK_ATTEMPT_FACTOR * m < 1.0:
        members = np.flatnonzero(mask)
        cum = np.cumsum(p[members])
        u = rng.random() * cum[-1]
        return int(members[np.searchsorted(cum, u, side="right")]), 1
    cumulative = weights.cumulative
    attempts = 0
    while True:
        attempts += 1
        u = rng.random() * cumulative[-1]
        idx = int(np.searchsorted(cumulative, u, side="right"))
        if mask[idx]:
            return idx, attempts


def conditional_pmf(weights: RowWeights, selectable) -> np.ndarray:
    """Exact law of sample_selectable: renormalized over the set, 0 outside."""
    if selectable.size == 0:
        raise EmptySelectableSetError("selectable set is empty")
    p = np.where(selectable.mask, weights.probabilities, 0.0)
    return p / p.sum()
