"""Per-iteration contraction factors and the exact expectation oracle.

Selectable-set sampling contracts the expected squared error by
``1 - sigma_min^2(P^(1/2) D^(-1) A) / mass(S)`` per step, where P holds the
sampling probabilities, D the row norms, and mass(S) the probability of
drawing a selectable row. The oracle below evaluates the expectation
exactly by enumerating the selectable rows, which is what the tests use to
certify the factor formulas.
"""
from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix, row_norms, smallest_nonzero_singular_value
from .sampling import RowWeights, build_weights, conditional_pmf
from .selectable_set import SelectableSet
from .solver import kaczmarz_step

# sigma_min^2 of the (scaled) matrix is reused across many factor queries
# for the same system; keyed weakly so matrices can still be collected
_sigma_cache: "weakref.WeakKeyDictionary[SparseMatrix, dict]" = weakref.WeakKeyDictionary()


def _cached_sigma_sq(matrix: SparseMatrix, key, scale_rows) -> float:
    per_matrix = _sigma_cache.setdefault(matrix, {})
    if key not in per_matrix:
        dense = matrix.toarray()
        if scale_rows is not None:
            dense = dense * scale_rows[:, None]
        per_matrix[key] = smallest_nonzero_singular_value(dense) ** 2
    return per_matrix[key]


def sigma_sq_plain(matrix: SparseMatrix) -> float:
    return _cached_sigma_sq(matrix, ("plain",), None)


def sigma_sq_row_normalized(matrix: SparseMatrix) -> float:
    """sigma_min^2 of the matrix with every row scaled to unit norm."""
    inv = 1.0 / np.sqrt(row_norms(matrix).squared_norms)
    return _cached_sigma_sq(matrix, ("rownormalized",), inv)


def sigma_sq_weighted(matrix: SparseMatrix, weights: RowWeights) -> float:
    """sigma_min^2 of the probability-weighted row-normalized matrix."""
    scale = np.sqrt(weights.probabilities) / np.sqrt(row_norms(matrix).squared_norms)
    return _cached_sigma_sq(matrix, ("weighted", weights.probabilities.tobytes()), scale)


def leave_one_out_mass(matrix: SparseMatrix) -> float:
    """Total squared row mass minus the lightest row: max over i of
    the Frobenius mass of the other rows."""
    geom = row_norms(matrix)
    return geom.frobenius_sq - geom.min_squared_norm


def _clamp_factor(value: float, context: str) -> float:
    if value < 0.0 or value > 1.0:
        if value < -1e-9 or value > 1.0 + 1e-9:
            warnings.warn(
                f"{context}: contraction factor {value} clamped to [0, 1]",
                stacklevel=3,
            )
        value = min(max(value, 0.0), 1.0)
    return value


def one_step_factor(matrix: SparseMatrix, weights: RowWeights, selectable: SelectableSet) -> float:
    """General per-step contraction bound for selectable-set sampling."""
    mass = float(weights.probabilities[selectable.mask].sum())
    if selectable.size == 0 or mass <= 0.0:
        raise ValueError("selectable set carries no probability mass")
    return _clamp_factor(1.0 - sigma_sq_weighted(matrix, weights) / mass, "one_step_factor")


def uniform_factor(matrix: SparseMatrix, selectable_count: int) -> float:
    """Specialization to uniform probabilities: depends on |S| alone."""
    if selectable_count < 1:
        raise ValueError("selectable count must be positive")
    return _clamp_factor(
        1.0 - sigma_sq_row_normalized(matrix) / selectable_count, "uniform_factor"
    )


def rownorm_factor(matrix: SparseMatrix, selectable: SelectableSet) -> float:
    """Specialization to squared-row-norm probabilities.

    The denominator is the Frobenius mass of the selectable rows; with the
    full set this reduces to the classical randomized-Kaczmarz rate.
    """
    if selectable.size == 0:
        raise ValueError("selectable set is empty")
    sq = row_norms(matrix).squared_norms
    denom = float(sq[selectable.mask].sum())
    return _clamp_factor(1.0 - sigma_sq_plain(matrix) / denom, "rownorm_factor")


def rgrk_factor(matrix: SparseMatrix, theta: float) -> float:
    """Published contraction guarantee for the threshold method.

    Interpolates between the plain squared-row-norm rate (theta=0) and
    ``1 - sigma_min^2(A) / leave_one_out_mass(A)`` (theta=1); the latter is
    also the worst-case non-repetitive rate under row-norm sampling.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    geom = row_norms(matrix)
    loo = geom.frobenius_sq - geom.min_squared_norm
    if loo <= 0.0:
        raise ValueError("leave-one-out mass is zero (single-row system)")
    scale = theta * geom.frobenius_sq / loo + (1.0 - theta)
    return _clamp_factor(
        1.0 - scale * sigma_sq_plain(matrix) / geom.frobenius_sq, "rgrk_factor"
    )


def exact_one_step_expectation(
    matrix: SparseMatrix,
    b: np.ndarray,
    x: np.ndarray,
    x_star: np.ndarray,
    weights: RowWeights,
    selectable: SelectableSet,
) -> float:
    """E[squared error after one step], by enumeration instead of sampling.

    Sums ``P(pick i | i in S) * |step(x, i) - x_star|^2`` over the
    selectable rows; no randomness involved, so it certifies the factor
    formulas exactly.
    """
    pmf = conditional_pmf(weights, selectable)
    total = 0.0
    for i in selectable.indices():
        stepped = kaczmarz_step(matrix, b, x, int(i))
        total += pmf[i] * float(np.square(stepped - x_star).sum())
    return total


@dataclass(frozen=True)
class BoundReport:
    """All contraction ingredients for one (matrix, weights, theta) query."""

    num_rows: int
    num_cols: int
    weights_mode: str
    theta: float
    sigma_sq: float
    sigma_sq_row_normalized: float
    sigma_sq_weighted: float
    frobenius_sq: float
    leave_one_out_mass: float
    factors: dict

    def as_text(self) -> str:
        lines = [
            f"matrix                  {self.num_rows} x {self.num_cols}",
            f"weights                 {self.weights_mode}",
            f"sigma_min^2(A)          {self.sigma_sq:.12g}",
            f"sigma_min^2(D^-1 A)     {self.sigma_sq_row_normalized:.12g}",
            f"sigma_min^2(P^.5 D^-1 A){self.sigma_sq_weighted:.12g}",
            f"frobenius_sq            {self.frobenius_sq:.12g}",
            f"leave_one_out_mass      {self.leave_one_out_mass:.12g}",
        ]
        for name, value in self.factors.items():
            lines.append(f"factor[{name}]{' ' * max(1, 16 - len(name))}{value:.12g}")
        return "\n".join(lines)

    def as_csv(self) -> str:
        rows = [
            ("num_rows", self.num_rows),
            ("num_cols", self.num_cols),
            ("weights_mode", self.weights_mode),
            ("theta", f"{self.theta:.17g}"),
            ("sigma_sq", f"{self.sigma_sq:.17g}"),
            ("sigma_sq_row_normalized", f"{self.sigma_sq_row_normalized:.17g}"),
            ("sigma_sq_weighted", f"{self.sigma_sq_weighted:.17g}"),
            ("frobenius_sq", f"{self.frobenius_sq:.17g}"),
            ("leave_one_out_mass", f"{self.leave_one_out_mass:.17g}"),
        ]
        rows += [(f"factor_{name}", f"{value:.17g}") for name, value in self.factors.items()]
        return "quantity,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


def build_report(matrix: SparseMatrix, weights_mode: str = "uniform", theta: float = 0.5) -> BoundReport:
    """Evaluate every bound ingredient once for a matrix."""
    weights = build_weights(matrix, weights_mode)
    geom = row_norms(matrix)
    m = matrix.num_rows
    full = SelectableSet.full(m)
    factors = {
        "full_set": one_step_factor(matrix, weights, full),
        "rk_rownorm": _clamp_factor(
            1.0 - sigma_sq_plain(matrix) / geom.frobenius_sq, "build_report"
        ),
        "rk_uniform": uniform_factor(matrix, m),
    }
    if m > 1:
        factors["nonrepetitive_uniform"] = uniform_factor(matrix, m - 1)
        factors["nonrepetitive_rownorm_worst"] = _clamp_factor(
            1.0 - sigma_sq_plain(matrix) / leave_one_out_mass(matrix), "build_report"
        )
        factors["rgrk"] = rgrk_factor(matrix, theta)
        factors["rgrk_theta1"] = rgrk_factor(matrix, 1.0)
    return BoundReport(
        num_rows=m,
        num_cols=matrix.num_cols,
        weights_mode=weights_mode,
        theta=theta,
        sigma_sq=sigma_sq_plain(matrix),
        sigma_sq_row_normalized=sigma_sq_row_normalized(matrix),
        sigma_sq_weighted=sigma_sq_weighted(matrix, weights),
        frobenius_sq=geom.frobenius_sq,
        leave_one_out_mass=leave_one_out_mass(matrix),
        factors=factors,
    )
