"""Row-projection solvers: the selectable-set family plus greedy baselines.

All methods share the same projection step: pick an equation, project the
iterate onto its solution hyperplane. They differ only in how the row is
picked:

* rk     -- fixed-distribution sampling over all rows
* nssrk  -- fixed-distribution sampling, never repeating the previous row
* gssrk  -- fixed-distribution sampling restricted to rows not known solved,
            tracked through the Gramian zero pattern
* mdk    -- deterministic max normalized residual
* rgrk   -- randomized over rows whose normalized residual clears a
            threshold interpolating between mdk (theta=1) and the global
            mean (theta=0); sampled proportional to squared residual
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RowGeometry, SparseMatrix, gramian, row_norms
from .sampling import WEIGHT_MODES, build_weights, make_rng, sample_selectable
from .selectable_set import NonOrthogonalityGraph, SelectableSet, build_graph

METHODS = ("rk", "nssrk", "gssrk", "mdk", "rgrk")
SSRK_STRATEGIES = ("full", "nonrepetitive", "gramian")

_METHOD_TO_STRATEGY = {"rk": "full", "nssrk": "nonrepetitive", "gssrk": "gramian"}

TERMINATED_MAX_ITERATIONS = "max_iterations"
TERMINATED_TOLERANCE = "tolerance"
TERMINATED_SOLVED = "solved"
TERMINATED_SEQUENCE = "sequence_exhausted"


@dataclass(frozen=True)
class MethodSpec:
    """Which method to run and with what knobs.

    ``theta`` is meaningful for rgrk only (defaults to 0.5 there, the GRK
    setting) and must be omitted otherwise. ``tolerance`` stops a run once
    the squared residual falls below ``tolerance**2 * |b|^2``; zero disables
    residual stopping so a run executes a fixed iteration count.
    """

    method: str
    weights: str = "uniform"
    theta: float | None = None
    max_iterations: int = 1000
    tolerance: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.weights not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weights!r}")
        if self.method == "rgrk":
            theta = 0.5 if self.theta is None else float(self.theta)
            if not 0.0 <= theta <= 1.0:
                raise ValueError("theta must lie in [0, 1]")
            object.__setattr__(self, "theta", theta)
        elif self.theta is not None:
            raise ValueError("theta applies to rgrk only")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")


@dataclass
class ConvergenceTrace:
    """Per-iteration log of one run; record 0 is the initial state.

    ``sq_error`` is present only when the true solution was supplied.
    ``chosen[k]`` and ``attempts[k]`` describe the draw that produced
    state ``k`` (-1 / 0 for the initial record).
    """

    method: str
    sq_residual: np.ndarray
    sq_error: np.ndarray | None
    selectable_size: np.ndarray
    chosen: np.ndarray
    attempts: np.ndarray
    final_x: np.ndarray
    terminated: str

    @property
    def iterations(self) -> int:
        return self.sq_residual.size - 1


def kaczmarz_step(A: SparseMatrix, b: np.ndarray, x: np.ndarray, i: int) -> np.ndarray:
    """Project ``x`` onto the solution hyperplane of equation ``i``.

    Returns a new vector; cost is proportional to the row's nonzeros.
    """
    if not 0 <= i < A.num_rows:
        raise IndexError(f"row {i} out of range")
    cols, vals = A.row(i)
    out = x.copy()
    residual = vals @ x[cols] - b[i]
    out[cols] -= (residual / (vals @ vals)) * vals
    return out


def _validate_system(A: SparseMatrix, b, x0, x_star):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.num_rows,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({A.num_rows},)")
    if x0 is None:
        x = np.zeros(A.num_cols)
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
        if x.shape != (A.num_cols,):
            raise ValueError("x0 length must match the column count")
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=np.float64)
        if x_star.shape != (A.num_cols,):
            raise ValueError("x_star length must match the column count")
    return b, x, x_star


class _TraceBuilder:
    def __init__(self, method, max_iterations, track_error):
        size = max_iterations + 1
        self.sq_residual = np.empty(size)
        self.sq_error = np.empty(size) if track_error else None
        self.selectable_size = np.empty(size, dtype=np.int64)
        self.chosen = np.full(size, -1, dtype=np.int64)
        self.attempts = np.zeros(size, dtype=np.int64)
        self.method = method
        self.count = 0

    def record(self, sq_res, sq_err, ssize, chosen, attempts):
        k = self.count
        self.sq_residual[k] = sq_res
        if self.sq_error is not None:
            self.sq_error[k] = sq_err
        self.selectable_size[k] = ssize
        self.chosen[k] = chosen
        self.attempts[k] = attempts
        self.count += 1

    def build(self, final_x, terminated) -> ConvergenceTrace:
        k = self.count
        return ConvergenceTrace(
            method=self.method,
            sq_residual=self.sq_residual[:k].copy(),
            sq_error=None if self.sq_error is None else self.sq_error[:k].copy(),
            selectable_size=self.selectable_size[:k].copy(),
            chosen=self.chosen[:k].copy(),
            attempts=self.attempts[:k].copy(),
            final_x=final_x.copy(),
            terminated=terminated,
        )


def run_ssrk(
    A: SparseMatrix,
    b,
    spec: MethodSpec,
    strategy: str | None = None,
    x0=None,
    x_star=None,
    gram: SparseMatrix | None = None,
    index_sequence=None,
    on_state=None,
) -> ConvergenceTrace:
    """Selectable-set loop: sample from the set, project, update the set.

    ``strategy`` defaults to the one matching ``spec.method``. The initial
    iterate must lie in the row space (the zero default always does); that
    precondition is documented, not checked.

    ``index_sequence`` overrides sampling with a fixed selection order
    (each entry must be selectable when consumed); ``on_state(k, x, s)``
    is invoked at every recorded state with live views of the iterate and
    the selectable set.
    """
    if spec.method not in _METHOD_TO_STRATEGY:
        raise ValueError(f"run_ssrk handles {tuple(_METHOD_TO_STRATEGY)}, got {spec.method!r}")
    if strategy is None:
        strategy = _METHOD_TO_STRATEGY[spec.method]
    if strategy not in SSRK_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    b, x, x_star = _validate_system(A, b, x0, x_star)

    m = A.num_rows
    weights = build_weights(A, spec.weights)
    probs = weights.probabilities
    rng = make_rng(spec.seed)
    graph: NonOrthogonalityGraph | None = None
    if strategy == "gramian":
        graph = build_graph(gram if gram is not None else gramian(A))

    selectable = SelectableSet.full(m)
    mass = 1.0
    csr = A.csr
    indptr, indices, data = csr.indptr, csr.indices, csr.data
    norms_sq = row_norms(A).squared_norms
    tol_threshold = spec.tolerance**2 * float(b @ b)
    forced = None if index_sequence is None else list(index_sequence)
    forced_pos = 0

    trace = _TraceBuilder(spec.method, spec.max_iterations, x_star is not None)

    def log(chosen, attempts):
        sq_res = float(np.square(csr @ x - b).sum())
        sq_err = float(np.square(x - x_star).sum()) if x_star is not None else 0.0
        trace.record(sq_res, sq_err, selectable.size, chosen, attempts)
        if on_state is not None:
            on_state(trace.count - 1, x, selectable)
        return sq_res

    sq_res = log(-1, 0)
    terminated = TERMINATED_MAX_ITERATIONS
    for _ in range(spec.max_iterations):
        if sq_res <= tol_threshold:
            terminated = TERMINATED_TOLERANCE if spec.tolerance > 0 else TERMINATED_SOLVED
            break
        if selectable.size == 0:
            terminated = TERMINATED_SOLVED
            break
        if forced is not None:
            if forced_pos >= len(forced):
                terminated = TERMINATED_SEQUENCE
                break
            i, attempts = int(forced[forced_pos]), 1
            forced_pos += 1
            if not selectable.contains(i):
                raise ValueError(f"forced row {i} is not selectable")
        else:
            i, attempts = sample_selectable(weights, selectable, rng, selectable_mass=mass)

        start, end = indptr[i], indptr[i + 1]
        cols = indices[start:end]
        vals = data[start:end]
        x[cols] -= ((vals @ x[cols] - b[i]) / norms_sq[i]) * vals

        if strategy == "nonrepetitive":
            selectable.update_nonrepetitive(i)
            mass = 1.0 - probs[i]
        elif strategy == "gramian":
            newly = selectable.update_gramian(i, graph)
            mass += float(probs[newly].sum()) - probs[i]
        sq_res = log(i, attempts)

    return trace.build(x, terminated)


def select_max_distance(A: SparseMatrix, b, x, residual=None, geometry: RowGeometry | None = None) -> int:
    """Row with the largest normalized residual; ties go to the lowest index."""
    if residual is None:
        residual = A.matvec(np.asarray(x, dtype=np.float64)) - np.asarray(b, dtype=np.float64)
    if geometry is None:
        geometry = row_norms(A)
    scores = np.abs(residual) / np.sqrt(geometry.squared_norms)
    return int(np.argmax(scores))


def select_rgrk(
    A: SparseMatrix,
    b,
    x,
    theta: float,
    rng: np.random.Generator,
    residual=None,
    geometry: RowGeometry | None = None,
) -> int:
    """Threshold-then-sample row choice.

    A row is eligible when its squared normalized residual reaches
    ``theta * max_j + (1 - theta) * |r|^2 / |A|_F^2``; the max row always
    qualifies, so the set is never empty. Eligible rows are sampled with
    probability proportional to their squared (unnormalized) residuals.
    With theta exactly 1 the choice degenerates to select_max_distance and
    is made deterministically, lowest index first.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if residual is None:
        residual = A.matvec(np.asarray(x, dtype=np.float64)) - np.asarray(b, dtype=np.float64)
    if geometry is None:
        geometry = row_norms(A)
    sq_res = float(residual @ residual)
    if sq_res == 0.0:
        raise ValueError("residual is zero; the system is already solved")
    if theta == 1.0:
        return select_max_distance(A, b, x, residual=residual, geometry=geometry)
    normalized = residual**2 / geometry.squared_norms
    threshold = theta * normalized.max() + (1.0 - theta) * sq_res / geometry.frobenius_sq
    eligible = np.flatnonzero(normalized >= threshold)
    if eligible.size == 0:  # only reachable through floating-point rounding
        eligible = np.array([int(np.argmax(normalized))])
    sq = residual[eligible] ** 2
    cum = np.cumsum(sq)
    u = rng.random() * cum[-1]
    return int(eligible[np.searchsorted(cum, u, side="right")])


def _run_greedy(A, b, spec, x0, x_star, gram) -> ConvergenceTrace:
    """mdk / rgrk loop with a maintained residual vector.

    When a Gramian is supplied, the residual is updated through its row for
    the projected equation (only non-orthogonal rows change); otherwise it
    is recomputed from scratch every iteration.
    """
    b, x, x_star = _validate_system(A, b, x0, x_star)
    m = A.num_rows
    geometry = row_norms(A)
    norms_sq = geometry.squared_norms
    inv_norms = 1.0 / np.sqrt(norms_sq)
    frobenius_sq = geometry.frobenius_sq
    rng = make_rng(spec.seed)
    theta = spec.theta
    csr = A.csr
    indptr, indices, data = csr.indptr, csr.indices, csr.data
    tol_threshold = spec.tolerance**2 * float(b @ b)

    residual = csr @ x - b
    trace = _TraceBuilder(spec.method, spec.max_iterations, x_star is not None)

    def log(chosen):
        sq_res = float(residual @ residual)
        sq_err = float(np.square(x - x_star).sum()) if x_star is not None else 0.0
        trace.record(sq_res, sq_err, m, chosen, 1 if chosen >= 0 else 0)
        return sq_res

    sq_res = log(-1)
    terminated = TERMINATED_MAX_ITERATIONS
    for _ in range(spec.max_iterations):
        if sq_res == 0.0 or sq_res <= tol_threshold:
            terminated = TERMINATED_TOLERANCE if spec.tolerance > 0 else TERMINATED_SOLVED
            break

        if spec.method == "mdk":
            i = int(np.argmax(np.abs(residual) * inv_norms))
        else:
            i = select_rgrk(A, b, x, theta, rng, residual=residual, geometry=geometry)

        delta = residual[i] / norms_sq[i]
        start, end = indptr[i], indptr[i + 1]
        cols = indices[start:end]
        x[cols] -= delta * data[start:end]

        if gram is not None:
            gcols, gvals = gram.row(i)
            residual[gcols] -= delta * gvals
            residual[i] = 0.0  # the projected equation is solved exactly
        else:
            residual = csr @ x - b
        sq_res = log(i)

    return trace.build(x, terminated)


def run_method(
    A: SparseMatrix,
    b,
    spec: MethodSpec,
    x0=None,
    x_star=None,
    gram: SparseMatrix | None = None,
) -> ConvergenceTrace:
    """Run any supported method and return its trace."""
    if spec.method in _METHOD_TO_STRATEGY:
        return run_ssrk(A, b, spec, x0=x0, x_star=x_star, gram=gram)
    return _run_greedy(A, b, spec, x0, x_star, gram)
