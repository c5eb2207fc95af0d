"""Experiment driver: seeded multi-trial benchmarks, CSV output, verification.

A matrix source is either a Matrix Market path or a compact generator spec
like ``circulant:m=100`` / ``block:m=100,n=100,blocks=10``. One consistent
right-hand side is planted per matrix and shared by every method and trial,
so curves differ only through row selection.
"""
from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import exact_one_step_expectation, one_step_factor
from .generators import (
    PlantedSystem,
    StructuredPattern,
    gen_block_random,
    gen_circulant,
    gen_structured,
    plant_solution,
)
from .linalg import SparseMatrix, gramian, read_matrix_market, row_norms
from .sampling import build_weights
from .selectable_set import (
    EXACT_MIS_NODE_LIMIT,
    NonOrthogonalityGraph,
    SelectableSet,
    build_graph,
    max_independent_set,
)
from .solver import ConvergenceTrace, MethodSpec, run_method, run_ssrk

GENERATOR_KINDS = ("block", "circulant", "path", "star", "cycle", "banded", "regular")


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark: a matrix source, methods to compare, and run sizes."""

    source: str
    methods: tuple = ("rk", "nssrk", "gssrk", "rgrk")
    weights: str = "uniform"
    theta: float = 0.5
    trials: int = 200
    iterations: int = 5000
    seed: int = 0
    tolerance: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass
class AveragedCurve:
    """Pointwise trial means, one value per iteration index (0..iterations)."""

    method: str
    mean_sq_error: np.ndarray
    mean_selectable_size: np.ndarray


def parse_generator_spec(spec: str) -> tuple[str, dict]:
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind not in GENERATOR_KINDS:
        raise ValueError(f"unknown generator kind {kind!r}")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if not _:
                raise ValueError(f"malformed generator parameter {item!r}")
            params[key.strip()] = int(value)
    return kind, params


def build_generated(kind: str, params: dict, seed: int) -> SparseMatrix:
    if kind == "block":
        m = params.get("m", 100)
        return gen_block_random(m, params.get("n", m), params.get("blocks", 10), seed)
    if kind == "circulant":
        return gen_circulant(params.get("m", 100), seed=seed)
    if kind == "banded":
        pattern = StructuredPattern(
            "banded",
            params.get("m", 10),
            band_upper=params.get("l1", 1),
            band_lower=params.get("l2", 0),
        )
        return gen_structured(pattern, seed)
    if kind == "regular":
        pattern = StructuredPattern("regular", params.get("m", 10), degree=params.get("degree", 2))
        return gen_structured(pattern, seed)
    return gen_structured(StructuredPattern(kind, params.get("m", 10)), seed)


def load_matrix(source: str, seed: int = 0) -> SparseMatrix:
    """Resolve a matrix source: generator spec first, then file path."""
    head = source.partition(":")[0].strip().lower()
    if head in GENERATOR_KINDS:
        kind, params = parse_generator_spec(source)
        return build_generated(kind, params, seed)
    if Path(source).exists():
        return read_matrix_market(Path(source))
    raise ValueError(f"matrix source {source!r} is neither a generator spec nor an existing file")


def derive_seed(base: int, *key: int) -> int:
    """Stable 64-bit child seed for (base, *key); used to split trial streams."""
    ss = np.random.SeedSequence((base,) + tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _padded(values: np.ndarray, length: int) -> np.ndarray:
    """Extend an early-terminated log by repeating its final value.

    Once a run stops (empty selectable set or residual tolerance) further
    projections would leave the iterate unchanged, so the final record is
    the correct continuation for pointwise averaging.
    """
    if values.size == length:
        return values
    out = np.empty(length, dtype=values.dtype)
    out[: values.size] = values
    out[values.size :] = values[-1]
    return out


def _run_trial(args) -> tuple[np.ndarray, np.ndarray]:
    A, planted, gram, method, weights, theta, iterations, tolerance, seed = args
    spec = MethodSpec(
        method=method,
        weights=weights,
        theta=theta if method == "rgrk" else None,
        max_iterations=iterations,
        tolerance=tolerance,
        seed=seed,
    )
    trace = run_method(A, planted.rhs, spec, x_star=planted.solution, gram=gram)
    length = iterations + 1
    return _padded(trace.sq_error, length), _padded(trace.selectable_size.astype(np.float64), length)


def run_experiment(cfg: ExperimentConfig) -> list[AveragedCurve]:
    """Average per-iteration squared error over seeded trials, per method."""
    return run_experiment_on(load_matrix(cfg.source, cfg.seed), cfg)


def run_experiment_on(A: SparseMatrix, cfg: ExperimentConfig) -> list[AveragedCurve]:
    """run_experiment for an already-loaded matrix."""
    planted = plant_solution(A, seed=derive_seed(cfg.seed, 0xB))
    needs_gram = any(m in ("gssrk", "mdk", "rgrk") for m in cfg.methods)
    gram = gramian(A) if needs_gram else None
    curves = []
    for mi, method in enumerate(cfg.methods):
        jobs = [
            (A, planted, gram if method in ("gssrk", "mdk", "rgrk") else None,
             method, cfg.weights, cfg.theta, cfg.iterations, cfg.tolerance,
             derive_seed(cfg.seed, mi, t))
            for t in range(cfg.trials)
        ]
        err_sum = np.zeros(cfg.iterations + 1)
        size_sum = np.zeros(cfg.iterations + 1)
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = pool.map(_run_trial, jobs, chunksize=8)
                for err, size in results:  # map preserves trial order
                    err_sum += err
                    size_sum += size
        else:
            for job in jobs:
                err, size = _run_trial(job)
                err_sum += err
                size_sum += size
        curves.append(
            AveragedCurve(
                method=method,
                mean_sq_error=err_sum / cfg.trials,
                mean_selectable_size=size_sum / cfg.trials,
            )
        )
    return curves


def emit_csv(curves: list[AveragedCurve], sink) -> None:
    """Write averaged curves as CSV, rows ordered by iteration then method."""
    if not curves:
        raise ValueError("no curves to emit")
    length = curves[0].mean_sq_error.size
    if any(c.mean_sq_error.size != length for c in curves):
        raise ValueError("curves must share a length")
    ordered = sorted(curves, key=lambda c: c.method)
    buf = io.StringIO()
    buf.write("iteration,method,mean_sq_error,mean_selectable_size\n")
    for k in range(length):
        for curve in ordered:
            buf.write(
                f"{k},{curve.method},{curve.mean_sq_error[k]:.17g},"
                f"{curve.mean_selectable_size[k]:.17g}\n"
            )
    _write_text(sink, buf.getvalue())


def curves_csv(curves: list[AveragedCurve]) -> str:
    out = io.StringIO()
    emit_csv(curves, out)
    return out.getvalue()


def trace_csv(trace: ConvergenceTrace) -> str:
    """Single-run trace as CSV; sq_error column is blank without a known solution."""
    buf = io.StringIO()
    buf.write("iteration,chosen,attempts,selectable_size,sq_residual,sq_error\n")
    for k in range(trace.sq_residual.size):
        err = "" if trace.sq_error is None else f"{trace.sq_error[k]:.17g}"
        buf.write(
            f"{k},{trace.chosen[k]},{trace.attempts[k]},{trace.selectable_size[k]},"
            f"{trace.sq_residual[k]:.17g},{err}\n"
        )
    return buf.getvalue()


def _write_text(sink, text: str) -> None:
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    source: str
    checks: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_text(self) -> str:
        lines = [f"verification of {self.source}"]
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
        lines.append("result: " + ("all checks passed" if self.all_passed else "FAILURES present"))
        return "\n".join(lines)


def residual_scales(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return np.sqrt(row_norms(A).squared_norms) * (1.0 + np.linalg.norm(x))


def check_definition_contract(
    A: SparseMatrix, planted: PlantedSystem, seed: int, iterations: int
) -> CheckResult:
    """Every row outside the selectable set must be solved by the iterate."""
    dense = A.toarray()
    b = planted.rhs
    worst = [0.0]

    def inspect(k, x, s):
        excluded = s.complement_indices()
        if excluded.size == 0:
            return
        res = np.abs(dense[excluded] @ x - b[excluded])
        ratio = float(np.max(res / residual_scales(A, x)[excluded]))
        worst[0] = max(worst[0], ratio)

    spec = MethodSpec(method="gssrk", max_iterations=iterations, tolerance=0.0, seed=seed)
    trace = run_ssrk(A, b, spec, x_star=planted.solution, on_state=inspect)
    passed = worst[0] <= 1e-8
    return CheckResult(
        "definition_contract",
        passed,
        f"worst scaled residual of an excluded row {worst[0]:.3e} over "
        f"{trace.iterations} iterations (terminated: {trace.terminated})",
    )


def check_complement_independence(
    A: SparseMatrix,
    seed: int,
    steps: int,
    update_fn=None,
    graph: NonOrthogonalityGraph | None = None,
) -> CheckResult:
    """Unselectable rows must form an independent set of the graph."""
    if graph is None:
        graph = build_graph(gramian(A))
    m = graph.m
    update = update_fn or (lambda s, i, g: s.update_gramian(i, g))
    rng = np.random.default_rng(seed)
    selectable = SelectableSet.full(m)
    alpha = None
    if m <= EXACT_MIS_NODE_LIMIT:
        alpha = len(max_independent_set(graph, mode="exact")[0])
    neighbor_sets = [set(map(int, graph.neighbors[i])) for i in range(m)]
    for _ in range(steps):
        members = selectable.indices()
        if members.size == 0:
            break
        update(selectable, int(rng.choice(members)), graph)
        excluded = list(map(int, selectable.complement_indices()))
        excluded_set = set(excluded)
        for node in excluded:
            if neighbor_sets[node] & excluded_set:
                return CheckResult(
                    "complement_independence",
                    False,
                    f"excluded rows {sorted(excluded_set)} contain adjacent pair at node {node}",
                )
        if alpha is not None and selectable.size < m - alpha:
            return CheckResult(
                "complement_independence",
                False,
                f"selectable size {selectable.size} dropped below m - alpha = {m - alpha}",
            )
    bound = f"m - alpha = {m - alpha}" if alpha is not None else "alpha unavailable (greedy only)"
    return CheckResult(
        "complement_independence",
        True,
        f"complement stayed independent for {steps} structural updates; floor {bound}",
    )


def check_error_decomposition(
    A: SparseMatrix, planted: PlantedSystem, seed: int, iterations: int
) -> CheckResult:
    """Squared error must drop by exactly the squared normalized residual."""
    from .solver import kaczmarz_step

    spec = MethodSpec(method="rk", max_iterations=iterations, tolerance=0.0, seed=seed)
    trace = run_method(A, planted.rhs, spec, x_star=planted.solution)
    norms_sq = row_norms(A).squared_norms
    x = np.zeros(A.num_cols)
    worst = 0.0
    for k in range(trace.iterations):
        i = int(trace.chosen[k + 1])
        err_before = float(np.square(x - planted.solution).sum())
        cols, vals = A.row(i)
        drop = (vals @ x[cols] - planted.rhs[i]) ** 2 / norms_sq[i]
        x = kaczmarz_step(A, planted.rhs, x, i)
        err_after = float(np.square(x - planted.solution).sum())
        gap = abs(err_after - (err_before - drop)) / max(err_before, 1e-30)
        worst = max(worst, gap)
        if err_after > err_before * (1 + 1e-12) + 1e-30:
            return CheckResult(
                "error_decomposition", False, f"squared error increased at iteration {k}"
            )
    passed = worst <= 1e-10
    return CheckResult(
        "error_decomposition",
        passed,
        f"worst relative identity gap {worst:.3e} over {trace.iterations} steps",
    )


def check_orthogonal_preservation(
    A: SparseMatrix, planted: PlantedSystem, seed: int, iterations: int
) -> CheckResult:
    """Solved equations orthogonal to the projected row must stay solved."""
    dense = A.toarray()
    b = planted.rhs
    graph = build_graph(gramian(A))
    spec = MethodSpec(method="gssrk", max_iterations=iterations, tolerance=0.0, seed=seed)
    states: list[np.ndarray] = []

    def collect(k, x, s):
        states.append(x.copy())

    trace = run_ssrk(A, b, spec, x_star=planted.solution, on_state=collect)
    for k in range(trace.iterations):
        i = int(trace.chosen[k + 1])
        before = np.abs(dense @ states[k] - b)
        after = np.abs(dense @ states[k + 1] - b)
        scale_before = residual_scales(A, states[k])
        scale_after = residual_scales(A, states[k + 1])
        non_neighbors = np.setdiff1d(np.arange(A.num_rows), graph.neighbors[i])
        for j in non_neighbors:
            if j != i and before[j] <= 1e-10 * scale_before[j]:
                if after[j] > 1e-10 * scale_after[j]:
                    return CheckResult(
                        "orthogonal_preservation",
                        False,
                        f"row {j} lost its solution after projecting row {i} at iteration {k}",
                    )
    return CheckResult(
        "orthogonal_preservation",
        True,
        f"checked {trace.iterations} projections against the non-orthogonality graph",
    )


def check_one_step_certification(
    A: SparseMatrix, planted: PlantedSystem, seed: int, states_per_run: int
) -> CheckResult:
    """Exact one-step expectation never exceeds the contraction bound."""
    worst = -np.inf
    count = 0
    for weights_mode in ("uniform", "rownorm"):
        w = build_weights(A, weights_mode)
        for method in ("rk", "nssrk", "gssrk"):
            snapshots = []

            def keep(k, x, s):
                if len(snapshots) < states_per_run:
                    snapshots.append((x.copy(), s.copy()))

            spec = MethodSpec(
                method=method,
                weights=weights_mode,
                max_iterations=states_per_run,
                tolerance=0.0,
                seed=seed,
            )
            run_ssrk(A, planted.rhs, spec, x_star=planted.solution, on_state=keep)
            noise_floor = 1e-18 * (1.0 + float(np.square(planted.solution).sum()))
            for x, s in snapshots:
                if s.size == 0:
                    continue
                err = float(np.square(x - planted.solution).sum())
                if err <= noise_floor:
                    continue  # numerically at the solution; both sides are dust
                exact = exact_one_step_expectation(A, planted.rhs, x, planted.solution, w, s)
                bound = one_step_factor(A, w, s) * err
                worst = max(worst, exact - bound - 1e-10 * err)
                count += 1
                if exact > bound + 1e-10 * err:
                    return CheckResult(
                        "one_step_certification",
                        False,
                        f"expectation {exact:.6e} exceeded bound {bound:.6e} at error {err:.6e}",
                    )
    return CheckResult(
        "one_step_certification", True, f"bound held on {count} snapshot states"
    )


def verify(source: str, seed: int = 0) -> VerificationReport:
    """Run the cross-module invariant suite against one matrix source."""
    return verify_matrix(load_matrix(source, seed), seed=seed, label=source)


def verify_matrix(A: SparseMatrix, seed: int = 0, label: str = "matrix") -> VerificationReport:
    planted = plant_solution(A, seed=derive_seed(seed, 0xB))
    m = A.num_rows
    iterations = min(2000, max(4 * m, 60))
    report = VerificationReport(source=label)
    report.checks.append(check_definition_contract(A, planted, seed, iterations))
    report.checks.append(check_complement_independence(A, seed, steps=3 * m))
    report.checks.append(check_error_decomposition(A, planted, seed, min(iterations, 400)))
    report.checks.append(
        check_orthogonal_preservation(A, planted, seed, min(iterations, 300))
    )
    report.checks.append(check_one_step_certification(A, planted, seed, states_per_run=25))
    return report
