"""HTTP facade over the solver package.

Every endpoint is a pure function of its request body; nothing is stored
between calls. Domain validation failures surface as 400 responses with
the underlying message.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import harness
from ..bounds import build_report
from ..generators import gen_block_random, gen_circulant, gen_structured, plant_solution, StructuredPattern
from ..linalg import SparseMatrix, matrix_market_text, read_matrix_market
from ..solver import MethodSpec, run_method
from . import schemas


def _resolve_matrix(payload: schemas.MatrixPayload, seed: int) -> SparseMatrix:
    if payload.matrix_market is not None:
        return read_matrix_market(payload.matrix_market)
    return harness.load_matrix(payload.source, seed)


def _domain(call, *args, **kwargs):
    try:
        return call(*args, **kwargs)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="ssrk solver service", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/gen", response_model=schemas.GenResponse)
    def gen(request: schemas.GenRequest):
        def build():
            if request.kind == "block":
                n = request.n if request.n is not None else request.m
                blocks = request.blocks if request.blocks is not None else 10
                return gen_block_random(request.m, n, blocks, request.seed)
            if request.kind == "circulant":
                return gen_circulant(request.m, stencil=request.stencil, seed=request.seed)
            if request.kind == "banded":
                pattern = StructuredPattern(
                    "banded", request.m,
                    band_upper=request.band_upper, band_lower=request.band_lower,
                )
                return gen_structured(pattern, request.seed)
            if request.kind == "regular":
                pattern = StructuredPattern("regular", request.m, degree=request.degree)
                return gen_structured(pattern, request.seed)
            return gen_structured(StructuredPattern(request.kind, request.m), request.seed)

        matrix = _domain(build)
        return schemas.GenResponse(
            matrix_market=matrix_market_text(matrix),
            rows=matrix.num_rows,
            cols=matrix.num_cols,
            nnz=matrix.nnz,
        )

    @app.post("/solve", response_model=schemas.SolveResponse)
    def solve(request: schemas.SolveRequest):
        matrix = _domain(_resolve_matrix, request, request.seed)
        plant_seed = (
            request.plant_seed
            if request.plant_seed is not None
            else harness.derive_seed(request.seed, 0xB)
        )
        planted = plant_solution(matrix, seed=plant_seed)
        spec = _domain(
            MethodSpec,
            method=request.method,
            weights=request.weights,
            theta=request.theta if request.method == "rgrk" else None,
            max_iterations=request.iterations,
            tolerance=request.tolerance,
            seed=request.seed,
        )
        trace = _domain(run_method, matrix, planted.rhs, spec, x_star=planted.solution)
        return schemas.SolveResponse(
            trace_csv=harness.trace_csv(trace),
            iterations_run=trace.iterations,
            terminated=trace.terminated,
            final_sq_residual=float(trace.sq_residual[-1]),
            final_sq_error=float(trace.sq_error[-1]),
        )

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(request: schemas.BenchRequest):
        matrix = _domain(_resolve_matrix, request, request.seed)
        cfg = _domain(
            harness.ExperimentConfig,
            source=request.source or "inline",
            methods=tuple(request.methods),
            weights=request.weights,
            theta=request.theta,
            trials=request.trials,
            iterations=request.iterations,
            seed=request.seed,
        )
        curves = _domain(harness.run_experiment_on, matrix, cfg)
        return schemas.BenchResponse(
            csv=harness.curves_csv(curves),
            final_mean_sq_error={c.method: float(c.mean_sq_error[-1]) for c in curves},
        )

    @app.post("/bounds", response_model=schemas.BoundsResponse)
    def bounds(request: schemas.BoundsRequest):
        matrix = _domain(_resolve_matrix, request, request.seed)
        report = _domain(build_report, matrix, request.weights, request.theta)
        return schemas.BoundsResponse(
            rows=report.num_rows,
            cols=report.num_cols,
            weights=report.weights_mode,
            theta=report.theta,
            sigma_sq=report.sigma_sq,
            sigma_sq_row_normalized=report.sigma_sq_row_normalized,
            sigma_sq_weighted=report.sigma_sq_weighted,
            frobenius_sq=report.frobenius_sq,
            leave_one_out_mass=report.leave_one_out_mass,
            factors=report.factors,
            text=report.as_text(),
            csv=report.as_csv(),
        )

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def run_verification(request: schemas.VerifyRequest):
        matrix = _domain(_resolve_matrix, request, request.seed)
        label = request.source or "inline matrix"
        report = _domain(harness.verify_matrix, matrix, request.seed, label)
        return schemas.VerifyResponse(
            checks=[
                schemas.CheckOutcome(name=c.name, passed=c.passed, detail=c.detail)
                for c in report.checks
            ],
            all_passed=report.all_passed,
        )

    return app
