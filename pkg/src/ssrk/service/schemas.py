"""Request/response models for the solver service.

Matrices travel inline: requests carry either Matrix Market text
(``matrix_market``) or a generator spec string (``source``) such as
``circulant:m=100``; exactly one must be provided. The service is
stateless, so responses carry full payloads (file texts, CSV) that the
client persists wherever it wants.
"""
from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from ..harness import GENERATOR_KINDS
from ..sampling import WEIGHT_MODES
from ..solver import METHODS


class MatrixPayload(BaseModel):
    matrix_market: str | None = None
    source: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.matrix_market is None) == (self.source is None):
            raise ValueError("provide exactly one of matrix_market or source")
        return self


class GenRequest(BaseModel):
    kind: str
    m: int = Field(default=100, ge=1)
    n: int | None = None
    blocks: int | None = None
    stencil: list[float] | None = None
    band_upper: int = 1
    band_lower: int = 0
    degree: int = 2
    seed: int = 0

    @model_validator(mode="after")
    def _known_kind(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"kind must be one of {GENERATOR_KINDS}")
        return self


class GenResponse(BaseModel):
    matrix_market: str
    rows: int
    cols: int
    nnz: int


class SolveRequest(MatrixPayload):
    method: str = "gssrk"
    weights: str = "uniform"
    theta: float | None = None
    iterations: int = Field(default=1000, ge=0)
    tolerance: float = Field(default=1e-10, ge=0.0)
    seed: int = 0
    plant_seed: int | None = None

    @model_validator(mode="after")
    def _known_names(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.weights not in WEIGHT_MODES:
            raise ValueError(f"weights must be one of {WEIGHT_MODES}")
        return self


class SolveResponse(BaseModel):
    trace_csv: str
    iterations_run: int
    terminated: str
    final_sq_residual: float
    final_sq_error: float


class BenchRequest(MatrixPayload):
    methods: list[str] = ["rk", "nssrk", "gssrk", "rgrk"]
    weights: str = "uniform"
    theta: float = 0.5
    trials: int = Field(default=200, ge=1)
    iterations: int = Field(default=5000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _known_names(self):
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"method must be one of {METHODS}")
        if self.weights not in WEIGHT_MODES:
            raise ValueError(f"weights must be one of {WEIGHT_MODES}")
        return self


class BenchResponse(BaseModel):
    csv: str
    final_mean_sq_error: dict[str, float]


class BoundsRequest(MatrixPayload):
    weights: str = "uniform"
    theta: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: int = 0


class BoundsResponse(BaseModel):
    rows: int
    cols: int
    weights: str
    theta: float
    sigma_sq: float
    sigma_sq_row_normalized: float
    sigma_sq_weighted: float
    frobenius_sq: float
    leave_one_out_mass: float
    factors: dict[str, float]
    text: str
    csv: str


class VerifyRequest(MatrixPayload):
    seed: int = 0


class CheckOutcome(BaseModel):
    name: str
    passed: bool
    detail: str


class VerifyResponse(BaseModel):
    checks: list[CheckOutcome]
    all_passed: bool
