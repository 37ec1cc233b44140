"""Pydantic request/response models for the service."""

from __future__ import annotations

from typing import Literal, Union

from pydantic import BaseModel, Field

KValue = Union[int, Literal["inf"]]


class ComponentSpec(BaseModel):
    Q: list[list[float]]
    r: list[float]
    p: float = Field(gt=0)


class ProblemSpec(BaseModel):
    dim: int = Field(ge=1)
    components: list[ComponentSpec] = Field(min_length=1)


class GeometryOut(BaseModel):
    dim: int
    m: int
    lambdas: list[float]
    theta_star: list[float]
    t_q: float
    s_q: float
    homogeneous: bool
    rank_tol: float


class ThresholdReportOut(BaseModel):
    k: KValue
    regime: str
    conv_ub: float
    div_lb: float
    j: int
    gamma: float
    kmax_div: int | None
    kmax_conv: int


class QuadraticGeometryRequest(BaseModel):
    problem: ProblemSpec
    rank_tol: float = 1e-10


class QuadraticThresholdsRequest(BaseModel):
    problem: ProblemSpec
    k: list[KValue] = Field(default=[1, "inf"], min_length=1)
    regime: Literal["auto", "homogeneous", "inhomogeneous"] = "auto"
    gamma: float | None = None
    rank_tol: float = 1e-10
    label: str = "problem"


class QuadraticThresholdsResponse(BaseModel):
    geometry: GeometryOut
    reports: list[ThresholdReportOut]
    csv: str


class GenerateModelsRequest(BaseModel):
    family: Literal["qc", "st"]
    seed: int = 0
    n_components: int | None = None
    sharpness_spread: float | None = None


class GenerateModelsResponse(BaseModel):
    models: list[dict]


class LocalGeometryOut(BaseModel):
    center: list[float]
    epsilon: float
    n: int
    m: int
    lambdas: list[float]
    s_f: float
    t_f: float
    rank_tol: float
    flat_count: int


class MechanismRequest(BaseModel):
    model: dict
    minimizer: Union[str, list[float]]
    epsilon: float = 2e-2
    n_samples: int = Field(default=1000, ge=1)
    seed: int = 0
    rank_tol: float = 1e-10
    k: list[KValue] = Field(default=[1, "inf"])


class MechanismResponse(BaseModel):
    geometry: LocalGeometryOut
    reports: list[ThresholdReportOut]


class ThresholdTableRequest(BaseModel):
    models: list[dict] = Field(min_length=1)
    k: list[KValue] | None = None
    epsilon: float = 2e-2
    n_samples: int = Field(default=1000, ge=1)
    seed: int = 0
    rank_tol: float = 1e-10


class ThresholdTableResponse(BaseModel):
    rows: list[dict]
    errors: list[dict]
    csv: str


class RunPlanRequest(BaseModel):
    plan: dict


class RunPlanResponse(BaseModel):
    csv: str
    n_cells: int


class SummarizeRequest(BaseModel):
    csv: str


class SummarizeResponse(BaseModel):
    rows: list[dict]
    csv: str


class FigureDataRequest(BaseModel):
    csv: str


class FigureDataResponse(BaseModel):
    files: dict[str, str]


class VerifyRequest(BaseModel):
    criteria: list[int] | None = None


class VerifyResultOut(BaseModel):
    id: int
    name: str
    passed: bool
    detail: str
    seconds: float


class VerifyResponse(BaseModel):
    results: list[VerifyResultOut]
    all_passed: bool


class HealthResponse(BaseModel):
    status: str
    version: str
