"""FastAPI application wrapping the core package.

The CLI talks to these endpoints (in-process by default); the acceptance
suite can also be triggered remotely via POST /acceptance/verify.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.requests import Request
from fastapi.responses import JSONResponse

from .. import __version__
from .. import experiments as ex
from .. import mechanism as mech
from .. import quadratic as qd
from ..acceptance import run_acceptance
from ..problems import generate_qc_models, generate_st_models
from . import schemas as S


def _k_value(k):
    return qd.INF if k == "inf" else int(k)


def _problem(spec: S.ProblemSpec) -> qd.StochasticQuadratic:
    return qd.problem_from_dict(spec.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(title="sgdk service", version=__version__)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/quadratic/geometry", response_model=S.GeometryOut)
    def quadratic_geometry(req: S.QuadraticGeometryRequest):
        geom = qd.expected_geometry(_problem(req.problem), rank_tol=req.rank_tol)
        return S.GeometryOut(**geom.to_dict())

    @app.post("/quadratic/thresholds", response_model=S.QuadraticThresholdsResponse)
    def quadratic_thresholds(req: S.QuadraticThresholdsRequest):
        geom = qd.expected_geometry(_problem(req.problem), rank_tol=req.rank_tol)
        reports = []
        lines = [qd.report_csv_header()]
        for k in req.k:
            kv = _k_value(k)
            if req.regime == "homogeneous":
                rep = qd.homogeneous_thresholds(geom, kv)
            elif req.regime == "inhomogeneous":
                rep = qd.inhomogeneous_thresholds(geom, kv, gamma=req.gamma)
            else:
                rep = qd.thresholds(geom, kv, gamma=req.gamma)
            reports.append(S.ThresholdReportOut(**rep.to_dict()))
            lines.append(qd.report_csv_row(req.label, rep))
        return S.QuadraticThresholdsResponse(
            geometry=S.GeometryOut(**geom.to_dict()),
            reports=reports,
            csv="\n".join(lines) + "\n",
        )

    @app.post("/models/generate", response_model=S.GenerateModelsResponse)
    def models_generate(req: S.GenerateModelsRequest):
        if req.family == "qc":
            kwargs = {}
            if req.n_components is not None:
                kwargs["n_components"] = req.n_components
            if req.sharpness_spread is not None:
                kwargs["sharpness_spread"] = req.sharpness_spread
            models = generate_qc_models(req.seed, **kwargs)
        else:
            models = generate_st_models(req.seed)
        return S.GenerateModelsResponse(models=[m.to_dict() for m in models])

    @app.post("/mechanism/geometry", response_model=S.LocalGeometryOut)
    def mechanism_geometry(req: S.MechanismRequest):
        geom = _local_geometry(req)
        d = geom.to_dict()
        d.pop("seed")
        return S.LocalGeometryOut(**d)

    @app.post("/mechanism/thresholds", response_model=S.MechanismResponse)
    def mechanism_thresholds(req: S.MechanismRequest):
        geom = _local_geometry(req)
        reports = [S.ThresholdReportOut(**mech.mechanism_thresholds(geom, _k_value(k)).to_dict()) for k in req.k]
        d = geom.to_dict()
        d.pop("seed")
        return S.MechanismResponse(geometry=S.LocalGeometryOut(**d), reports=reports)

    def _local_geometry(req: S.MechanismRequest):
        model = ex.load_model(req.model)
        if isinstance(req.minimizer, str):
            center, _ = ex._minimizer_points(model, req.minimizer)
        else:
            center = np.asarray(req.minimizer, dtype=float)
        return mech.local_geometry(model, center, req.epsilon, req.n_samples, req.seed, req.rank_tol)

    @app.post("/experiments/threshold-table", response_model=S.ThresholdTableResponse)
    def threshold_table(req: S.ThresholdTableRequest):
        k_list = None if req.k is None else [_k_value(k) for k in req.k]
        rows, errors = ex.threshold_table(
            req.models, k_list, epsilon=req.epsilon, n_samples=req.n_samples, seed=req.seed, rank_tol=req.rank_tol
        )
        return S.ThresholdTableResponse(rows=rows, errors=errors, csv=ex.threshold_table_csv(rows))

    @app.post("/experiments/run", response_model=S.RunPlanResponse)
    def experiments_run(req: S.RunPlanRequest):
        plan = ex.ExperimentPlan.from_dict(req.plan)
        results = ex.run_plan(plan)
        return S.RunPlanResponse(csv=ex.trajectories_to_csv(results), n_cells=len(results))

    @app.post("/experiments/summarize", response_model=S.SummarizeResponse)
    def experiments_summarize(req: S.SummarizeRequest):
        rows = ex.summarize(req.csv)
        return S.SummarizeResponse(rows=rows, csv=ex.summary_to_csv(rows))

    @app.post("/experiments/figure-data", response_model=S.FigureDataResponse)
    def experiments_figure_data(req: S.FigureDataRequest):
        return S.FigureDataResponse(files=ex.figure_data(req.csv))

    @app.post("/acceptance/verify", response_model=S.VerifyResponse)
    def acceptance_verify(req: S.VerifyRequest):
        results = run_acceptance(req.criteria)
        out = [
            S.VerifyResultOut(id=r.cid, name=r.name, passed=r.passed, detail=r.detail, seconds=r.seconds)
            for r in results
        ]
        return S.VerifyResponse(results=out, all_passed=all(r.passed for r in results))

    return app


app = create_app()
