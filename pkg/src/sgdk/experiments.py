"""Factor-grid experiment harness: threshold tables, trial ensembles, summaries.

A plan is a factor grid (model x init minimizer x batch size x learning rate)
with 100 seeded runs of at most 20 iterations per cell.  Learning rates are
either explicit per-minimizer lists or linear combinations a_l * l + a_u * u
of the k=1 divergence (l) and convergence (u) thresholds computed from the
ball-averaged local geometry.  Output is CSV: one trajectory row per
(run, iteration) and one summary row per cell.

Determinism: per-run seeds derive from (master_seed, cell_index, run_index),
so any single run is reproducible independently of execution order and the
same master seed yields byte-identical CSV.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .mechanism import LocalGeometry, local_geometry, mechanism_thresholds, sample_ball
from .problems.qc import QcSumsModel
from .problems.st import StSumsModel
from .quadratic import DEFAULT_RANK_TOL, INF, ThresholdReport
from .sgd import fit_divergence_rate

__all__ = [
    "ExperimentPlan",
    "qc_default_plan",
    "st_default_plan",
    "load_model",
    "threshold_table",
    "threshold_table_csv",
    "run_plan",
    "trajectories_to_csv",
    "summarize",
    "summary_to_csv",
    "figure_data",
]

TRAJECTORY_COLUMNS = ("model", "method", "k", "rate", "init_radius", "run", "iter", "dist_ref", "dist_alt")
SUMMARY_COLUMNS = (
    "model",
    "method",
    "k",
    "rate",
    "init_radius",
    "n_runs",
    "n_failed",
    "frac_diverged",
    "frac_diverged_strict",
    "median_rate",
    "min_final",
    "max_final",
    "max_dist",
)

# A run "diverged" when its final distance exceeds 10x the initial distance;
# the strict variant additionally requires a fitted exponential rate > 1.05
# with r^2 > 0.9 over the escape phase (see _escape_window).
DIVERGENCE_DISTANCE_FACTOR = 10.0
DIVERGENCE_RATE_MIN = 1.05
DIVERGENCE_R2_MIN = 0.9

QC_CIRC_RATES = (1e10, 5e10, 1e11, 5e11, 1e12, 5e12)
QC_QUAD_RATES = (1.0, 4.0, 16.0, 64.0, 256.0, 1024.0)
ST_RATE_COMBOS = ((1.5, 0.0), (0.5, 0.5), (0.0, 0.5))  # 1.5l, 0.5(u+l), 0.5u
ST_RADII = (1e-3, 1e-2, 1e-1, 1.0)
ST_TABLE_KS = (1, 100, 200, 350, 500, "inf")


def _k_from_json(k):
    if k in ("inf", None, INF):
        return INF
    return int(k)


def _k_to_json(k):
    return "inf" if k == INF else int(k)


def load_model(source):
    """Build a model from a dict, JSON text, or a path to a model JSON file."""
    if isinstance(source, (QcSumsModel, StSumsModel)):
        return source
    if isinstance(source, str):
        if source.lstrip().startswith("{"):
            source = json.loads(source)
        else:
            with open(source) as fh:
                source = json.load(fh)
    family = source.get("family")
    if family == "qc":
        return QcSumsModel.from_dict(source)
    if family == "st":
        return StSumsModel.from_dict(source)
    raise ValueError(f"unknown model family {family!r}")


def _minimizer_points(model, name: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Reference minimizer for a named init, plus the alternate one (QC only)."""
    if isinstance(model, QcSumsModel):
        if name == "circ":
            return model.circ_min, model.quad_min
        if name == "quad":
            return model.quad_min, model.circ_min
        raise ValueError(f"unknown QC minimizer {name!r}")
    if isinstance(model, StSumsModel):
        if name == "flattest":
            return model.catalog.flattest, None
        if name == "sharpest":
            return model.catalog.sharpest, None
        raise ValueError(f"unknown ST minimizer {name!r}")
    raise ValueError(f"unsupported model type {type(model)!r}")


def _minimizer_names(model) -> tuple[str, ...]:
    return ("circ", "quad") if isinstance(model, QcSumsModel) else ("flattest", "sharpest")


@dataclass
class ExperimentPlan:
    """Fully specified factor grid.

    models holds model dicts or file paths; methods holds batch sizes (ints or
    "inf"); inits holds {"minimizer": name, "radius": float} cells; rates is
    {"kind": "explicit", "by_minimizer": {name: [..]}} or {"kind": "relative",
    "combos": [[a_l, a_u], ..], "reference_k": 1}.
    """

    family: str
    models: list
    methods: list
    inits: list
    rates: dict
    runs_per_cell: int = 100
    max_iters: int = 20
    master_seed: int = 0
    epsilon: float = 2e-2
    n_samples: int = 1000
    rank_tol: float = DEFAULT_RANK_TOL
    geometry_seed: int = 0

    def __post_init__(self):
        if self.family not in ("qc", "st"):
            raise ValueError("family must be 'qc' or 'st'")
        if self.runs_per_cell < 1 or self.max_iters < 1:
            raise ValueError("runs_per_cell and max_iters must be positive")
        kind = self.rates.get("kind")
        if kind == "explicit":
            if not all(v > 0 for vals in self.rates["by_minimizer"].values() for v in vals):
                raise ValueError("explicit rates must be positive")
        elif kind != "relative":
            raise ValueError("rates.kind must be 'explicit' or 'relative'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [_k_to_json(_k_from_json(k)) for k in self.methods]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        return cls(**d)


def qc_default_plan(models, master_seed: int = 0, runs_per_cell: int = 100, max_iters: int = 20) -> ExperimentPlan:
    """The quadratic-circle grid: SGD-1 and GD, both minimizers, disc radius 1e-8,
    explicit rate ladders per minimizer."""
    return ExperimentPlan(
        family="qc",
        models=list(models),
        methods=[1, "inf"],
        inits=[{"minimizer": "circ", "radius": 1e-8}, {"minimizer": "quad", "radius": 1e-8}],
        rates={"kind": "explicit", "by_minimizer": {"circ": list(QC_CIRC_RATES), "quad": list(QC_QUAD_RATES)}},
        runs_per_cell=runs_per_cell,
        max_iters=max_iters,
        master_seed=master_seed,
    )


def st_default_plan(models, master_seed: int = 0, runs_per_cell: int = 100, max_iters: int = 20, radii=ST_RADII) -> ExperimentPlan:
    """The Styblinski-Tang grid: k in {1, 200, 500, inf}, flattest/sharpest
    minimizers, four init radii, threshold-relative rates 1.5l, 0.5(u+l), 0.5u."""
    inits = [
        {"minimizer": name, "radius": float(r)}
        for name in ("flattest", "sharpest")
        for r in radii
    ]
    return ExperimentPlan(
        family="st",
        models=list(models),
        methods=[1, 200, 500, "inf"],
        inits=inits,
        rates={"kind": "relative", "combos": [list(c) for c in ST_RATE_COMBOS], "reference_k": 1},
        runs_per_cell=runs_per_cell,
        max_iters=max_iters,
        master_seed=master_seed,
    )


# ---------------------------------------------------------------------------
# threshold tables


def _geometry_for(model, minimizer: str, epsilon, n_samples, seed, rank_tol) -> LocalGeometry:
    center, _ = _minimizer_points(model, minimizer)
    return local_geometry(model, center, epsilon, n_samples, seed, rank_tol)


def _qc_table_ks(report: ThresholdReport) -> list:
    """Column batch sizes {1, 0.99 kmax, 2 kmax, inf} where the kmax values exist."""
    ks = {1}
    for kmax in (report.k_max_div, report.k_max_conv):
        if kmax is not None and kmax >= 1:
            ks.add(max(1, math.floor(0.99 * kmax)))
            ks.add(2 * kmax)
    return sorted(ks) + [INF]


def threshold_table(
    models,
    k_list=None,
    epsilon: float = 2e-2,
    n_samples: int = 1000,
    seed: int = 0,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> tuple[list[dict], list[dict]]:
    """Per (model, minimizer, k) threshold rows; failures recorded, not raised.

    Returns (rows, errors).  With no explicit k_list, QC models use the
    {1, 0.99 kmax, 2 kmax, inf} columns and ST models the fixed
    {1, 100, 200, 350, 500, inf} rows.
    """
    rows, errors = [], []
    for source in models:
        try:
            model = load_model(source)
        except Exception as exc:
            errors.append({"model": str(source)[:80], "minimizer": "", "error": str(exc)})
            continue
        for minim in _minimizer_names(model):
            try:
                geom = _geometry_for(model, minim, epsilon, n_samples, seed, rank_tol)
                if k_list is not None:
                    ks = [_k_from_json(k) for k in k_list]
                elif isinstance(model, QcSumsModel):
                    ks = _qc_table_ks(mechanism_thresholds(geom, 1))
                else:
                    ks = [_k_from_json(k) for k in ST_TABLE_KS]
                for k in ks:
                    rep = mechanism_thresholds(geom, k)
                    row = {"model": model.name, "minimizer": minim}
                    row.update(rep.to_dict())
                    rows.append(row)
            except Exception as exc:  # keep remaining cells alive
                errors.append({"model": model.name, "minimizer": minim, "error": str(exc)})
    return rows, errors


THRESHOLD_CSV_COLUMNS = ("model", "minimizer", "k", "regime", "conv_ub", "div_lb", "j", "gamma", "kmax_div", "kmax_conv")


def threshold_table_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    out.write(",".join(THRESHOLD_CSV_COLUMNS) + "\n")
    for row in rows:
        vals = []
        for col in THRESHOLD_CSV_COLUMNS:
            v = row.get(col)
            if v is None:
                vals.append("")
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        out.write(",".join(vals) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# running plans


@dataclass
class CellResult:
    """Distances for one cell: (runs, iters+1) to the reference minimizer."""

    model: str
    minimizer: str
    method: str
    k: object
    rate: float
    init_radius: float
    dist_ref: np.ndarray
    dist_alt: np.ndarray | None
    failed_runs: list = field(default_factory=list)


def _draw_indices(rng: np.random.Generator, cum_probs: np.ndarray, shape) -> np.ndarray:
    return np.searchsorted(cum_probs, rng.random(shape), side="right")


def _run_cell(model, center, alt, k, rate, radius, plan: ExperimentPlan, cell_index: int) -> tuple[np.ndarray, np.ndarray | None, list]:
    n_runs, n_iters = plan.runs_per_cell, plan.max_iters
    p = model.dim
    n_comp = len(model.probs)
    cum = np.cumsum(model.probs)
    cum[-1] = 1.0

    inits = np.empty((n_runs, p))
    finite_k = k != INF
    idx = np.empty((n_runs, n_iters, int(k)), dtype=np.int64) if finite_k else None
    for run in range(n_runs):
        rng = np.random.default_rng(np.random.SeedSequence((plan.master_seed, cell_index, run)))
        inits[run] = center if radius == 0 else sample_ball(center, radius, 1, rng)[0]
        if finite_k:
            idx[run] = _draw_indices(rng, cum, (n_iters, int(k)))

    thetas = inits.copy()
    dist_ref = np.empty((n_runs, n_iters + 1))
    dist_alt = np.empty((n_runs, n_iters + 1)) if alt is not None else None
    dist_ref[:, 0] = np.linalg.norm(thetas - center, axis=1)
    if alt is not None:
        dist_alt[:, 0] = np.linalg.norm(thetas - alt, axis=1)
    alive = np.ones(n_runs, dtype=bool)
    for t in range(n_iters):
        if finite_k:
            grads = model.batch_mean_gradient(thetas, idx[:, t, :])
        else:
            grads = model.expected_gradient_batch(thetas)
        bad = ~np.isfinite(grads).all(axis=1)
        if bad.any():
            alive &= ~bad
            grads = np.where(np.isfinite(grads), grads, 0.0)
        stepped = thetas - rate * grads
        stepped = np.clip(stepped, model.box.lower, model.box.upper)
        thetas = np.where(alive[:, None], stepped, thetas)
        dist_ref[:, t + 1] = np.linalg.norm(thetas - center, axis=1)
        if alt is not None:
            dist_alt[:, t + 1] = np.linalg.norm(thetas - alt, axis=1)
    failed = [int(r) for r in np.nonzero(~alive)[0]]
    return dist_ref, dist_alt, failed


def _resolve_rates(plan: ExperimentPlan, model, minimizer: str, geom_cache: dict) -> list[tuple[str, float]]:
    spec = plan.rates
    if spec["kind"] == "explicit":
        return [(repr(float(v)), float(v)) for v in spec["by_minimizer"][minimizer]]
    key = (model.name, minimizer)
    if key not in geom_cache:
        geom_cache[key] = _geometry_for(model, minimizer, plan.epsilon, plan.n_samples, plan.geometry_seed, plan.rank_tol)
    rep = mechanism_thresholds(geom_cache[key], _k_from_json(spec.get("reference_k", 1)))
    out = []
    for a_l, a_u in spec["combos"]:
        out.append((f"{a_l}*l+{a_u}*u", a_l * rep.div_lb + a_u * rep.conv_ub))
    return out


def run_plan(plan: ExperimentPlan) -> list[CellResult]:
    """Execute every cell of the plan in deterministic order."""
    results = []
    geom_cache: dict = {}
    cell_index = 0
    for source in plan.models:
        model = load_model(source)
        for init in plan.inits:
            minim = init["minimizer"]
            radius = float(init["radius"])
            center, alt = _minimizer_points(model, minim)
            rates = _resolve_rates(plan, model, minim, geom_cache)
            for k_raw in plan.methods:
                k = _k_from_json(k_raw)
                for _, rate in rates:
                    dist_ref, dist_alt, failed = _run_cell(model, center, alt, k, rate, radius, plan, cell_index)
                    results.append(
                        CellResult(
                            model=f"{model.name}/{minim}",
                            minimizer=minim,
                            method="gd" if k == INF else "sgd",
                            k=_k_to_json(k),
                            rate=rate,
                            init_radius=radius,
                            dist_ref=dist_ref,
                            dist_alt=dist_alt,
                            failed_runs=failed,
                        )
                    )
                    cell_index += 1
    return results


def trajectories_to_csv(results: list[CellResult]) -> str:
    """One row per (run, iteration); failed runs flagged with iter = -1."""
    out = io.StringIO()
    out.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    for cell in results:
        prefix = f"{cell.model},{cell.method},{cell.k},{cell.rate!r},{cell.init_radius!r}"
        n_runs, n_pts = cell.dist_ref.shape
        for run in range(n_runs):
            if run in cell.failed_runs:
                out.write(f"{prefix},{run},-1,nan,nan\n")
                continue
            for it in range(n_pts):
                alt = repr(float(cell.dist_alt[run, it])) if cell.dist_alt is not None else ""
                out.write(f"{prefix},{run},{it},{float(cell.dist_ref[run, it])!r},{alt}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# summaries


def _parse_trajectory_csv(csv_text: str) -> dict:
    lines = csv_text.strip().splitlines()
    if not lines or lines[0] != ",".join(TRAJECTORY_COLUMNS):
        raise ValueError("not a trajectory CSV")
    cells: dict = {}
    for line in lines[1:]:
        parts = line.split(",")
        model, method, k, rate, radius, run, it = parts[:7]
        key = (model, method, k, float(rate), float(radius))
        runs = cells.setdefault(key, {})
        it = int(it)
        if it < 0:
            runs[int(run)] = None  # flagged failure
            continue
        runs.setdefault(int(run), []).append((it, float(parts[7])))
    return cells


def _escape_window(distances: np.ndarray) -> tuple[int, int]:
    """Fit window for the exponential escape phase of a trajectory.

    Starts at the first iteration (>= 2) where the distance exceeds 3x the
    initial distance, skipping the initial transient; ends where the local
    analysis stops applying: at the growth peak (first subsequent decrease)
    or once the distance reaches 30% of the trajectory's own maximum (the
    feasible box starts to dominate there).  Falls back to the full 2..T
    window when the trajectory never escapes or the phase is too short.
    """
    n = len(distances)
    full = (min(2, n - 1), n)
    onset = None
    for i in range(full[0], n):
        if distances[i] > 3.0 * distances[0]:
            onset = i
            break
    if onset is None:
        return full
    guard = 0.3 * distances.max()
    end = n
    for i in range(onset + 1, n):
        if distances[i] < distances[i - 1] or distances[i] >= guard:
            end = i
            break
    if end - onset < 3:
        return full
    return onset, end


def classify_run(distances: np.ndarray) -> dict:
    """Divergence classification and escape-phase rate fit for one trajectory."""
    initial, final = float(distances[0]), float(distances[-1])
    diverged = final > DIVERGENCE_DISTANCE_FACTOR * initial
    try:
        rate, r2 = fit_divergence_rate(distances, window=_escape_window(distances))
    except ValueError:
        rate, r2 = math.nan, math.nan
    strict = bool(diverged and not math.isnan(rate) and rate > DIVERGENCE_RATE_MIN and r2 > DIVERGENCE_R2_MIN)
    return {
        "initial": initial,
        "final": final,
        "max": float(distances.max()),
        "diverged": bool(diverged),
        "diverged_strict": strict,
        "rate": rate,
        "r2": r2,
    }


def summarize(source) -> list[dict]:
    """Per-cell summary rows from CellResults or trajectory CSV text."""
    if isinstance(source, str):
        cells = _parse_trajectory_csv(source)
        items = []
        for (model, method, k, rate, radius), runs in cells.items():
            trajs, failed = [], 0
            for run in sorted(runs):
                if runs[run] is None:
                    failed += 1
                    continue
                seq = sorted(runs[run])
                trajs.append(np.array([d for _, d in seq]))
            items.append((model, method, k, rate, radius, trajs, failed))
    else:
        items = [
            (
                c.model,
                c.method,
                str(c.k),
                c.rate,
                c.init_radius,
                [c.dist_ref[r] for r in range(c.dist_ref.shape[0]) if r not in c.failed_runs],
                len(c.failed_runs),
            )
            for c in source
        ]
    if not items:
        raise ValueError("no cells to summarize")

    rows = []
    for model, method, k, rate, radius, trajs, failed in items:
        if not trajs:
            raise ValueError(f"cell {model},{method},{k},{rate} has no successful runs")
        infos = [classify_run(t) for t in trajs]
        rates = [i["rate"] for i in infos if not math.isnan(i["rate"])]
        rows.append(
            {
                "model": model,
                "method": method,
                "k": k,
                "rate": rate,
                "init_radius": radius,
                "n_runs": len(infos),
                "n_failed": failed,
                "frac_diverged": sum(i["diverged"] for i in infos) / len(infos),
                "frac_diverged_strict": sum(i["diverged_strict"] for i in infos) / len(infos),
                "median_rate": float(np.median(rates)) if rates else math.nan,
                "min_final": min(i["final"] for i in infos),
                "max_final": max(i["final"] for i in infos),
                "max_dist": max(i["max"] for i in infos),
            }
        )
    return rows


def summary_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    out.write(",".join(SUMMARY_COLUMNS) + "\n")
    for row in rows:
        vals = []
        for col in SUMMARY_COLUMNS:
            v = row[col]
            vals.append(repr(float(v)) if isinstance(v, float) else str(v))
        out.write(",".join(vals) + "\n")
    return out.getvalue()


def figure_data(csv_text: str) -> dict[str, str]:
    """Per-cell files of (run, iter, log10 distance), the axes of the
    log-distance trajectory figures.  Zero distances are left blank."""
    cells = _parse_trajectory_csv(csv_text)
    out = {}
    for (model, method, k, rate, radius), runs in sorted(cells.items()):
        name = f"{model}_{method}_k{k}_rate{rate:g}_rad{radius:g}.csv".replace("/", "-")
        buf = io.StringIO()
        buf.write("run,iter,log10_dist\n")
        for run in sorted(runs):
            if runs[run] is None:
                continue
            for it, dist in sorted(runs[run]):
                log = "" if dist <= 0 else repr(math.log10(dist))
                buf.write(f"{run},{it},{log}\n")
        out[name] = buf.getvalue()
    return out
