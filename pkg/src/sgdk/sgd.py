"""SGD with batch size k: the iterator, trajectory records, and oracles.

One update with step size c and a batch of k sampled component gradients:

    theta <- clip_box(theta - (c/k) * sum_j grad_j)

k = inf requests the exact expected gradient (plain gradient descent).  The
recursion oracle cross-checks the closed-form one-step conditional expectation
of the error e_N = (theta_N - theta*)' E[Q] (theta_N - theta*) against exact
enumeration of all batch draws on a discrete quadratic mixture.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .quadratic import INF, QuadraticGeometry, StochasticQuadratic, _check_k

__all__ = [
    "Box",
    "StepSchedule",
    "RunRecord",
    "sgd_k_step",
    "run",
    "recursion_oracle",
    "fit_divergence_rate",
]

ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box used to project iterates after each step."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box lower bound must be <= upper bound, matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class StepSchedule:
    """Constant (C_N = c0) or harmonic (C_N = c0/N, N >= 1) step sizes."""

    kind: str
    c0: float

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not math.isfinite(self.c0):
            raise ValueError("c0 must be finite")
        if self.kind == "harmonic" and self.c0 < 0:
            raise ValueError("harmonic schedules must be nonnegative")

    def at(self, n: int) -> float:
        if n < 1:
            raise ValueError("schedule index starts at 1")
        if self.kind == "constant":
            return self.c0
        return self.c0 / n


@dataclass(eq=False)
class RunRecord:
    """One trajectory: iterates, distances to a reference point, optional errors.

    factors carries the cell identity (model id, k, schedule, init radius,
    reference minimizer, run index, seed).  errors holds e_N when a quadratic
    geometry is attached.
    """

    factors: dict
    iterates: np.ndarray
    distances: np.ndarray
    errors: np.ndarray | None = None

    def __post_init__(self):
        if len(self.iterates) != len(self.distances):
            raise ValueError("iterates and distances must have equal length")
        if np.any(self.distances < 0):
            raise ValueError("distances must be nonnegative")


def sgd_k_step(theta: np.ndarray, grads, c: float, box: Box | None = None) -> np.ndarray:
    """theta - (c/k) * sum(grads), projected onto box when one is supplied."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(grads, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape[0] < 1:
        raise ValueError("need at least one gradient sample")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite gradient components in batch: {g!r}")
    if not math.isfinite(c):
        raise ValueError("step size must be finite")
    new = theta - (c / g.shape[0]) * g.sum(axis=0)
    if box is not None:
        new = box.clip(new)
    return new


def run(
    problem,
    theta0: np.ndarray,
    schedule: StepSchedule,
    k,
    n_steps: int,
    seed,
    box: Box | None = None,
    reference: np.ndarray | None = None,
    geometry: QuadraticGeometry | None = None,
    factors: dict | None = None,
) -> RunRecord:
    """Run SGD-k for n_steps from theta0, recording the trajectory.

    problem must expose probs, component_gradient(i, theta) and
    expected_gradient(theta); k component indices are drawn i.i.d. with
    replacement each iteration, and k = inf uses the expected gradient.
    Deterministic given seed.
    """
    kf = _check_k(k)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    theta = np.asarray(theta0, dtype=float).copy()
    if reference is None:
        reference = geometry.theta_star if geometry is not None else np.zeros_like(theta)
    reference = np.asarray(reference, dtype=float)

    rng = np.random.default_rng(seed)
    n_comp = len(problem.probs)
    iterates = [theta.copy()]
    for step_idx in range(1, n_steps + 1):
        c = schedule.at(step_idx)
        try:
            if kf == INF:
                grad = np.asarray(problem.expected_gradient(theta), dtype=float)[None, :]
            else:
                idx = rng.choice(n_comp, size=int(kf), p=problem.probs)
                grad = np.stack([np.asarray(problem.component_gradient(i, theta), dtype=float) for i in idx])
        except FloatingPointError:
            raise
        except Exception as exc:
            raise RuntimeError(f"gradient oracle failed at iteration {step_idx}: {exc}") from exc
        theta = sgd_k_step(theta, grad, c, box=box)
        iterates.append(theta.copy())

    iterates = np.array(iterates)
    distances = np.linalg.norm(iterates - reference, axis=1)
    errors = None
    if geometry is not None:
        diffs = iterates - geometry.theta_star
        errors = np.einsum("ij,jk,ik->i", diffs, geometry.eq, diffs)
    base = {"k": "inf" if kf == INF else int(kf), "schedule": (schedule.kind, schedule.c0), "seed": seed}
    if factors:
        base.update(factors)
    return RunRecord(factors=base, iterates=iterates, distances=distances, errors=errors)


def recursion_oracle(
    problem: StochasticQuadratic,
    geom: QuadraticGeometry,
    theta: np.ndarray,
    c: float,
    k: int,
) -> tuple[float, float]:
    """One-step conditional expectation of e_{N+1}: closed form vs enumeration.

    Closed form (all expectations over the mixture, d = theta - theta*,
    z_i = Q_i theta* + r_i):

        e - 2c e_2 + c^2 e_3 + (c^2/k) e_M
          + 2 (c^2/k) d' E[Q E[Q] z]  +  (c^2/k) E[z' E[Q] z]

    with e_l = d' E[Q]^l d and e_M = d' M d.  Enumeration averages e(theta')
    over all n_components^k equally-structured batch draws, weighting each by
    its product probability.
    """
    theta = np.asarray(theta, dtype=float)
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")
    n = problem.n_components
    if n**k > ENUMERATION_BUDGET:
        raise ValueError(f"enumeration budget exceeded: {n}^{k} > {ENUMERATION_BUDGET}")

    eq = geom.eq
    d = theta - geom.theta_star
    z = problem.qs @ geom.theta_star + problem.rs
    e1 = float(d @ eq @ d)
    e2 = float(d @ eq @ eq @ d)
    e3 = float(d @ eq @ eq @ eq @ d)
    e_m = float(d @ geom.big_m @ d)
    cross = float(d @ np.einsum("i,ijk,kl,il->j", problem.probs, problem.qs, eq, z))
    var = float(np.einsum("i,ij,jk,ik->", problem.probs, z, eq, z))
    formula = e1 - 2 * c * e2 + c * c * e3 + (c * c / k) * (e_m + 2 * cross + var)

    grads = problem.qs @ theta + problem.rs
    total = 0.0
    for batch in itertools.product(range(n), repeat=k):
        p_batch = float(np.prod(problem.probs[list(batch)]))
        theta_next = sgd_k_step(theta, grads[list(batch)], c)
        dn = theta_next - geom.theta_star
        total += p_batch * float(dn @ eq @ dn)
    return formula, total


def fit_divergence_rate(record, window: tuple[int, int] | None = None) -> tuple[float, float]:
    """Least-squares exponential rate of a distance trajectory.

    Regresses log(distance) on the iteration index over [start, stop) and
    returns (exp(slope), r^2).  The default window is iterations 2..end,
    skipping the initial transient.  Windows containing nonpositive distances
    are rejected.
    """
    distances = record.distances if isinstance(record, RunRecord) else np.asarray(record, dtype=float)
    n = len(distances)
    if window is None:
        window = (min(2, n - 1), n)
    start, stop = window
    seg = distances[start:stop]
    if len(seg) < 2:
        raise ValueError("window must contain at least two iterations")
    if np.any(seg <= 0):
        raise ValueError("window contains nonpositive distances")
    x = np.arange(start, stop, dtype=float)
    y = np.log(seg)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - (ym + slope * (x - xm))
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res <= 1e-30 else (1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0)
    return math.exp(slope), r2
