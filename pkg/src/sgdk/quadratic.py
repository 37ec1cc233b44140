"""Discrete stochastic quadratic problems and their step-size thresholds.

The problem: minimize over theta

    0.5 * theta' E[Q] theta + E[r]' theta,

where (Q, r) is a random pair drawn from a finite mixture of (Q_i, r_i)
components with weights p_i.  Each Q_i is symmetric positive semidefinite and
r_i lies in range(Q_i), so every realization has a minimizer.

Geometry extracted from the mixture:

    lambda_1 >= ... >= lambda_m > 0   nonzero eigenvalues of E[Q]
    M  = E[Q E[Q] Q] - E[Q]^3         (PSD on range(E[Q]) by Jensen)
    t  = sup  v'Mv / v'E[Q]v          over v with v'E[Q]v != 0
    s  = inf  v'Mv / v'E[Q]v

t and s are the higher-order curvature parameters that couple batch size k to
the step-size thresholds.  For a constant step size C and batch size k, the
expected error e_N = (theta_N - theta*)' E[Q] (theta_N - theta*) contracts for
C below a convergence threshold built from t/k and provably grows for C above
a divergence threshold built from s/k; both reduce to the classical 2/lambda
gradient-descent thresholds as k -> infinity.

The thresholds are extreme values of g(lam) = 2*lam / (lam^2 + a) over the
spectrum (a = s/k or t/k), which is exactly the usual eigenvalue-bracket case
analysis; we compute the extremes directly and report the active index j.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INF",
    "StochasticQuadratic",
    "QuadraticGeometry",
    "ThresholdReport",
    "expected_geometry",
    "curvature_params",
    "homogeneous_thresholds",
    "inhomogeneous_thresholds",
    "thresholds",
    "divergence_threshold",
    "convergence_threshold",
    "problem_from_dict",
    "problem_to_dict",
    "report_csv_header",
    "report_csv_row",
]

INF = math.inf

# Validation tolerances for problem construction.
TOL_SYM = 1e-12
TOL_PSD = 1e-10
TOL_RANGE = 1e-10
TOL_PROBS = 1e-12
TOL_HOMOGENEOUS = 1e-8

DEFAULT_RANK_TOL = 1e-10


def _check_k(k) -> float:
    """Validate a batch size: a positive integer or math.inf."""
    if k == INF:
        return INF
    if isinstance(k, (bool, np.bool_)):
        raise ValueError("batch size k must be a positive integer or inf")
    kf = float(k)
    if not kf.is_integer() or kf <= 0:
        raise ValueError(f"batch size k must be a positive integer or inf, got {k!r}")
    return kf


@dataclass(frozen=True, eq=False)
class StochasticQuadratic:
    """A finite mixture of quadratic components 0.5 x'Q_i x + r_i'x.

    Attributes:
        qs: (n, p, p) stacked symmetric PSD matrices Q_i.
        rs: (n, p) stacked vectors r_i, each in range(Q_i).
        probs: (n,) strictly positive weights summing to one.
    """

    qs: np.ndarray
    rs: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        qs = np.asarray(self.qs, dtype=float)
        rs = np.asarray(self.rs, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if qs.ndim != 3 or qs.shape[1] != qs.shape[2]:
            raise ValueError(f"qs must have shape (n, p, p), got {qs.shape}")
        n, p = qs.shape[0], qs.shape[1]
        if rs.shape != (n, p):
            raise ValueError(f"rs must have shape ({n}, {p}), got {rs.shape}")
        if probs.shape != (n,):
            raise ValueError(f"probs must have shape ({n},), got {probs.shape}")
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "rs", rs)
        object.__setattr__(self, "probs", probs)

        if np.any(probs <= 0):
            raise ValueError("mixture probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > TOL_PROBS:
            raise ValueError(f"mixture probabilities must sum to 1, got {probs.sum()!r}")

        any_nonzero = False
        for i in range(n):
            q, r = qs[i], rs[i]
            asym = np.max(np.abs(q - q.T)) if p else 0.0
            if asym > TOL_SYM:
                raise ValueError(f"component {i}: Q asymmetric (max deviation {asym:.3e})")
            evals = np.linalg.eigvalsh(q)
            if evals[0] < -TOL_PSD * (1.0 + evals[-1]):
                raise ValueError(
                    f"component {i}: Q not positive semidefinite (min eigenvalue {evals[0]:.3e})"
                )
            # r must be representable as Q x, otherwise the realization has no minimizer.
            resid = r - q @ (np.linalg.pinv(q) @ r)
            if np.linalg.norm(resid) > TOL_RANGE * (1.0 + np.linalg.norm(r)):
                raise ValueError(f"component {i}: r not in range(Q)")
            any_nonzero = any_nonzero or evals[-1] > 0
        if not any_nonzero:
            raise ValueError("at least one component matrix must be nonzero")

    @property
    def dim(self) -> int:
        return self.qs.shape[1]

    @property
    def n_components(self) -> int:
        return self.qs.shape[0]

    def component(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.qs[i], self.rs[i]


def problem_from_dict(spec: dict) -> StochasticQuadratic:
    """Build a problem from the JSON schema {"dim": p, "components": [{"Q","r","p"}]}."""
    p = int(spec["dim"])
    comps = spec["components"]
    qs = np.array([np.reshape(c["Q"], (p, p)) for c in comps], dtype=float)
    rs = np.array([np.reshape(c["r"], (p,)) for c in comps], dtype=float)
    probs = np.array([c["p"] for c in comps], dtype=float)
    return StochasticQuadratic(qs, rs, probs)


def problem_to_dict(problem: StochasticQuadratic) -> dict:
    return {
        "dim": problem.dim,
        "components": [
            {"Q": problem.qs[i].tolist(), "r": problem.rs[i].tolist(), "p": float(problem.probs[i])}
            for i in range(problem.n_components)
        ],
    }


@dataclass(frozen=True, eq=False)
class QuadraticGeometry:
    """Expected geometry of a stochastic quadratic mixture.

    Attributes:
        eq: E[Q].
        er: E[r].
        theta_star: minimum-norm solution -E[Q]^+ E[r].
        m: rank of E[Q] at the working tolerance.
        lambdas: (m,) nonzero eigenvalues, descending.
        eigvecs: (p, m) matching orthonormal eigenvectors.
        big_m: M = E[Q E[Q] Q] - E[Q]^3.
        t_q, s_q: extreme generalized eigenvalues of M against E[Q], clamped >= 0.
        homogeneous: True iff Q_i theta* + r_i = 0 for every component.
        rank_tol: relative eigenvalue cutoff used for m.
    """

    eq: np.ndarray
    er: np.ndarray
    theta_star: np.ndarray
    m: int
    lambdas: np.ndarray
    eigvecs: np.ndarray
    big_m: np.ndarray
    t_q: float
    s_q: float
    homogeneous: bool
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def dim(self) -> int:
        return self.eq.shape[0]

    def error_of(self, theta: np.ndarray) -> float:
        """e(theta) = (theta - theta*)' E[Q] (theta - theta*)."""
        d = np.asarray(theta, dtype=float) - self.theta_star
        return float(d @ self.eq @ d)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "m": self.m,
            "lambdas": self.lambdas.tolist(),
            "theta_star": self.theta_star.tolist(),
            "t_q": self.t_q,
            "s_q": self.s_q,
            "homogeneous": self.homogeneous,
            "rank_tol": self.rank_tol,
        }


def _whitened_extremes(lambdas: np.ndarray, eigvecs: np.ndarray, big_m: np.ndarray) -> tuple[float, float]:
    """Extreme values of v'Mv / v'Av over range(A), via whitening.

    With A = U diag(lambdas) U' on its range, B = L^{-1/2} U' M U L^{-1/2} has
    the quotient's extremes as its extreme eigenvalues.  Exact for the
    discrete mixtures used here; negative round-off is clamped to zero since
    M is PSD on range(A) by Jensen's inequality.
    """
    scale = 1.0 / np.sqrt(lambdas)
    b = (eigvecs * scale).T @ big_m @ (eigvecs * scale)
    b = 0.5 * (b + b.T)
    evals = np.linalg.eigvalsh(b)
    return max(0.0, float(evals[-1])), max(0.0, float(evals[0]))


def expected_geometry(problem: StochasticQuadratic, rank_tol: float = DEFAULT_RANK_TOL) -> QuadraticGeometry:
    """Compute E[Q], theta*, the spectrum, M, t, s and the homogeneity flag."""
    probs = problem.probs
    eq = np.einsum("i,ijk->jk", probs, problem.qs)
    eq = 0.5 * (eq + eq.T)
    er = probs @ problem.rs

    evals, evecs = np.linalg.eigh(eq)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 0:
        raise ValueError("E[Q] has no positive eigenvalue (zero expected curvature)")
    keep = evals > rank_tol * evals[0]
    m = int(np.count_nonzero(keep))
    lambdas = evals[keep].copy()
    eigvecs = evecs[:, keep].copy()

    # Minimum-norm stationary point: E[Q] theta* = -E[r].
    theta_star = -eigvecs @ ((eigvecs.T @ er) / lambdas)

    big_m = np.einsum("i,ijk,kl,ilm->jm", probs, problem.qs, eq, problem.qs)
    big_m = big_m - np.linalg.matrix_power(eq, 3)
    big_m = 0.5 * (big_m + big_m.T)

    resid = problem.qs @ theta_star + problem.rs
    rnorms = np.linalg.norm(problem.rs, axis=1)
    homogeneous = bool(np.all(np.linalg.norm(resid, axis=1) <= TOL_HOMOGENEOUS * (1.0 + rnorms)))

    t_q, s_q = _whitened_extremes(lambdas, eigvecs, big_m)
    return QuadraticGeometry(
        eq=eq,
        er=er,
        theta_star=theta_star,
        m=m,
        lambdas=lambdas,
        eigvecs=eigvecs,
        big_m=big_m,
        t_q=t_q,
        s_q=s_q,
        homogeneous=homogeneous,
        rank_tol=rank_tol,
    )


def curvature_params(geom: QuadraticGeometry) -> tuple[float, float]:
    """Recompute (t, s) from a geometry's M and spectrum."""
    return _whitened_extremes(geom.lambdas, geom.eigvecs, geom.big_m)


@dataclass(frozen=True)
class ThresholdReport:
    """Step-size thresholds for one batch size.

    conv_ub: expected error contracts for 0 < C < conv_ub.
    div_lb: expected error grows by a factor > 1 per step for C > div_lb.
    j_index: 1-based eigenvalue index active in the divergence bound.
    gamma: slack parameter of the inhomogeneous divergence bound (0 if unused).
    k_max_div: largest integer strictly below s/(lambda_{m-1} lambda_m); None if m < 2.
    k_max_conv: integer closest to t/(lambda_m lambda_1).
    """

    k: float
    regime: str
    conv_ub: float
    div_lb: float
    j_index: int
    gamma: float
    k_max_div: int | None
    k_max_conv: int

    def to_dict(self) -> dict:
        d = {
            "k": "inf" if self.k == INF else int(self.k),
            "regime": self.regime,
            "conv_ub": self.conv_ub,
            "div_lb": self.div_lb,
            "j": self.j_index,
            "gamma": self.gamma,
            "kmax_div": self.k_max_div,
            "kmax_conv": self.k_max_conv,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


REPORT_CSV_COLUMNS = ("model", "k", "regime", "conv_ub", "div_lb", "j", "gamma", "kmax_div", "kmax_conv")


def report_csv_header() -> str:
    return ",".join(REPORT_CSV_COLUMNS)


def report_csv_row(model: str, report: ThresholdReport) -> str:
    d = report.to_dict()
    vals = [model, str(d["k"]), d["regime"]]
    vals += [repr(float(d[c])) for c in ("conv_ub", "div_lb")]
    vals.append(str(d["j"]))
    vals.append(repr(float(d["gamma"])))
    vals.append("" if d["kmax_div"] is None else str(d["kmax_div"]))
    vals.append(str(d["kmax_conv"]))
    return ",".join(vals)


def _strictly_below(x: float) -> int:
    """Largest integer strictly smaller than x (floor, stepping down at integers)."""
    n = math.floor(x)
    if n == x:
        n -= 1
    return n


def divergence_threshold(lambdas: np.ndarray, s: float, k, gamma: float = 0.0) -> tuple[float, int]:
    """max_j 2(lambda_j + gamma) / (lambda_j^2 + s/k) and the active 1-based j.

    The argmax over the spectrum reproduces the k-bracket case analysis for
    j; at bracket boundaries adjacent candidates tie and the smaller j is kept.
    """
    a = 0.0 if k == INF else s / k
    vals = 2.0 * (lambdas + gamma) / (lambdas**2 + a)
    j = int(np.argmax(vals))
    return float(vals[j]), j + 1


def convergence_threshold(lambdas: np.ndarray, t: float, k, inhomogeneous: bool = False) -> tuple[float, int]:
    """Homogeneous: min over j in {1, m} of 2 lambda_j / (lambda_j^2 + t/k).

    The inhomogeneous variant uses 2 lambda_j / ((1 + 1/k) lambda_j^2 + t/k).
    Either way the branch condition k (+1) > t/(lambda_1 lambda_m) is
    equivalent to taking the minimum of the two endpoint evaluations.
    """
    a = 0.0 if k == INF else t / k
    inflate = 1.0 + (0.0 if k == INF else 1.0 / k) if inhomogeneous else 1.0
    cands = np.array([lambdas[0], lambdas[-1]])
    vals = 2.0 * cands / (inflate * cands**2 + a)
    if vals[0] <= vals[1]:
        return float(vals[0]), 1
    return float(vals[1]), len(lambdas)


def _k_max_pair(lambdas: np.ndarray, s: float, t: float) -> tuple[int | None, int]:
    if len(lambdas) >= 2:
        k_max_div = _strictly_below(s / (lambdas[-2] * lambdas[-1]))
    else:
        k_max_div = None
    k_max_conv = int(round(t / (lambdas[-1] * lambdas[0])))
    return k_max_div, k_max_conv


def homogeneous_thresholds(geom: QuadraticGeometry, k) -> ThresholdReport:
    """Step-size thresholds for a homogeneous minimizer at batch size k."""
    kf = _check_k(k)
    if not geom.homogeneous:
        warnings.warn("homogeneous thresholds requested for an inhomogeneous geometry", stacklevel=2)
    conv, _ = convergence_threshold(geom.lambdas, geom.t_q, kf)
    div, j = divergence_threshold(geom.lambdas, geom.s_q, kf)
    k_max_div, k_max_conv = _k_max_pair(geom.lambdas, geom.s_q, geom.t_q)
    return ThresholdReport(
        k=kf,
        regime="homogeneous",
        conv_ub=conv,
        div_lb=div,
        j_index=j,
        gamma=0.0,
        k_max_div=k_max_div,
        k_max_conv=k_max_conv,
    )


def inhomogeneous_thresholds(geom: QuadraticGeometry, k, gamma: float | None = None) -> ThresholdReport:
    """Step-size thresholds for an inhomogeneous minimizer at batch size k.

    gamma defaults to the largest admissible value 0.5*sqrt(s/k) (the bound
    4 gamma^2 <= s/k at equality), which gives the tightest stated divergence
    region.  At k = inf, gamma degenerates to 0 and both thresholds reduce to
    the gradient-descent values 2/lambda_1 and 2/lambda_m.

    Note: the convergence numerator is 2 lambda_j; the 2 lambda_j^2 variant
    sometimes quoted for this bound is dimensionally inconsistent (it fails to
    reduce to 2/lambda as k -> inf).
    """
    kf = _check_k(k)
    if geom.homogeneous:
        warnings.warn("inhomogeneous thresholds requested for a homogeneous geometry", stacklevel=2)
    if kf == INF:
        if gamma not in (None, 0.0):
            raise ValueError("gamma must be 0 (or omitted) at k = inf")
        gamma = 0.0
    else:
        if geom.s_q <= 0.0:
            raise ValueError(
                "degenerate inhomogeneous geometry: s = 0 (Pr(Q = E[Q]) = 1), "
                "no admissible gamma"
            )
        if gamma is None:
            gamma = 0.5 * math.sqrt(geom.s_q / kf)
        g2 = 4.0 * gamma * gamma
        # the upper bound is checked with one-ulp slack so the maximal
        # admissible gamma = 0.5*sqrt(s/k) round-trips through floats
        if not (0.0 < g2 <= geom.s_q / kf * (1.0 + 1e-12)):
            raise ValueError(f"4*gamma^2 = {g2!r} outside (0, s/k] = (0, {geom.s_q / kf!r}]")
    conv, _ = convergence_threshold(geom.lambdas, geom.t_q, kf, inhomogeneous=True)
    div, j = divergence_threshold(geom.lambdas, geom.s_q, kf, gamma=gamma)
    k_max_div, k_max_conv = _k_max_pair(geom.lambdas, geom.s_q, geom.t_q)
    return ThresholdReport(
        k=kf,
        regime="inhomogeneous",
        conv_ub=conv,
        div_lb=div,
        j_index=j,
        gamma=gamma,
        k_max_div=k_max_div,
        k_max_conv=k_max_conv,
    )


def thresholds(geom: QuadraticGeometry, k, gamma: float | None = None) -> ThresholdReport:
    """Dispatch on the geometry's homogeneity flag."""
    if geom.homogeneous:
        return homogeneous_thresholds(geom, k)
    return inhomogeneous_thresholds(geom, k, gamma=gamma)
