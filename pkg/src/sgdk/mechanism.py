"""Ball-averaged local geometry of a nonconvex mixture and its thresholds.

Around a candidate minimizer theta*, the local curvature statistics are Monte
Carlo averages over a ball B(theta*, eps):

    avg_hessian  = mean of H_F(theta) over the ball,  H_F = sum_i p_i H_i
    s_f          = max(0, mean over the ball of the per-point infimum of
                   v'M(theta)v / v'H_F(theta)v),
    t_f          = the sup analogue,

with M(theta) = sum_i p_i H_i(theta) H_F(theta) H_i(theta) - H_F(theta)^3.
The per-point extremes are computed by whitening M against H_F restricted to
its numerically positive eigenspace; points where H_F has no eigenvalue above
tolerance contribute zero and are counted as flat spots.  Averaging per-point
infima (not the infimum of the average) follows the definition's display.

Only s_f appears in the divergence condition; t_f is defined here as its sup
analogue, mirroring the quadratic t/s pair, and is what sets the batch-size
scale of the convergence thresholds and the conv-side k_max.

Divergence and convergence thresholds then reuse the homogeneous quadratic
formulas with (lambdas, s_f, t_f) from the averaged Hessian's spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadratic import (
    DEFAULT_RANK_TOL,
    ThresholdReport,
    _check_k,
    _k_max_pair,
    convergence_threshold,
    divergence_threshold,
)

__all__ = ["LocalGeometry", "sample_ball", "local_geometry", "mechanism_thresholds", "epsilon_sweep"]

DEFAULT_EPSILON = 2e-2
DEFAULT_N_SAMPLES = 1000
_CHUNK = 64


@dataclass(frozen=True, eq=False)
class LocalGeometry:
    """Monte Carlo ball-averaged curvature summary around a center point."""

    center: np.ndarray
    epsilon: float
    n_samples: int
    seed: object
    avg_hessian: np.ndarray
    lambdas: np.ndarray
    s_f: float
    t_f: float
    rank_tol: float
    flat_count: int

    @property
    def m(self) -> int:
        return len(self.lambdas)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "epsilon": self.epsilon,
            "n": self.n_samples,
            "seed": self.seed,
            "m": self.m,
            "lambdas": self.lambdas.tolist(),
            "s_f": self.s_f,
            "t_f": self.t_f,
            "rank_tol": self.rank_tol,
            "flat_count": self.flat_count,
        }


def sample_ball(center, epsilon: float, n: int, seed) -> np.ndarray:
    """n points uniform in the closed Euclidean ball B(center, epsilon).

    Direction from a normalized standard normal, radius epsilon * U^(1/p).
    Deterministic given seed (an int or an existing Generator).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if n < 1:
        raise ValueError("need at least one sample")
    center = np.asarray(center, dtype=float)
    p = center.shape[0]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dirs = rng.standard_normal((n, p))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = epsilon * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / p)
    return center[None, :] + radii * dirs / norms


def _positive_subspace(evals: np.ndarray, rank_tol: float) -> np.ndarray:
    """Mask of eigenvalues kept as the numerically positive eigenspace."""
    top = evals.max()
    if top <= 0:
        return np.zeros_like(evals, dtype=bool)
    return evals > rank_tol * top


def local_geometry(
    mixture,
    center,
    epsilon: float = DEFAULT_EPSILON,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed=0,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> LocalGeometry:
    """Ball-averaged Hessian, spectrum, and the s_f/t_f curvature parameters.

    mixture must supply exact component Hessians (component_hessians or the
    hessian_diagonals fast path) and mixture weights; expectations over the
    mixture are computed exactly, only the ball integral is sampled.
    """
    center = np.asarray(center, dtype=float)
    pts = sample_ball(center, epsilon, n_samples, seed)
    probs = np.asarray(mixture.probs, dtype=float)
    p = center.shape[0]

    diag_probe = mixture.hessian_diagonals(center)
    if diag_probe is not None:
        hbar_sum = np.zeros(p)
        mins = np.empty(n_samples)
        maxs = np.empty(n_samples)
        flat = 0
        for lo in range(0, n_samples, _CHUNK):
            chunk = pts[lo : lo + _CHUNK]
            # (chunk, n, p) component curvature diagonals
            diags = np.stack([mixture.hessian_diagonals(x) for x in chunk])
            hbar = np.einsum("i,cip->cp", probs, diags)
            hbar_sum += hbar.sum(axis=0)
            second = np.einsum("i,cip->cp", probs, diags**2)
            ratio = second - hbar**2  # whitened M against a diagonal H_F
            for c in range(hbar.shape[0]):
                keep = _positive_subspace(hbar[c], rank_tol)
                if not keep.any():
                    mins[lo + c] = maxs[lo + c] = 0.0
                    flat += 1
                else:
                    mins[lo + c] = ratio[c, keep].min()
                    maxs[lo + c] = ratio[c, keep].max()
        avg_h = np.diag(hbar_sum / n_samples)
    else:
        avg_h = np.zeros((p, p))
        mins = np.empty(n_samples)
        maxs = np.empty(n_samples)
        flat = 0
        for c, x in enumerate(pts):
            hs = np.asarray(mixture.component_hessians(x), dtype=float)
            hbar = np.einsum("i,ijk->jk", probs, hs)
            hbar = 0.5 * (hbar + hbar.T)
            avg_h += hbar
            evals, evecs = np.linalg.eigh(hbar)
            keep = _positive_subspace(evals, rank_tol)
            if not keep.any():
                mins[c] = maxs[c] = 0.0
                flat += 1
                continue
            big_m = np.einsum("i,ijk,kl,ilm->jm", probs, hs, hbar, hs) - np.linalg.matrix_power(hbar, 3)
            white = evecs[:, keep] / np.sqrt(evals[keep])
            b = white.T @ big_m @ white
            bevals = np.linalg.eigvalsh(0.5 * (b + b.T))
            mins[c], maxs[c] = bevals[0], bevals[-1]
        avg_h /= n_samples

    evals = np.linalg.eigvalsh(avg_h)[::-1]
    keep = _positive_subspace(evals, rank_tol)
    lambdas = evals[keep].copy()
    return LocalGeometry(
        center=center,
        epsilon=float(epsilon),
        n_samples=int(n_samples),
        seed=seed,
        avg_hessian=avg_h,
        lambdas=lambdas,
        s_f=max(0.0, float(mins.mean())),
        t_f=max(0.0, float(maxs.mean())),
        rank_tol=rank_tol,
        flat_count=int(flat),
    )


def mechanism_thresholds(geom: LocalGeometry, k) -> ThresholdReport:
    """Divergence/convergence thresholds from ball-averaged local geometry."""
    kf = _check_k(k)
    if geom.m == 0:
        raise ValueError("local geometry has no positive curvature (m = 0)")
    div, j = divergence_threshold(geom.lambdas, geom.s_f, kf)
    conv, _ = convergence_threshold(geom.lambdas, geom.t_f, kf)
    k_max_div, k_max_conv = _k_max_pair(geom.lambdas, geom.s_f, geom.t_f)
    return ThresholdReport(
        k=kf,
        regime="mechanism",
        conv_ub=conv,
        div_lb=div,
        j_index=j,
        gamma=0.0,
        k_max_div=k_max_div,
        k_max_conv=k_max_conv,
    )


def epsilon_sweep(mixture, center, epsilons, n_samples: int = DEFAULT_N_SAMPLES, seed=0, rank_tol: float = DEFAULT_RANK_TOL):
    """Local geometry at several ball radii, for sensitivity reporting."""
    return [local_geometry(mixture, center, eps, n_samples, seed, rank_tol) for eps in epsilons]
