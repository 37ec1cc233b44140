"""Quadratic-circle sums: a planar nonconvex family with two minimizers.

Each component is f(x) = min(g(x), h(x)) with a parabolic valley

    g(x) = q1 (x2 - q2 x1^2 - q3)^2

and a radially symmetric circular basin

    h(x) = c4                                   for ||x|| <= c2
         = c4 + c1                              for ||x|| >= c3
         = c4 + c1 * s((||x|| - c2)/(c3 - c2))  in between,

where s(t) = t^3 (6 t^2 - 15 t + 10) is the quintic smoothstep (s and its
first two derivatives vanish at t=0 and match the plateau at t=1, so h is
C^2 everywhere).  On the tie set g = h and on nondifferentiable curves the
gradient and Hessian are taken from the quadratic component.

The generated models share q3 = -15 and c4 = 0 across components, so the
expected objective has exactly two minimizers inside the feasible box
(-10,10) x (-20,15): a circular-basin minimum at (0,0) and a quadratic-basin
minimum at (0,-15), both homogeneous (every component is minimized there).
Sharp variants use large q1 / a narrow wall (small c3 - c2), flat variants
small q1 / a wide wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sgd import Box
from .base import MixtureProblem

__all__ = ["QcComponent", "QcSumsModel", "qc_eval_grad_hess", "generate_qc_models"]

QC_BOX = Box(np.array([-10.0, -20.0]), np.array([10.0, 15.0]))
CIRC_MIN = np.array([0.0, 0.0])
QUAD_MIN = np.array([0.0, -15.0])

STATIONARY_TOL = 1e-8


def _smoothstep(t: float) -> tuple[float, float, float]:
    """s(t), s'(t), s''(t) for the quintic smoothstep."""
    s = t**3 * (6.0 * t * t - 15.0 * t + 10.0)
    s1 = 30.0 * t * t * (t - 1.0) ** 2
    s2 = 60.0 * t * (2.0 * t - 1.0) * (t - 1.0)
    return s, s1, s2


@dataclass(frozen=True)
class QcComponent:
    """Parameters of one quadratic-circle component."""

    q1: float
    q2: float
    q3: float
    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if self.q1 < 0 or self.q2 < 0:
            raise ValueError("q1 and q2 must be nonnegative")
        if min(self.c1, self.c2, self.c3, self.c4) < 0:
            raise ValueError("circular-basin parameters must be nonnegative")
        if not self.c3 > self.c2:
            raise ValueError("need c3 > c2")


def _quad_parts(comp: QcComponent, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    u = x[1] - comp.q2 * x[0] ** 2 - comp.q3
    du = np.array([-2.0 * comp.q2 * x[0], 1.0])
    g = comp.q1 * u * u
    grad = 2.0 * comp.q1 * u * du
    hess = 2.0 * comp.q1 * (np.outer(du, du) + u * np.array([[-2.0 * comp.q2, 0.0], [0.0, 0.0]]))
    return g, grad, hess


def _circ_parts(comp: QcComponent, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    r = float(np.linalg.norm(x))
    zero = np.zeros(2)
    if r <= comp.c2:
        return comp.c4, zero, np.zeros((2, 2))
    if r >= comp.c3:
        return comp.c4 + comp.c1, zero, np.zeros((2, 2))
    w = comp.c3 - comp.c2
    s, s1, s2 = _smoothstep((r - comp.c2) / w)
    xhat = x / r
    outer = np.outer(xhat, xhat)
    grad = comp.c1 * (s1 / w) * xhat
    hess = comp.c1 * (s2 / w**2 * outer + s1 / (w * r) * (np.eye(2) - outer))
    return comp.c4 + comp.c1 * s, grad, hess


def qc_eval_grad_hess(comp: QcComponent, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of min(g, h); ties resolve to g."""
    x = np.asarray(x, dtype=float)
    g, ggrad, ghess = _quad_parts(comp, x)
    h, hgrad, hhess = _circ_parts(comp, x)
    if g <= h:
        return g, ggrad, ghess
    return h, hgrad, hhess


class QcSumsModel(MixtureProblem):
    """A probability-weighted quadratic-circle mixture on the standard box."""

    def __init__(self, components: list[QcComponent], probs, name: str = "qc", seed=None, meta: dict | None = None):
        probs = np.asarray(probs, dtype=float)
        if len(components) != len(probs):
            raise ValueError("components and probs length mismatch")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be positive and sum to 1")
        self.components = list(components)
        self.probs = probs
        self.dim = 2
        self.box = QC_BOX
        self.circ_min = CIRC_MIN.copy()
        self.quad_min = QUAD_MIN.copy()
        self.name = name
        self.seed = seed
        self.meta = dict(meta or {})
        # stacked parameters for the vectorized kernels
        self._q1 = np.array([c.q1 for c in components])
        self._q2 = np.array([c.q2 for c in components])
        self._q3 = np.array([c.q3 for c in components])
        self._c1 = np.array([c.c1 for c in components])
        self._c2 = np.array([c.c2 for c in components])
        self._c3 = np.array([c.c3 for c in components])
        self._c4 = np.array([c.c4 for c in components])
        for label, point in (("circular", self.circ_min), ("quadratic", self.quad_min)):
            gnorm = float(np.linalg.norm(self.expected_gradient(point)))
            if gnorm > STATIONARY_TOL:
                raise ValueError(f"{label} minimizer is not stationary (|grad| = {gnorm:.3e})")

    # per-component oracles -------------------------------------------------
    def component_value(self, i: int, x: np.ndarray) -> float:
        return qc_eval_grad_hess(self.components[i], x)[0]

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return qc_eval_grad_hess(self.components[i], x)[1]

    def component_hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        return qc_eval_grad_hess(self.components[i], x)[2]

    def expected_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.expected_gradient_batch(np.asarray(x, dtype=float)[None, :])[0]

    # vectorized kernels -----------------------------------------------------
    def _gradients_at(self, params_idx: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Component gradients for point rows pts (M, 2) with component ids params_idx (M,)."""
        q1, q2, q3 = self._q1[params_idx], self._q2[params_idx], self._q3[params_idx]
        c1, c2, c3, c4 = (arr[params_idx] for arr in (self._c1, self._c2, self._c3, self._c4))
        x1, x2 = pts[:, 0], pts[:, 1]

        u = x2 - q2 * x1 * x1 - q3
        g = q1 * u * u
        ggrad = np.stack([2.0 * q1 * u * (-2.0 * q2 * x1), 2.0 * q1 * u], axis=1)

        r = np.linalg.norm(pts, axis=1)
        w = c3 - c2
        t = np.clip((r - c2) / w, 0.0, 1.0)
        s = t**3 * (6.0 * t * t - 15.0 * t + 10.0)
        s1 = 30.0 * t * t * (t - 1.0) ** 2
        h = c4 + c1 * s
        mid = (r > c2) & (r < c3)
        coef = np.where(mid, c1 * s1 / w, 0.0)
        safe_r = np.where(r > 0, r, 1.0)
        hgrad = (coef / safe_r)[:, None] * pts

        take_g = (g <= h)[:, None]
        return np.where(take_g, ggrad, hgrad)

    def batch_mean_gradient(self, thetas: np.ndarray, idx: np.ndarray) -> np.ndarray:
        n_runs, k = idx.shape
        pts = np.repeat(thetas, k, axis=0)
        grads = self._gradients_at(idx.reshape(-1), pts)
        return grads.reshape(n_runs, k, 2).mean(axis=1)

    def expected_gradient_batch(self, thetas: np.ndarray) -> np.ndarray:
        out = np.zeros_like(thetas)
        ids = np.empty(len(thetas), dtype=int)
        for i, p in enumerate(self.probs):
            ids.fill(i)
            out += p * self._gradients_at(ids, thetas)
        return out

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "family": "qc",
            "name": self.name,
            "seed": self.seed,
            "meta": self.meta,
            "components": [
                {k: getattr(c, k) for k in ("q1", "q2", "q3", "c1", "c2", "c3", "c4")}
                for c in self.components
            ],
            "probs": self.probs.tolist(),
            "box": [self.box.lower.tolist(), self.box.upper.tolist()],
            "minimizers": {"circ": self.circ_min.tolist(), "quad": self.quad_min.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QcSumsModel":
        comps = [QcComponent(**c) for c in d["components"]]
        return cls(comps, d["probs"], name=d.get("name", "qc"), seed=d.get("seed"), meta=d.get("meta"))


# Generator constants.  The quadratic-basin curvature is 2*q1 along the valley
# normal; the circular-basin curvature scales like c1 / (c3 - c2)^3 near the
# origin, so sharp/flat variants separate cleanly through q1 and c3.
N_COMPONENTS = 5
Q1_SHARP = 0.2
Q1_FLAT = 1.25e-3
C3_SHARP = 1.0
C3_FLAT = 6.0
C2_TINY = 1e-4
C3_SPREAD = 0.5


def generate_qc_models(seed, n_components: int = N_COMPONENTS, sharpness_spread: float = 0.2) -> list[QcSumsModel]:
    """Seeded Models 1-4: (sharp, sharp), (flat, sharp), (sharp, flat), (flat, flat)
    in (quadratic, circular) order.

    All components share q3 = -15 and c4 = 0 so both minimizers are common to
    every component (homogeneous); c2 is tiny so the circular minimum set
    concentrates at the origin.  q2 is fixed at 0: the quadratic basin then has
    an exactly rank-one local Hessian, matching the two-column (k = 1, inf)
    structure of the quadratic-minimum threshold tables.  sharpness_spread is
    the relative half-width of the per-component q1/c1 draws and controls the
    higher-order curvature parameters of the generated mixtures.
    """
    if not 0 < sharpness_spread < 1:
        raise ValueError("sharpness_spread must be in (0, 1)")
    rng = np.random.default_rng(seed)
    variants = [(True, True), (False, True), (True, False), (False, False)]
    models = []
    for idx, (sharp_quad, sharp_circ) in enumerate(variants, start=1):
        q1_base = Q1_SHARP if sharp_quad else Q1_FLAT
        c3_base = C3_SHARP if sharp_circ else C3_FLAT
        lo, hi = 1.0 - sharpness_spread, 1.0 + sharpness_spread
        comps = [
            QcComponent(
                q1=q1_base * rng.uniform(lo, hi),
                q2=0.0,
                q3=-15.0,
                c1=rng.uniform(lo, hi),
                c2=C2_TINY,
                c3=c3_base * rng.uniform(1.0 - C3_SPREAD, 1.0 + C3_SPREAD),
                c4=0.0,
            )
            for _ in range(n_components)
        ]
        probs = np.full(n_components, 1.0 / n_components)
        models.append(
            QcSumsModel(
                comps,
                probs,
                name=f"qc-{idx}",
                seed=seed,
                meta={"sharp_quad": sharp_quad, "sharp_circ": sharp_circ, "spread": sharpness_spread},
            )
        )
    return models
