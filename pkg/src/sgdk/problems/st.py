"""Styblinski-Tang sums: separable quartic mixtures with 2^p minimizers.

Each component is

    f(x) = 0.5 * sum_i  c_{i,1} x_i^4 + c_{i,2} x_i^2 + c_{i,3} x_i

with c_{i,1} > 0, c_{i,2} <= 0, c_{i,3} >= 0, restricted to the box (-5,5)^p.
The expected objective is separable: each coordinate is a double well whose
two minima are roots of the expected cubic 2 c1 x^3 + c2 x + c3/2 = 0 with
positive curvature 6 c1 x^2 + c2.  Full minimizers are Cartesian products of
per-coordinate minima (2^p of them, enumerated lazily); the flattest and
sharpest are built by picking the smaller- or larger-curvature root per
coordinate, valid because the expected Hessian is diagonal.

Generated models are inhomogeneous: component coefficients deviate from the
expected ones, so no single point minimizes every realization.  Deviations are
drawn along the per-coordinate direction that leaves the component gradients
at both expected minimizers unchanged (so the minimizers stay near-stationary
for each realization and the gradient noise at the minimizer stays small)
plus a small isotropic jitter that makes the inhomogeneity strict.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..sgd import Box
from .base import MixtureProblem

__all__ = ["StComponent", "StSumsModel", "StMinimizerCatalog", "st_eval_grad_hess", "st_minimizers", "generate_st_models"]


def _check_coeffs(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 2 or coeffs.shape[1] != 3:
        raise ValueError(f"coeffs must have shape (p, 3), got {coeffs.shape}")
    if np.any(coeffs[:, 0] <= 0):
        raise ValueError("quartic coefficients c1 must be strictly positive")
    if np.any(coeffs[:, 1] > 0):
        raise ValueError("quadratic coefficients c2 must be nonpositive")
    if np.any(coeffs[:, 2] < 0):
        raise ValueError("linear coefficients c3 must be nonnegative")
    return coeffs


@dataclass(frozen=True, eq=False)
class StComponent:
    """One Styblinski-Tang component: a (p, 3) array of (c1, c2, c3) rows."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs))

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]


def st_eval_grad_hess(comp, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and (diagonal) Hessian of one component at x."""
    coeffs = comp.coeffs if isinstance(comp, StComponent) else _check_coeffs(comp)
    x = np.asarray(x, dtype=float)
    c1, c2, c3 = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    value = 0.5 * float(np.sum(c1 * x**4 + c2 * x**2 + c3 * x))
    grad = 2.0 * c1 * x**3 + c2 * x + 0.5 * c3
    hess = np.diag(6.0 * c1 * x**2 + c2)
    return value, grad, hess


@dataclass(frozen=True, eq=False)
class StMinimizerCatalog:
    """Per-coordinate minima of the expected objective and the two extremes.

    minima[j] holds the coordinate-j minima sorted ascending (negative root
    first); curvatures[j] the matching expected curvatures.  flattest/sharpest
    pick the smaller/larger-curvature root per coordinate, ties toward the
    negative root.
    """

    minima: np.ndarray
    curvatures: np.ndarray
    flattest: np.ndarray
    sharpest: np.ndarray

    @property
    def count(self) -> int:
        return 2 ** self.minima.shape[0]

    def enumerate(self):
        """Lazily yield all 2^p minimizers as arrays."""
        for combo in product((0, 1), repeat=self.minima.shape[0]):
            yield self.minima[np.arange(len(combo)), list(combo)]

    def to_dict(self) -> dict:
        return {
            "coordinate_minima": self.minima.tolist(),
            "coordinate_curvatures": self.curvatures.tolist(),
            "flattest": self.flattest.tolist(),
            "sharpest": self.sharpest.tolist(),
            "count": self.count,
        }


CURVATURE_TIE_TOL = 1e-12


def st_minimizers(mean_coeffs: np.ndarray) -> StMinimizerCatalog:
    """Catalog the minima of the separable expected objective.

    Solves the per-coordinate cubic 2 c1 x^3 + c2 x + c3/2 = 0 and keeps the
    roots with positive expected curvature.  Each coordinate must contribute
    exactly two distinct minima, otherwise the model is degenerate.
    """
    mean_coeffs = np.asarray(mean_coeffs, dtype=float)
    p = mean_coeffs.shape[0]
    minima = np.empty((p, 2))
    curvs = np.empty((p, 2))
    flat_idx = np.empty(p, dtype=int)
    sharp_idx = np.empty(p, dtype=int)
    for j in range(p):
        c1, c2, c3 = mean_coeffs[j]
        roots = np.roots([2.0 * c1, 0.0, c2, 0.5 * c3])
        real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
        # polish with a Newton step on the cubic
        for _ in range(3):
            real = real - (2 * c1 * real**3 + c2 * real + 0.5 * c3) / (6 * c1 * real**2 + c2)
        curv = 6.0 * c1 * real**2 + c2
        mins = np.sort(real[curv > 0])
        if len(mins) != 2 or mins[1] - mins[0] < 1e-9:
            raise ValueError(f"coordinate {j}: expected cubic lacks two distinct minima")
        minima[j] = mins
        curvs[j] = 6.0 * c1 * mins**2 + c2
        if abs(curvs[j, 0] - curvs[j, 1]) <= CURVATURE_TIE_TOL * max(1.0, abs(curvs[j, 0])):
            flat_idx[j] = sharp_idx[j] = 0
        else:
            flat_idx[j] = int(np.argmin(curvs[j]))
            sharp_idx[j] = int(np.argmax(curvs[j]))
    rows = np.arange(p)
    return StMinimizerCatalog(
        minima=minima,
        curvatures=curvs,
        flattest=minima[rows, flat_idx],
        sharpest=minima[rows, sharp_idx],
    )


class StSumsModel(MixtureProblem):
    """A probability-weighted Styblinski-Tang mixture on (-5,5)^p."""

    def __init__(self, coeffs: np.ndarray, probs, name: str = "st", seed=None, meta: dict | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[2] != 3:
            raise ValueError(f"coeffs must have shape (n, p, 3), got {coeffs.shape}")
        probs = np.asarray(probs, dtype=float)
        if len(probs) != coeffs.shape[0] or np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be positive, sum to 1, and match coeffs")
        for i in range(coeffs.shape[0]):
            _check_coeffs(coeffs[i])
        self.coeffs = coeffs
        self.probs = probs
        self.dim = coeffs.shape[1]
        self.box = Box(np.full(self.dim, -5.0), np.full(self.dim, 5.0))
        self.name = name
        self.seed = seed
        self.meta = dict(meta or {})
        self.mean_coeffs = np.einsum("i,ijk->jk", probs, coeffs)
        self._catalog: StMinimizerCatalog | None = None

    @property
    def n_components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def catalog(self) -> StMinimizerCatalog:
        if self._catalog is None:
            self._catalog = st_minimizers(self.mean_coeffs)
        return self._catalog

    # per-component oracles -------------------------------------------------
    def component_value(self, i: int, x: np.ndarray) -> float:
        return st_eval_grad_hess(self.coeffs[i], x)[0]

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        c = self.coeffs[i]
        x = np.asarray(x, dtype=float)
        return 2.0 * c[:, 0] * x**3 + c[:, 1] * x + 0.5 * c[:, 2]

    def component_hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        c = self.coeffs[i]
        return np.diag(6.0 * c[:, 0] * np.asarray(x, dtype=float) ** 2 + c[:, 1])

    def hessian_diagonals(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 6.0 * self.coeffs[:, :, 0] * x[None, :] ** 2 + self.coeffs[:, :, 1]

    def expected_gradient(self, x: np.ndarray) -> np.ndarray:
        c = self.mean_coeffs
        x = np.asarray(x, dtype=float)
        return 2.0 * c[:, 0] * x**3 + c[:, 1] * x + 0.5 * c[:, 2]

    def expected_hessian(self, x: np.ndarray) -> np.ndarray:
        c = self.mean_coeffs
        return np.diag(6.0 * c[:, 0] * np.asarray(x, dtype=float) ** 2 + c[:, 1])

    # vectorized kernels ------------------------------------------------------
    def batch_mean_gradient(self, thetas: np.ndarray, idx: np.ndarray) -> np.ndarray:
        n_runs, k = idx.shape
        n, p = self.n_components, self.dim
        if k == 1:
            mc = self.coeffs[idx[:, 0]]
        elif n_runs * k * p * 3 <= 4_000_000:
            mc = self.coeffs[idx].mean(axis=1)
        else:
            counts = np.zeros((n_runs, n))
            rows = np.repeat(np.arange(n_runs), k)
            np.add.at(counts, (rows, idx.reshape(-1)), 1.0)
            mc = (counts @ self.coeffs.reshape(n, -1)).reshape(n_runs, p, 3) / k
        return 2.0 * mc[:, :, 0] * thetas**3 + mc[:, :, 1] * thetas + 0.5 * mc[:, :, 2]

    def expected_gradient_batch(self, thetas: np.ndarray) -> np.ndarray:
        c = self.mean_coeffs
        return 2.0 * c[None, :, 0] * thetas**3 + c[None, :, 1] * thetas + 0.5 * c[None, :, 2]

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "family": "st",
            "name": self.name,
            "seed": self.seed,
            "meta": self.meta,
            "dim": self.dim,
            "components": [self.coeffs[i].tolist() for i in range(self.n_components)],
            "probs": self.probs.tolist(),
            "box": [self.box.lower.tolist(), self.box.upper.tolist()],
            "minimizers": self.catalog.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StSumsModel":
        coeffs = np.array(d["components"], dtype=float)
        return cls(coeffs, d["probs"], name=d.get("name", "st"), seed=d.get("seed"), meta=d.get("meta"))


# Generator constants.  CURV_VAR_RATIO is the target ratio of the component
# curvature variance to the squared expected curvature at the flattest minima;
# it sets the higher-order curvature parameters of the generated mixtures and
# is kept small enough that single-sample steps stay well-conditioned.
MODEL_SPECS = (("st-1", 10, 200), ("st-2", 50, 1000), ("st-3", 100, 2000))
CURV_VAR_RATIO = 0.025
GRADIENT_JITTER = 1e-4
MAX_RETRIES = 50


def _coordinate_deviation_direction(x_flat: float, x_sharp: float) -> np.ndarray:
    """Unit coefficient direction leaving gradients at both minima unchanged.

    The component gradient at x is linear in (c1, c2, c3) with row
    (2 x^3, x, 1/2); the cross product of the rows at the two minima spans
    their common null space.
    """
    row_s = np.array([2.0 * x_sharp**3, x_sharp, 0.5])
    row_f = np.array([2.0 * x_flat**3, x_flat, 0.5])
    v = np.cross(row_s, row_f)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ValueError("degenerate minimizer pair")
    return v / norm


def generate_st_models(seed) -> list[StSumsModel]:
    """Seeded Models 1-3 with (dim, components) = (10, 200), (50, 1000), (100, 2000).

    Coefficients are drawn per coordinate per component around expected values
    near the classic (1, -15, 3.5); mixture weights are uniform.  The
    minimizers of the expected objective are inhomogeneous, asserted at
    generation.
    """
    rng = np.random.default_rng(seed)
    models = []
    for name, p, n in MODEL_SPECS:
        coeffs = None
        for _ in range(MAX_RETRIES):
            try:
                coeffs = _draw_coefficients(rng, p, n)
                break
            except ValueError:
                continue
        if coeffs is None:
            raise RuntimeError(f"could not draw a nondegenerate coefficient set for {name}")
        model = StSumsModel(coeffs, np.full(n, 1.0 / n), name=name, seed=seed, meta={"curv_var_ratio": CURV_VAR_RATIO})
        cat = model.catalog
        if np.any(np.abs(cat.minima) >= 5.0):
            raise RuntimeError(f"{name}: cataloged minimizer outside the box")
        grad_norms = [np.linalg.norm(model.component_gradient(i, cat.flattest)) for i in range(n)]
        if max(grad_norms) <= 1e-3:
            raise RuntimeError(f"{name}: generated model is not inhomogeneous at the flattest minimizer")
        models.append(model)
    return models


def _draw_coefficients(rng: np.random.Generator, p: int, n: int) -> np.ndarray:
    coeffs = np.empty((n, p, 3))
    for j in range(p):
        c_mean = np.array([rng.uniform(0.95, 1.05), rng.uniform(-15.5, -14.5), rng.uniform(3.0, 4.0)])
        cat = st_minimizers(c_mean[None, :])
        x_flat, x_sharp = float(cat.flattest[0]), float(cat.sharpest[0])
        curv_flat = float(np.min(cat.curvatures[0]))
        v = _coordinate_deviation_direction(x_flat, x_sharp)
        a_flat = abs(6.0 * x_flat**2 * v[0] + v[1])
        t_max = np.sqrt(3.0 * CURV_VAR_RATIO) * curv_flat / a_flat
        # keep every coefficient on the right side of its sign constraint
        for c_val, v_val in zip(np.abs(c_mean), v):
            if abs(v_val) > 1e-12:
                t_max = min(t_max, 0.85 * c_val / abs(v_val))
        t = rng.uniform(-t_max, t_max, size=n)
        t -= t.mean()
        w = rng.uniform(-GRADIENT_JITTER, GRADIENT_JITTER, size=(n, 3))
        w -= w.mean(axis=0)
        coeffs[:, j, :] = c_mean[None, :] + t[:, None] * v[None, :] + w
    # sign constraints must hold strictly after jitter
    if np.any(coeffs[:, :, 0] <= 0) or np.any(coeffs[:, :, 1] > 0) or np.any(coeffs[:, :, 2] < 0):
        raise ValueError("sign constraint violated; redraw")
    return coeffs
