"""Shared mixture-of-components interface used by the SGD runner and the
ball-averaged local geometry."""

from __future__ import annotations

import numpy as np

from ..quadratic import StochasticQuadratic


class MixtureProblem:
    """A finite mixture of smooth components with analytic derivatives.

    Subclasses must set probs (shape (n,)) and dim, and implement the
    per-component value/gradient/hessian.  Vectorized batch kernels have
    generic fallbacks; performance-critical models override them.
    """

    probs: np.ndarray
    dim: int

    # per-component oracles -------------------------------------------------
    def component_value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # mixture expectations --------------------------------------------------
    def expected_value(self, x: np.ndarray) -> float:
        return float(sum(p * self.component_value(i, x) for i, p in enumerate(self.probs)))

    def expected_gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i, p in enumerate(self.probs):
            g += p * np.asarray(self.component_gradient(i, x), dtype=float)
        return g

    def expected_hessian(self, x: np.ndarray) -> np.ndarray:
        h = np.zeros((self.dim, self.dim))
        for i, p in enumerate(self.probs):
            h += p * np.asarray(self.component_hessian(i, x), dtype=float)
        return h

    def component_hessians(self, x: np.ndarray) -> np.ndarray:
        """(n, p, p) stack of all component Hessians at x."""
        return np.stack([self.component_hessian(i, x) for i in range(len(self.probs))])

    def hessian_diagonals(self, x: np.ndarray):
        """(n, p) diagonals when every component Hessian is diagonal, else None."""
        return None

    # vectorized kernels for the experiment harness -------------------------
    def batch_mean_gradient(self, thetas: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Mean sampled gradient per run: thetas (R, p), idx (R, k) -> (R, p)."""
        out = np.empty_like(thetas)
        for r in range(thetas.shape[0]):
            g = np.zeros(self.dim)
            for i in idx[r]:
                g += np.asarray(self.component_gradient(int(i), thetas[r]), dtype=float)
            out[r] = g / idx.shape[1]
        return out

    def expected_gradient_batch(self, thetas: np.ndarray) -> np.ndarray:
        return np.stack([self.expected_gradient(t) for t in thetas])


class QuadraticMixture(MixtureProblem):
    """Adapter exposing a StochasticQuadratic through the mixture interface.

    Component i is f_i(x) = 0.5 x'Q_i x + r_i'x with gradient Q_i x + r_i and
    constant Hessian Q_i.
    """

    def __init__(self, problem: StochasticQuadratic):
        self.problem = problem
        self.probs = problem.probs
        self.dim = problem.dim

    def component_value(self, i: int, x: np.ndarray) -> float:
        q, r = self.problem.component(i)
        return float(0.5 * x @ q @ x + r @ x)

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        q, r = self.problem.component(i)
        return q @ x + r

    def component_hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.problem.qs[i]

    def component_hessians(self, x: np.ndarray) -> np.ndarray:
        return self.problem.qs

    def expected_gradient(self, x: np.ndarray) -> np.ndarray:
        eq = np.einsum("i,ijk->jk", self.probs, self.problem.qs)
        return eq @ x + self.probs @ self.problem.rs

    def batch_mean_gradient(self, thetas: np.ndarray, idx: np.ndarray) -> np.ndarray:
        grads = np.einsum("rkij,rj->rki", self.problem.qs[idx], thetas) + self.problem.rs[idx]
        return grads.mean(axis=1)
