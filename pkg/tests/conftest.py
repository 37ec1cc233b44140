import numpy as np
import pytest

from sgdk import quadratic as qd


def make_random_mixture(rng, p=2, n=3, degenerate=False, homogeneous=True):
    """Random PSD mixture; degenerate repeats a single matrix."""
    base = rng.standard_normal((p, p))
    base = base @ base.T + 0.1 * np.eye(p)
    qs = np.empty((n, p, p))
    rs = np.zeros((n, p))
    for i in range(n):
        if degenerate:
            qs[i] = base
        else:
            a = rng.standard_normal((p, p))
            qs[i] = rng.uniform(0.5, 1.5) * base + a @ a.T
        if not homogeneous:
            rs[i] = qs[i] @ rng.standard_normal(p)
    probs = rng.uniform(0.2, 1.0, size=n)
    probs /= probs.sum()
    return qd.StochasticQuadratic(qs, rs, probs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)
