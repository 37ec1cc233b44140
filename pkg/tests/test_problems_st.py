from itertools import islice

import numpy as np
import pytest

from sgdk.problems import StComponent, StSumsModel, generate_st_models, st_eval_grad_hess, st_minimizers
from sgdk.problems.st import CURV_VAR_RATIO


def single_model(c1, c2, c3, p=1):
    coeffs = np.tile(np.array([c1, c2, c3], dtype=float), (p, 1))
    return StSumsModel(coeffs[None, :, :], np.array([1.0]))


class TestEval:
    def test_example_values(self):
        value, grad, hess = st_eval_grad_hess(np.array([[1.0, -2.0, 1.0]]), np.zeros(1))
        assert value == 0.0
        assert grad == pytest.approx([0.5])
        assert hess[0, 0] == pytest.approx(-2.0)

    def test_stationary_origin_without_linear_term(self):
        _, grad, _ = st_eval_grad_hess(np.array([[1.0, -2.0, 0.0]]), np.zeros(1))
        assert grad == pytest.approx([0.0])

    def test_component_type_validation(self):
        with pytest.raises(ValueError):
            StComponent(np.array([[0.0, -1.0, 0.0]]))
        with pytest.raises(ValueError):
            StComponent(np.array([[1.0, 0.5, 0.0]]))
        with pytest.raises(ValueError):
            StComponent(np.array([[1.0, -1.0, -0.2]]))

    def test_separable_value(self):
        coeffs = np.array([[1.0, -4.0, 2.0], [0.5, -2.0, 0.0]])
        x = np.array([1.5, -2.0])
        value, _, _ = st_eval_grad_hess(coeffs, x)
        per = [0.5 * (c[0] * xi**4 + c[1] * xi**2 + c[2] * xi) for c, xi in zip(coeffs, x)]
        assert value == pytest.approx(sum(per))


def grid_minima_1d(c1, c2, c3):
    """Independent oracle: fine grid search + one parabolic refinement."""
    xs = np.linspace(-5, 5, 1_000_001)
    vals = 0.5 * (c1 * xs**4 + c2 * xs**2 + c3 * xs)
    idx = np.nonzero((vals[1:-1] < vals[:-2]) & (vals[1:-1] <= vals[2:]))[0] + 1
    out = []
    for i in idx:
        a, b, c = vals[i - 1], vals[i], vals[i + 1]
        shift = 0.5 * (a - c) / (a - 2 * b + c)
        out.append(xs[i] + shift * (xs[1] - xs[0]))
    return np.array(out)


class TestMinimizers:
    def test_classic_coefficients_global_minimizer(self):
        cat = st_minimizers(np.array([[1.0, -16.0, 5.0]]))
        grid = grid_minima_1d(1.0, -16.0, 5.0)
        # the classic sharp minimizer sits near -2.9035
        assert cat.sharpest[0] == pytest.approx(-2.9035, abs=5e-4)
        assert sorted(cat.minima[0]) == pytest.approx(sorted(grid), abs=1e-6)

    def test_tie_broken_toward_negative_root(self):
        cat = st_minimizers(np.array([[1.0, -2.0, 0.0]]))
        assert sorted(cat.minima[0]) == pytest.approx([-1.0, 1.0])
        assert cat.curvatures[0] == pytest.approx([4.0, 4.0])
        assert cat.flattest[0] == pytest.approx(-1.0)
        assert cat.sharpest[0] == pytest.approx(-1.0)

    def test_p2_catalog_matches_grid(self):
        mean = np.array([[1.0, -16.0, 5.0], [1.0, -16.0, 5.0]])
        cat = st_minimizers(mean)
        assert cat.count == 4
        minimizers = list(cat.enumerate())
        assert len(minimizers) == 4
        grid = grid_minima_1d(1.0, -16.0, 5.0)
        expected = {(a, b) for a in np.round(grid, 6) for b in np.round(grid, 6)}
        got = {tuple(np.round(m, 6)) for m in minimizers}
        assert got == expected

    def test_degenerate_cubic_rejected(self):
        # no negative quadratic term: single minimum per coordinate
        with pytest.raises(ValueError, match="two distinct minima"):
            st_minimizers(np.array([[1.0, 0.0, 1.0]]))

    def test_lazy_enumeration_1024(self):
        model = generate_st_models(777)[0]
        cat = model.catalog
        assert cat.count == 1024
        first = list(islice(cat.enumerate(), 3))
        assert np.allclose(first[0], cat.minima[:, 0])
        assert first[1][-1] == cat.minima[-1, 1]


class TestModel:
    def test_expected_hessian_exactly_diagonal(self):
        model = generate_st_models(777)[0]
        x = model.catalog.flattest
        h = model.expected_hessian(x)
        assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
        evals = np.sort(np.linalg.eigvalsh(h))
        assert np.allclose(evals, np.sort(np.diag(h)))

    def test_hessian_diagonals_consistent(self):
        model = generate_st_models(777)[0]
        x = np.linspace(-2, 2, model.dim)
        diags = model.hessian_diagonals(x)
        for i in (0, 7, 100):
            assert np.allclose(diags[i], np.diag(model.component_hessian(i, x)))

    def test_batch_mean_gradient_paths_agree(self):
        rng = np.random.default_rng(6)
        model = generate_st_models(777)[0]
        thetas = rng.uniform(-3, 3, size=(5, model.dim))
        for k in (1, 3, 600):
            idx = rng.integers(0, model.n_components, size=(5, k))
            fast = model.batch_mean_gradient(thetas, idx)
            slow = np.stack(
                [np.mean([model.component_gradient(int(i), thetas[r]) for i in idx[r]], axis=0) for r in range(5)]
            )
            assert np.allclose(fast, slow, atol=1e-10)

    def test_expected_gradient_is_mixture_mean(self):
        model = generate_st_models(777)[0]
        x = np.linspace(-1, 1, model.dim)
        manual = np.zeros(model.dim)
        for i, p in enumerate(model.probs):
            manual += p * model.component_gradient(i, x)
        assert np.allclose(model.expected_gradient(x), manual, atol=1e-12)


class TestGenerator:
    def test_model_specs(self):
        models = generate_st_models(777)
        assert [(m.dim, m.n_components) for m in models] == [(10, 200), (50, 1000), (100, 2000)]
        assert models[0].catalog.count == 2**10

    def test_determinism(self):
        a = generate_st_models(42)[0]
        b = generate_st_models(42)[0]
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_sign_constraints(self):
        for model in generate_st_models(13):
            assert np.all(model.coeffs[:, :, 0] > 0)
            assert np.all(model.coeffs[:, :, 1] <= 0)
            assert np.all(model.coeffs[:, :, 2] >= 0)

    def test_minimizers_inside_box(self):
        for model in generate_st_models(13):
            assert np.all(np.abs(model.catalog.minima) < 5.0)

    def test_inhomogeneous_at_flattest(self):
        model = generate_st_models(13)[0]
        flat = model.catalog.flattest
        norms = [np.linalg.norm(model.component_gradient(i, flat)) for i in range(model.n_components)]
        assert max(norms) > 1e-3
        # mean gradient still vanishes: the minimizer is stationary in expectation
        assert np.linalg.norm(model.expected_gradient(flat)) < 1e-10

    def test_curvature_variance_near_target(self):
        model = generate_st_models(777)[0]
        flat = model.catalog.flattest
        diags = model.hessian_diagonals(flat)
        mean = model.probs @ diags
        var = model.probs @ diags**2 - mean**2
        ratio = var / mean**2
        assert np.all(ratio < 2 * CURV_VAR_RATIO)
        assert np.median(ratio) > 0.2 * CURV_VAR_RATIO

    def test_json_round_trip(self):
        model = generate_st_models(42)[0]
        d = model.to_dict()
        assert set(d) >= {"family", "seed", "components", "probs", "box", "minimizers"}
        back = StSumsModel.from_dict(d)
        assert np.allclose(back.coeffs, model.coeffs)
        assert np.allclose(back.catalog.flattest, model.catalog.flattest)
