import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdk import quadratic as qd
from sgdk import sgd
from sgdk.problems import QuadraticMixture
from conftest import make_random_mixture


def f_x2_problem():
    # f(x) = x^2 as a one-component mixture: Q = 2, r = 0
    return qd.StochasticQuadratic(np.array([[[2.0]]]), np.zeros((1, 1)), np.array([1.0]))


class TestStep:
    def test_divergence_example_iterates(self):
        assert sgd.sgd_k_step(np.array([-1.0]), np.array([[-2.0]]), 1.1) == pytest.approx([1.2])
        assert sgd.sgd_k_step(np.array([1.2]), np.array([[2.4]]), 1.1) == pytest.approx([-1.44])

    def test_zero_step(self):
        theta = np.array([3.0, -2.0])
        out = sgd.sgd_k_step(theta, np.array([[1.0, 1.0]]), 0.0)
        assert np.array_equal(out, theta)

    def test_box_projection(self):
        box = sgd.Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        out = sgd.sgd_k_step(np.zeros(2), np.array([[-10.0, 4.0]]), 1.0, box=box)
        assert out == pytest.approx([1.0, -1.0])

    def test_nonfinite_gradient_aborts(self):
        with pytest.raises(FloatingPointError):
            sgd.sgd_k_step(np.zeros(1), np.array([[np.nan]]), 0.1)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            sgd.sgd_k_step(np.zeros(1), np.empty((0, 1)), 0.1)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
    def test_step_is_mean_gradient_update(self, seed, k):
        rng = np.random.default_rng(seed)
        theta = rng.standard_normal(3)
        grads = rng.standard_normal((k, 3))
        c = float(rng.uniform(-1, 1))
        out = sgd.sgd_k_step(theta, grads, c)
        assert np.allclose(out, theta - c * grads.mean(axis=0), atol=1e-14)


class TestSchedule:
    def test_constant(self):
        sch = sgd.StepSchedule("constant", 0.3)
        assert sch.at(1) == sch.at(50) == 0.3

    def test_harmonic(self):
        sch = sgd.StepSchedule("harmonic", 2.0)
        assert sch.at(1) == 2.0
        assert sch.at(4) == 0.5

    def test_invalid(self):
        with pytest.raises(ValueError):
            sgd.StepSchedule("geometric", 0.1)
        with pytest.raises(ValueError):
            sgd.StepSchedule("constant", float("inf"))
        with pytest.raises(ValueError):
            sgd.StepSchedule("harmonic", -1.0)
        with pytest.raises(ValueError):
            sgd.StepSchedule("constant", 1.0).at(0)


class TestRun:
    def test_gd_divergence_distances(self):
        mix = QuadraticMixture(f_x2_problem())
        rec = sgd.run(mix, np.array([-1.0]), sgd.StepSchedule("constant", 1.1), qd.INF, 2, seed=0)
        assert rec.distances == pytest.approx([1.0, 1.2, 1.44])

    def test_gd_half_converges_in_one_step(self):
        mix = QuadraticMixture(f_x2_problem())
        rec = sgd.run(mix, np.array([-1.0]), sgd.StepSchedule("constant", 0.5), qd.INF, 3, seed=0)
        assert rec.distances[1] == 0.0

    def test_zero_step_freezes(self, rng):
        prob = make_random_mixture(rng, p=2, n=3)
        mix = QuadraticMixture(prob)
        rec = sgd.run(mix, np.array([1.0, -1.0]), sgd.StepSchedule("constant", 0.0), 2, 5, seed=1)
        assert np.all(rec.iterates == rec.iterates[0])

    def test_bit_identical_given_seed(self, rng):
        prob = make_random_mixture(rng, p=3, n=4)
        mix = QuadraticMixture(prob)
        kwargs = dict(theta0=np.ones(3), schedule=sgd.StepSchedule("constant", 0.05), k=2, n_steps=25, seed=99)
        a = sgd.run(mix, **kwargs)
        b = sgd.run(mix, **kwargs)
        assert np.array_equal(a.iterates, b.iterates)
        assert np.array_equal(a.distances, b.distances)
        assert a.factors == b.factors

    def test_k_inf_matches_closed_form(self, rng):
        prob = make_random_mixture(rng, p=3, n=3, homogeneous=False)
        geom = qd.expected_geometry(prob)
        mix = QuadraticMixture(prob)
        c = 0.1
        rec = sgd.run(mix, np.ones(3), sgd.StepSchedule("constant", c), qd.INF, 10, seed=0, geometry=geom)
        theta = np.ones(3)
        for i in range(10):
            theta = (np.eye(3) - c * geom.eq) @ (theta - geom.theta_star) + geom.theta_star
            assert np.allclose(rec.iterates[i + 1], theta, atol=1e-12)

    def test_errors_recorded_with_geometry(self, rng):
        prob = make_random_mixture(rng, p=2, n=2)
        geom = qd.expected_geometry(prob)
        mix = QuadraticMixture(prob)
        rec = sgd.run(mix, np.ones(2), sgd.StepSchedule("constant", 0.01), 1, 5, seed=3, geometry=geom)
        expect = [geom.error_of(t) for t in rec.iterates]
        assert rec.errors == pytest.approx(expect)

    def test_oracle_failure_carries_iteration(self):
        class Broken:
            probs = np.array([1.0])

            def component_gradient(self, i, theta):
                raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="iteration 1"):
            sgd.run(Broken(), np.zeros(1), sgd.StepSchedule("constant", 0.1), 1, 3, seed=0)

    def test_homogeneous_contraction_single_steps(self, rng):
        # mean one-step error ratio below conv_ub is < 1, above div_lb is > 1
        prob = qd.StochasticQuadratic(np.array([[[1.0]], [[3.0]]]), np.zeros((2, 1)), np.array([0.5, 0.5]))
        qs = rng.choice([1.0, 3.0], size=10_000)
        for c, side in ((0.72, -1), (0.88, +1)):
            ratios = (1.0 - c * qs) ** 2
            assert (float(ratios.mean()) - 1.0) * side > 0


class TestRecursionOracle:
    def test_scalar_homogeneous(self):
        prob = qd.StochasticQuadratic(np.array([[[1.0]], [[3.0]]]), np.zeros((2, 1)), np.array([0.5, 0.5]))
        geom = qd.expected_geometry(prob)
        formula, enum = sgd.recursion_oracle(prob, geom, np.array([1.0]), 0.5, 1)
        assert abs(formula - enum) <= 1e-12

    def test_homogeneous_reduction(self):
        # cross and variance terms vanish: formula equals the four-term display
        prob = qd.StochasticQuadratic(np.array([[[1.0]], [[3.0]]]), np.zeros((2, 1)), np.array([0.5, 0.5]))
        geom = qd.expected_geometry(prob)
        theta, c, k = np.array([0.7]), 0.4, 2
        formula, _ = sgd.recursion_oracle(prob, geom, theta, c, k)
        d = theta - geom.theta_star
        e1 = float(d @ geom.eq @ d)
        e2 = float(d @ geom.eq @ geom.eq @ d)
        e3 = float(d @ np.linalg.matrix_power(geom.eq, 3) @ d)
        em = float(d @ geom.big_m @ d)
        assert formula == pytest.approx(e1 - 2 * c * e2 + c * c * e3 + c * c / k * em, abs=1e-14)

    def test_inhomogeneous_pair(self):
        prob = qd.StochasticQuadratic(np.array([[[1.0]], [[3.0]]]), np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]))
        geom = qd.expected_geometry(prob)
        formula, enum = sgd.recursion_oracle(prob, geom, np.array([0.3]), 0.2, 2)
        assert abs(formula - enum) <= 1e-12

    def test_random_tuples(self, rng):
        for _ in range(25):
            prob = make_random_mixture(rng, p=int(rng.integers(1, 4)), n=int(rng.integers(2, 5)), homogeneous=False)
            geom = qd.expected_geometry(prob)
            theta = rng.standard_normal(prob.dim)
            c = float(rng.uniform(0.05, 1.0))
            k = int(rng.integers(1, 4))
            formula, enum = sgd.recursion_oracle(prob, geom, theta, c, k)
            assert abs(formula - enum) <= 1e-12 * (1.0 + abs(enum))

    def test_budget_exceeded(self):
        n = 101
        qs = np.ones((n, 1, 1))
        prob = qd.StochasticQuadratic(qs, np.zeros((n, 1)), np.full(n, 1.0 / n))
        geom = qd.expected_geometry(prob)
        with pytest.raises(ValueError, match="budget"):
            sgd.recursion_oracle(prob, geom, np.ones(1), 0.1, 3)


class TestFitRate:
    def test_gd_rate_exact(self):
        mix = QuadraticMixture(f_x2_problem())
        rec = sgd.run(mix, np.array([-1.0]), sgd.StepSchedule("constant", 1.1), qd.INF, 12, seed=0)
        rate, r2 = sgd.fit_divergence_rate(rec)
        assert rate == pytest.approx(1.2, abs=1e-9)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_zero_distance_window_rejected(self):
        mix = QuadraticMixture(f_x2_problem())
        rec = sgd.run(mix, np.array([-1.0]), sgd.StepSchedule("constant", 0.5), qd.INF, 5, seed=0)
        with pytest.raises(ValueError, match="nonpositive"):
            sgd.fit_divergence_rate(rec)

    def test_constant_trajectory_rate_one(self):
        rate, r2 = sgd.fit_divergence_rate(np.full(10, 2.5))
        assert rate == pytest.approx(1.0)
        assert r2 == 1.0

    def test_explicit_window(self):
        dists = np.concatenate([np.full(5, 1.0), 2.0 ** np.arange(10)])
        rate, _ = sgd.fit_divergence_rate(dists, window=(5, 15))
        assert rate == pytest.approx(2.0)

    def test_window_too_short(self):
        with pytest.raises(ValueError, match="two iterations"):
            sgd.fit_divergence_rate(np.array([1.0, 2.0, 4.0]), window=(1, 2))


class TestBoxAndRecord:
    def test_box_validation(self):
        with pytest.raises(ValueError):
            sgd.Box(np.array([1.0]), np.array([0.0]))

    def test_record_validation(self):
        with pytest.raises(ValueError):
            sgd.RunRecord(factors={}, iterates=np.zeros((3, 1)), distances=np.zeros(2))
        with pytest.raises(ValueError):
            sgd.RunRecord(factors={}, iterates=np.zeros((2, 1)), distances=np.array([1.0, -1.0]))
