import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdk import mechanism as mech
from sgdk import quadratic as qd
from sgdk.problems import QuadraticMixture
from sgdk.problems.st import StSumsModel
from conftest import make_random_mixture


def scalar_two_mixture():
    prob = qd.StochasticQuadratic(np.array([[[1.0]], [[3.0]]]), np.zeros((2, 1)), np.array([0.5, 0.5]))
    return prob, QuadraticMixture(prob)


class TestSampleBall:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 6))
    def test_containment(self, seed, p):
        center = np.arange(p, dtype=float)
        pts = mech.sample_ball(center, 0.3, 500, seed)
        assert np.all(np.linalg.norm(pts - center, axis=1) <= 0.3 + 1e-12)

    def test_p1_uniform_ks(self):
        # offsets in 1-d are uniform on [-eps, eps]
        eps, n = 0.5, 10_000
        pts = mech.sample_ball(np.zeros(1), eps, n, seed=11)
        x = np.sort(pts[:, 0])
        cdf = (x + eps) / (2 * eps)
        ecdf_hi = np.arange(1, n + 1) / n
        ecdf_lo = np.arange(0, n) / n
        ks = max(np.max(np.abs(ecdf_hi - cdf)), np.max(np.abs(cdf - ecdf_lo)))
        assert ks < 0.05

    def test_mean_near_center(self):
        eps, n = 0.2, 5000
        center = np.array([1.0, -2.0, 0.5])
        pts = mech.sample_ball(center, eps, n, seed=3)
        assert np.all(np.abs(pts.mean(axis=0) - center) <= 4 * eps / np.sqrt(n))

    def test_validation(self):
        with pytest.raises(ValueError):
            mech.sample_ball(np.zeros(2), 0.0, 10, 0)
        with pytest.raises(ValueError):
            mech.sample_ball(np.zeros(2), 1.0, 0, 0)

    def test_generator_passthrough(self):
        rng = np.random.default_rng(5)
        a = mech.sample_ball(np.zeros(2), 1.0, 10, rng)
        b = mech.sample_ball(np.zeros(2), 1.0, 10, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestLocalGeometry:
    def test_deterministic_mixture_zero_curvature_params(self, rng):
        prob = make_random_mixture(rng, p=2, n=1)
        geom = mech.local_geometry(QuadraticMixture(prob), np.zeros(2), 0.05, 200, seed=1)
        assert geom.s_f <= 1e-10
        assert geom.t_f <= 1e-10

    def test_two_quadratics_match_quadratic_module(self):
        prob, mix = scalar_two_mixture()
        geom = mech.local_geometry(mix, np.zeros(1), 0.02, 100, seed=1)
        # theta-independent geometry: exact equality, no Monte Carlo error
        assert geom.lambdas == pytest.approx([2.0])
        assert geom.s_f == pytest.approx(1.0)
        assert geom.t_f == pytest.approx(1.0)
        rep = mech.mechanism_thresholds(geom, 1)
        ref = qd.homogeneous_thresholds(qd.expected_geometry(prob), 1)
        assert rep.div_lb == pytest.approx(ref.div_lb)
        assert rep.div_lb == pytest.approx(0.8)

    def test_epsilon_to_zero_recovers_center_hessian(self):
        coeffs = np.stack([np.full(3, 1.0), np.full(3, -2.0), np.array([0.5, 1.0, 1.5])], axis=1)
        model = StSumsModel(coeffs[None, :, :], np.array([1.0]))
        center = np.array([1.5, 1.7, 1.9])
        geom = mech.local_geometry(model, center, 1e-6, 500, seed=2)
        direct = np.sort(np.diag(model.expected_hessian(center)))[::-1]
        assert np.allclose(geom.lambdas, direct, atol=1e-4)

    def test_seed_determinism(self, rng):
        prob = make_random_mixture(rng, p=3, n=3)
        mix = QuadraticMixture(prob)
        a = mech.local_geometry(mix, np.zeros(3), 0.1, 300, seed=42)
        b = mech.local_geometry(mix, np.zeros(3), 0.1, 300, seed=42)
        assert np.array_equal(a.avg_hessian, b.avg_hessian)
        assert a.s_f == b.s_f and a.t_f == b.t_f

    def test_s_le_t_nonnegative(self, rng):
        for _ in range(20):
            prob = make_random_mixture(rng, p=int(rng.integers(1, 4)), n=int(rng.integers(2, 4)))
            geom = mech.local_geometry(QuadraticMixture(prob), np.zeros(prob.dim), 0.05, 100, seed=0)
            assert 0.0 <= geom.s_f <= geom.t_f + 1e-15

    def test_diagonal_and_dense_paths_agree(self):
        # ST mixtures have diagonal Hessians; strip the fast path and compare
        rng = np.random.default_rng(8)
        n, p = 4, 3
        coeffs = np.stack(
            [rng.uniform(0.8, 1.2, (n, p)), -rng.uniform(10, 16, (n, p)), rng.uniform(1, 4, (n, p))], axis=2
        )
        model = StSumsModel(coeffs, np.full(n, 0.25))
        center = model.catalog.flattest

        class Dense(StSumsModel):
            def hessian_diagonals(self, x):
                return None

        dense_model = Dense(coeffs, np.full(n, 0.25))
        fast = mech.local_geometry(model, center, 0.02, 64, seed=9)
        slow = mech.local_geometry(dense_model, center, 0.02, 64, seed=9)
        assert np.allclose(fast.lambdas, slow.lambdas, atol=1e-10)
        assert fast.s_f == pytest.approx(slow.s_f, abs=1e-10)
        assert fast.t_f == pytest.approx(slow.t_f, abs=1e-10)

    def test_flat_spots_counted(self):
        # constant mixture with zero Hessian everywhere in the ball
        coeffs = np.array([[[1.0, 0.0, 0.0]]])  # c2 = 0: hessian 6 x^2 at x ~ 0

        class Flat(StSumsModel):
            def hessian_diagonals(self, x):
                return np.zeros((1, self.dim))

        model = Flat(coeffs, np.array([1.0]))
        geom = mech.local_geometry(model, np.zeros(1), 0.01, 50, seed=0)
        assert geom.flat_count == 50
        assert geom.m == 0
        with pytest.raises(ValueError, match="m = 0"):
            mech.mechanism_thresholds(geom, 1)


class TestMechanismThresholds:
    def _geom(self, lambdas, s_f, t_f):
        return mech.LocalGeometry(
            center=np.zeros(len(lambdas)),
            epsilon=0.02,
            n_samples=1,
            seed=0,
            avg_hessian=np.diag(lambdas),
            lambdas=np.asarray(lambdas, dtype=float),
            s_f=s_f,
            t_f=t_f,
            rank_tol=1e-10,
            flat_count=0,
        )

    def test_gd_reduction(self):
        geom = self._geom([3.0, 1.0], 0.0, 0.0)
        rep = mech.mechanism_thresholds(geom, 5)
        assert rep.div_lb == pytest.approx(2.0)
        assert rep.conv_ub == pytest.approx(2.0 / 3.0)

    def test_rank_one_bracket(self):
        geom = self._geom([2.0], 1.0, 1.0)
        rep = mech.mechanism_thresholds(geom, 1)
        assert rep.j_index == 1
        assert rep.div_lb == pytest.approx(0.8)
        assert rep.k_max_div is None

    def test_k_max_columns(self):
        # s/(lambda_{m-1} lambda_m) = 6.0: largest integer strictly below is 5
        geom = self._geom([2.0, 1.0], 12.0, 12.0)
        rep = mech.mechanism_thresholds(geom, 1)
        assert rep.k_max_div == 5
        assert rep.k_max_conv == 6
        assert rep.j_index == 1  # k=1 <= s/(l1 l2) = 6

    def test_monotone_in_k(self):
        geom = self._geom([2.5, 1.5, 0.5], 1.3, 2.0)
        prev_div = prev_conv = 0.0
        for k in [1, 2, 3, 5, 10, 100, 1000, qd.INF]:
            rep = mech.mechanism_thresholds(geom, k)
            assert rep.div_lb >= prev_div and rep.conv_ub >= prev_conv
            prev_div, prev_conv = rep.div_lb, rep.conv_ub

    def test_epsilon_sweep(self):
        prob, mix = scalar_two_mixture()
        geoms = mech.epsilon_sweep(mix, np.zeros(1), [1e-3, 1e-2, 1e-1], n_samples=50, seed=4)
        assert [g.epsilon for g in geoms] == [1e-3, 1e-2, 1e-1]
        # theta-independent mixture: s_f insensitive to the radius
        assert all(g.s_f == pytest.approx(1.0) for g in geoms)
