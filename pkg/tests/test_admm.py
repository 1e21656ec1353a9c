import numpy as np
import pytest

import splidar as sp
from splidar.admm import (data_term_grad, data_term_value, diff_adjoint,
                          diff_forward, prox_data)
from conftest import single_pixel_prelim
from oracles import (bisect_root, cvx_depth_oracle, depth_cost_reference,
                     golden_section, projected_gradient_depth)


def _irf(area=100.0, sigma2=100.0, alpha=0.0):
    return sp.ImpulseModel(amplitude=1000.0, sigma2=sigma2, alpha=alpha,
                           area=area)


def _random_instance(rng, shape=(3, 3), alpha=0.0, drop_prob=0.2):
    mask = rng.random(shape) > drop_prob
    if not mask.any():
        mask[0, 0] = True
    depth_pre = np.where(mask, rng.uniform(20.0, 80.0, shape), np.nan)
    refl_pre = np.where(mask, rng.uniform(0.2, 1.5, shape), 0.0)
    prelim = sp.PrelimEstimates(depth=depth_pre, refl=refl_pre, mask=mask)
    refl = rng.uniform(0.2, 1.5, shape)
    irf = _irf(area=60.0, sigma2=40.0, alpha=alpha)
    return prelim, refl, irf


class TestProxData:
    def test_alpha_zero_closed_form(self, rng):
        v = rng.uniform(-5, 5, 100)
        q = rng.uniform(0.1, 10, 100)
        m0 = rng.uniform(-5, 5, 100)
        out = prox_data(v, q, m0, np.ones(100), alpha=0.0, mu=1.5)
        assert np.allclose(out, (q * m0 + 1.5 * v) / (q + 1.5), rtol=1e-14)

    def test_equal_weight_average(self):
        out = prox_data(np.array([4.0]), np.array([1.0]), np.array([2.0]),
                        np.array([0.0]), alpha=0.0, mu=1.0)
        assert out[0] == pytest.approx(3.0)

    def test_matches_bisection_oracle(self):
        # mu/2 (m-100)^2 + 1/2 (m-99)^2 + 100 exp(-0.01 m); m0 = 100 - 0.01*100
        alpha, mu, q, ecoef = 0.01, 1.0, 1.0, 100.0
        v, m0 = 100.0, 99.0
        out = prox_data(np.array([v]), np.array([q]), np.array([m0]),
                        np.array([ecoef]), alpha=alpha, mu=mu)

        def grad(m):
            return mu * (m - v) + q * (m - m0) - alpha * ecoef * np.exp(-alpha * m)

        root = bisect_root(grad, 0.0, 200.0, tol=1e-12)
        assert out[0] == pytest.approx(root, abs=1e-8)

    def test_gradient_below_tolerance(self, rng):
        n = 500
        v = rng.uniform(0, 200, n)
        q = rng.uniform(0.05, 300, n)
        m0 = rng.uniform(0, 200, n)
        ecoef = rng.uniform(0.1, 3e4, n)
        alpha = 0.013
        m = prox_data(v, q, m0, ecoef, alpha=alpha, mu=0.7)
        g = 0.7 * (m - v) + q * (m - m0) - alpha * ecoef * np.exp(-alpha * m)
        assert np.max(np.abs(g)) < 1e-10


class TestElementwiseProxes:
    def test_soft_threshold_examples(self):
        assert sp.soft_threshold(np.array([2.0]), 1.0 / 1.0)[0] == 1.0
        assert sp.soft_threshold(np.array([0.5]), 1.0 / 1.0)[0] == 0.0
        assert sp.soft_threshold(np.array([-3.0]), 2.0 / 4.0)[0] == -2.5

    def test_projection_examples(self):
        assert sp.project_nonneg(np.array([-0.5]))[0] == 0.0
        assert sp.project_nonneg(np.array([7.0]))[0] == 7.0
        assert np.array_equal(sp.project_nonneg(np.array([-1.0, 0.0, 2.0])),
                              [0.0, 0.0, 2.0])


class TestNormalSystem:
    def test_single_missing_pixel_is_identity(self):
        prelim = single_pixel_prelim(0.0, 0.0, observed=False)
        solver = sp.DepthSolver(prelim, _irf(), sp.TvPrior(0.0))
        rhs = np.array([[3.7]])
        assert solver.apply_normal_inverse(rhs)[0, 0] == pytest.approx(3.7)

    def test_two_pixel_hand_case(self):
        prelim = sp.PrelimEstimates(depth=np.array([[10.0, 20.0]]),
                                    refl=np.array([[1.0, 1.0]]),
                                    mask=np.ones((1, 2), bool))
        solver = sp.DepthSolver(prelim, _irf(), sp.TvPrior(1.0))
        out = solver.apply_normal_inverse(np.array([[2.0, 2.0]]))
        assert np.allclose(out, [[1.0, 1.0]])  # M = [[3,-1],[-1,3]]

    def test_residual_on_random_instances(self, rng):
        for _ in range(5):
            prelim, refl, irf = _random_instance(rng, shape=(16, 16))
            solver = sp.DepthSolver(prelim, irf, sp.TvPrior(0.5))
            rhs = rng.standard_normal((16, 16))
            x = solver.apply_normal_inverse(rhs)
            m_mat = solver._m_mat
            resid = np.linalg.norm(m_mat @ x.ravel() - rhs.ravel())
            assert resid / np.linalg.norm(rhs.ravel()) < 1e-10

    def test_mask_gram_is_binary_diagonal(self, rng):
        prelim, refl, irf = _random_instance(rng, shape=(5, 5), drop_prob=0.4)
        solver = sp.DepthSolver(prelim, irf, sp.TvPrior(0.0))
        gram = sp.admm._difference_gram((5, 5))
        m_dense = solver._m_mat.toarray()
        diag_extra = np.diag(m_dense - gram.toarray()) - 1.0
        assert np.array_equal(diag_extra.astype(bool),
                              prelim.mask.ravel())
        assert set(np.unique(diag_extra)) <= {0.0, 1.0}


class TestDiffOperator:
    def test_adjointness(self, rng):
        shape = (6, 5)
        x = rng.standard_normal(shape)
        y = rng.standard_normal(6 * 4 + 5 * 5)
        lhs = float(diff_forward(x) @ y)
        rhs = float((x * diff_adjoint(y, shape)).sum())
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestGradients:
    def test_data_term_matches_finite_differences(self, rng):
        n = 1000
        q = rng.uniform(0.05, 200, n)
        m0 = rng.uniform(0, 150, n)
        ecoef = rng.uniform(0.1, 3e4, n)
        x = rng.uniform(0.0, 150, n)
        alpha = 0.02
        grad = data_term_grad(x, q, m0, ecoef, alpha)
        h = 1e-5 * np.maximum(np.abs(x), 1.0)
        fd = (data_term_value(x + h, q, m0, ecoef, alpha)
              - data_term_value(x - h, q, m0, ecoef, alpha)) / (2 * h)
        scale = np.maximum(np.abs(grad), np.abs(fd))
        assert np.max(np.abs(grad - fd) / np.maximum(scale, 1e-8)) < 1e-5


class TestSolveDepth:
    def test_single_pixel_quadratic_only(self):
        prelim = single_pixel_prelim(5.0, 1.0)
        sol = sp.solve_depth(prelim, np.array([[1.0]]), _irf(),
                             sp.TvPrior(0.0), t0=np.array([[40.0]]))
        assert sol.converged
        assert sol.depth[0, 0] == pytest.approx(5.0, abs=1e-5)

    def test_single_pixel_attenuated_first_order_condition(self):
        irf = _irf(area=200.0, sigma2=50.0, alpha=0.02)
        prelim = single_pixel_prelim(60.0, 0.4)
        refl = np.array([[0.9]])
        sol = sp.solve_depth(prelim, refl, irf, sp.TvPrior(0.0),
                             t0=np.array([[10.0]]))
        q = irf.area * 0.4 / irf.sigma2
        m0 = 60.0 - irf.alpha * irf.sigma2

        def cost(m):
            return (0.5 * q * (m - m0) ** 2
                    + irf.area * 0.9 * np.exp(-irf.alpha * m))

        best = golden_section(cost, 0.0, 200.0, tol=1e-10)
        assert sol.depth[0, 0] == pytest.approx(best, abs=1e-6)

    def test_three_by_three_matches_conic_oracle(self, rng):
        # fully observed: with missing pixels the TV median interval makes
        # the minimiser non-unique in those coordinates
        prelim, refl, irf = _random_instance(rng, alpha=0.0, drop_prob=0.0)
        cfg = sp.AdmmConfig(primal_tol=1e-9, max_iters=4000)
        sol = sp.solve_depth(prelim, refl, irf, sp.TvPrior(1.0), cfg,
                             t0=np.where(prelim.mask, prelim.depth, 40.0))
        oracle = cvx_depth_oracle(prelim.mask, prelim.depth, prelim.refl,
                                  refl, irf.area, irf.sigma2, 0.0, 1.0)
        mine = sp.depth_cost(sol.depth, prelim, refl, irf, 1.0)
        theirs = sp.depth_cost(np.maximum(oracle, 0.0), prelim, refl, irf, 1.0)
        assert mine - theirs < 1e-8
        assert np.max(np.abs(sol.depth - oracle)) < 1e-3

    def test_eta_zero_matches_projected_gradient(self, rng):
        prelim, refl, irf = _random_instance(rng, alpha=0.01)
        sol = sp.solve_depth(prelim, refl, irf, sp.TvPrior(0.0),
                             sp.AdmmConfig(primal_tol=1e-9, max_iters=3000),
                             t0=np.full((3, 3), 30.0))
        pg = projected_gradient_depth(prelim.mask,
                                      np.where(prelim.mask, prelim.depth, 0.0),
                                      prelim.refl, refl, irf.area, irf.sigma2,
                                      irf.alpha, np.full((3, 3), 30.0))
        # compare on observed pixels; unobserved ones are free for eta = 0
        assert np.allclose(sol.depth[prelim.mask], pg[prelim.mask], atol=1e-5)

    def test_uniqueness_across_initialisations(self, rng):
        prelim, refl, irf = _random_instance(rng, alpha=0.01, drop_prob=0.0)
        cfg = sp.AdmmConfig(primal_tol=1e-7, max_iters=5000)
        prior = sp.TvPrior(0.7)
        a = sp.solve_depth(prelim, refl, irf, prior, cfg,
                           t0=np.zeros((3, 3)))
        b = sp.solve_depth(prelim, refl, irf, prior, cfg,
                           t0=np.full((3, 3), 90.0))
        assert a.converged and b.converged
        assert np.max(np.abs(a.depth - b.depth)) < 10 * cfg.primal_tol

    def test_feasibility_and_cost_decrease(self, rng):
        prelim, refl, irf = _random_instance(rng, shape=(6, 6), alpha=0.01)
        t0 = np.full((6, 6), 50.0)
        sol = sp.solve_depth(prelim, refl, irf, sp.TvPrior(1.5),
                             sp.AdmmConfig(), t0=t0)
        assert np.all(sol.depth >= 0)
        assert sp.depth_cost(sol.depth, prelim, refl, irf, 1.5) <= \
            sp.depth_cost(t0, prelim, refl, irf, 1.5)

    def test_missing_pixels_follow_neighbours(self):
        mask = np.ones((3, 3), bool)
        mask[1, 1] = False
        depth_pre = np.where(mask, 42.0, np.nan)
        refl_pre = np.where(mask, 1.0, 0.0)
        prelim = sp.PrelimEstimates(depth=depth_pre, refl=refl_pre, mask=mask)
        sol = sp.solve_depth(prelim, np.ones((3, 3)), _irf(), sp.TvPrior(2.0),
                             t0=np.full((3, 3), 10.0))
        assert sol.depth[1, 1] == pytest.approx(42.0, abs=1e-4)

    def test_nonconvergence_returns_diagnostics(self, rng):
        prelim, refl, irf = _random_instance(rng, shape=(4, 4))
        cfg = sp.AdmmConfig(max_iters=2, primal_tol=1e-14)
        sol = sp.solve_depth(prelim, refl, irf, sp.TvPrior(1.0), cfg,
                             t0=np.zeros((4, 4)))
        assert not sol.converged
        assert sol.iterations == 2
        assert np.isfinite(sol.residual)

    def test_rejects_nonpositive_reflectivity(self, rng):
        prelim, refl, irf = _random_instance(rng)
        refl[0, 0] = 0.0
        with pytest.raises(ValueError, match="positive"):
            sp.solve_depth(prelim, refl, irf, sp.TvPrior(0.5),
                           t0=np.zeros((3, 3)))

    def test_cost_reference_agreement(self, rng):
        prelim, refl, irf = _random_instance(rng, shape=(4, 5), alpha=0.015)
        t = rng.uniform(0, 100, (4, 5))
        mine = sp.depth_cost(t, prelim, refl, irf, 0.8)
        ref = depth_cost_reference(t, prelim.mask,
                                   np.where(prelim.mask, prelim.depth, 0.0),
                                   prelim.refl, refl, irf.area, irf.sigma2,
                                   irf.alpha, 0.8)
        assert mine == pytest.approx(ref, rel=1e-12)
