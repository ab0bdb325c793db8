import numpy as np
import pytest

from hgr import (
    empirical_from_perturbation,
    hscore,
    induced_cdm_direction,
    random_distribution,
    symmetric_perturbation,
    trace_expansion_degenerate,
    trace_expansion_simple,
    true_cdm,
)
from hgr.cdm import _cdm_from_joint
from hgr.distributions import PerturbationDirection
from hgr.errors import BadRange, DegenerateGap
from hgr.exponent import cdm_jacobian, _vec
from hgr.perturbation import effective_direction, first_order_response
from hgr.rng import make_rng

from conftest import (
    centered_joint_direction,
    centered_marginal_direction,
    random_strict,
)


def topk_trace(a, aprime, tau, k):
    w, v = np.linalg.eigh(a + tau * aprime)
    vk = v[:, np.argsort(w)[::-1][:k]]
    return float(np.trace(vk.T @ a @ vk))


def random_symmetric(rng, d):
    m = rng.standard_normal((d, d))
    return (m + m.T) / 2.0


class TestTraceExpansionSimple:
    def test_commuting_perturbation_is_flat(self):
        a = np.diag([3.0, 2.0, 1.0])
        sp = symmetric_perturbation(a, a)
        assert trace_expansion_simple(sp, 2) == 0.0

    def test_two_dim_hand_case(self):
        sp = symmetric_perturbation(np.diag([2.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert abs(trace_expansion_simple(sp, 1) - 1.0) < 1e-14

    def test_finite_difference_slope(self):
        rng = make_rng(50)
        for _ in range(5):
            a = random_symmetric(rng, 6)
            ap = random_symmetric(rng, 6)
            sp = symmetric_perturbation(a, ap)
            k = int(rng.integers(1, 5))
            coef = trace_expansion_simple(sp, k)
            base = topk_trace(a, ap, 0.0, k)
            errs = [
                abs(topk_trace(a, ap, tau, k) - (base - tau**2 * coef)) / tau**2
                for tau in (1e-3, 1e-4)
            ]
            assert errs[1] < errs[0] / 3.0

    def test_degenerate_gap_raises(self):
        sp = symmetric_perturbation(np.diag([1.0, 1.0, 0.0]), random_symmetric(make_rng(1), 3))
        with pytest.raises(DegenerateGap):
            trace_expansion_simple(sp, 1)

    def test_rejects_asymmetric(self):
        with pytest.raises(BadRange):
            symmetric_perturbation(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


class TestTraceExpansionDegenerate:
    def test_full_degeneracy_is_flat(self):
        sp = symmetric_perturbation(np.eye(4), np.diag([1.0, 2.0, 3.0, 4.0]))
        assert trace_expansion_degenerate(sp, 2) == 0.0

    def test_matches_finite_difference(self):
        rng = make_rng(51)
        a = np.diag([1.0, 1.0, 0.0])
        for _ in range(5):
            ap = random_symmetric(rng, 3)
            sp = symmetric_perturbation(a, ap)
            coef = trace_expansion_degenerate(sp, 1)
            base = topk_trace(a, ap, 0.0, 1)
            est = [(base - topk_trace(a, ap, tau, 1)) / tau**2 for tau in (1e-3, 1e-4)]
            assert abs(est[1] - coef) < abs(est[0] - coef) / 3.0 + 1e-12
            assert abs(est[1] - coef) < 1e-5

    def test_blocks_below_top(self):
        rng = make_rng(52)
        a = np.diag([2.0, 1.0, 1.0, 0.5])
        ap = random_symmetric(rng, 4)
        sp = symmetric_perturbation(a, ap)
        coef = trace_expansion_degenerate(sp, 2)
        base = topk_trace(a, ap, 0.0, 2)
        est = [(base - topk_trace(a, ap, tau, 2)) / tau**2 for tau in (1e-3, 1e-4)]
        assert abs(est[1] - coef) < abs(est[0] - coef) / 3.0 + 1e-12

    def test_cross_path_consistency_near_tolerance(self):
        # a barely-broken degeneracy: both formulas must agree, the extra
        # within-block terms of the fallback cancel exactly
        rng = make_rng(53)
        a0 = np.diag([2.0, 1.0, 1.0, 0.0])
        ap = random_symmetric(rng, 4)
        sp = symmetric_perturbation(a0 + 1e-6 * ap, ap)
        c_simple = trace_expansion_simple(sp, 2)
        c_degenerate = trace_expansion_degenerate(sp, 2)
        assert abs(c_simple - c_degenerate) < 1e-6


class TestInducedCdmDirection:
    def test_zero_direction_maps_to_zero(self, diag4):
        d = PerturbationDirection(joint=np.zeros((4, 4)))
        out = induced_cdm_direction(diag4, d)
        assert np.all(out.matrix == 0.0)
        assert out.norm_bound_ok

    def test_root_mass_direction_gives_rank_one(self):
        # the direction along +sqrt(pxy) responds with -sqrt(px py), which the
        # dependence matrix annihilates
        dist = random_strict(make_rng(54), 4, 5)
        xi = np.sqrt(dist.pxy).T
        resp = first_order_response(dist, xi)
        np.testing.assert_allclose(resp, -np.sqrt(np.outer(dist.py, dist.px)), atol=1e-13)
        c = true_cdm(dist)
        assert np.linalg.norm(c.b.T @ resp) < 1e-12

    def test_linearity(self, diag4):
        rng = make_rng(55)
        x1 = rng.standard_normal((4, 4))
        x2 = rng.standard_normal((4, 4))
        f = lambda x: induced_cdm_direction(diag4, PerturbationDirection(joint=x)).matrix
        lhs = f(2.0 * x1 + 3.0 * x2)
        rhs = 2.0 * f(x1) + 3.0 * f(x2)
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_matches_jacobian(self):
        rng = make_rng(56)
        for _ in range(10):
            dist = random_strict(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)))
            jac = cdm_jacobian(dist)
            xi = rng.standard_normal((dist.card_y, dist.card_x))
            via_map = _vec(first_order_response(dist, xi))
            assert np.abs(jac @ _vec(xi) - via_map).max() < 1e-12

    def test_supervised_finite_difference_slope(self):
        dist = random_strict(make_rng(57), 4, 5)
        c = true_cdm(dist)
        rng = make_rng(58)
        xi = centered_joint_direction(rng, dist)
        direction = PerturbationDirection(joint=xi)
        induced = induced_cdm_direction(dist, direction).matrix
        res = []
        for eps in (1e-4, 1e-6):
            p_hat, _ = empirical_from_perturbation(dist, direction, eps)
            b_hat = _cdm_from_joint(p_hat, "x").b
            res.append(np.linalg.norm((b_hat - c.b) / np.sqrt(eps) - induced))
        assert res[1] < res[0] / 3.0

    def test_semi_finite_difference_slope(self):
        dist = random_strict(make_rng(59), 4, 5)
        c = true_cdm(dist)
        rng = make_rng(60)
        r = 1.3
        direction = PerturbationDirection(
            joint=centered_joint_direction(rng, dist),
            marginal=centered_marginal_direction(rng, dist),
        )
        induced = induced_cdm_direction(dist, direction, mode="semi", r=r).matrix
        res = []
        for eps in (1e-4, 1e-6):
            p_hat, q = empirical_from_perturbation(dist, direction, eps)
            px_hat = p_hat.sum(axis=1)
            pooled = (p_hat / px_hat[:, None]) * (px_hat / (1 + r) + q * r / (1 + r))[:, None]
            b_bar = _cdm_from_joint(pooled, "x").b
            res.append(np.linalg.norm((b_bar - c.b) / np.sqrt(eps) - induced))
        assert res[1] < res[0] / 3.0

    def test_effective_direction_r0_is_identity(self, diag4):
        rng = make_rng(61)
        d = PerturbationDirection(
            joint=rng.standard_normal((4, 4)), marginal=rng.standard_normal(4)
        )
        assert np.array_equal(effective_direction(diag4, d, 0.0), d.joint)

    def test_learning_error_prediction(self):
        # realized H-score gap tracks eps times the predicted curvature
        dist = random_strict(make_rng(62), 4, 5)
        c = true_cdm(dist)
        k = 2
        direction = PerturbationDirection(joint=centered_joint_direction(make_rng(63), dist))
        induced = induced_cdm_direction(dist, direction).matrix
        aprime = c.b.T @ induced + induced.T @ c.b
        sp = symmetric_perturbation(c.b.T @ c.b, aprime)
        coef = trace_expansion_simple(sp, k)
        rel = []
        for eps in (1e-4, 1e-6):
            p_hat, _ = empirical_from_perturbation(dist, direction, eps)
            chat = _cdm_from_joint(p_hat, "x")
            realized = c.sum_sq_top(k) - hscore(c, chat.top_phi(k))
            rel.append(abs(realized - eps * coef) / (eps * coef))
        assert rel[1] < rel[0] / 3.0
