import numpy as np
import pytest

from hgr import (
    AceConfig,
    FeatureMap,
    ace_fit,
    counts_from_distribution,
    feature_to_phi,
    from_matrix,
    hscore,
    phi_to_feature,
    sample_labeled,
    sample_unlabeled,
)
from hgr.ace import ace_objective_trace
from hgr.cdm import _cdm_from_joint
from hgr.distributions import EmpiricalCounts, merge_counts
from hgr.errors import MaxItersExceeded, SingularCovariance
from hgr.rng import make_rng

from conftest import random_strict


def working_cdm(data, mode="supervised"):
    from hgr.ace import _working_joint

    return _cdm_from_joint(_working_joint(data, mode), "working")


class TestAceFit:
    def test_diag4_exact_counts_correlation(self, diag4):
        counts = counts_from_distribution(diag4, 24)
        fm = ace_fit(counts, AceConfig(k=2, seed=0))
        assert abs(fm.correlation - 2.0 / 3.0) < 1e-6

    def test_independent_correlation_zero(self):
        dist = from_matrix(np.outer([0.3, 0.7], [0.4, 0.6]))
        fm = ace_fit(dist, AceConfig(k=1, seed=1))
        assert abs(fm.correlation) < 1e-12
        phi = feature_to_phi(fm)
        np.testing.assert_allclose(phi.T @ phi, np.eye(1), atol=1e-8)

    def test_whitening_invariants(self):
        dist = random_strict(make_rng(31), 5, 6)
        counts = sample_labeled(dist, 5000, make_rng(32))
        fm = ace_fit(counts, AceConfig(k=3, seed=2))
        for feat, mu in ((fm.f, fm.mu_x), (fm.g, fm.mu_y)):
            assert np.abs(mu @ feat).max() < 1e-8
            cov = (feat * mu[:, None]).T @ feat
            np.testing.assert_allclose(cov, np.eye(3), atol=1e-8)

    def test_matches_svd_hscore(self):
        rng = make_rng(33)
        for trial in range(10):
            dist = random_strict(rng, int(rng.integers(3, 6)), int(rng.integers(3, 7)))
            k = min(trial % 3 + 1, min(dist.card_x, dist.card_y) - 1)
            fm = ace_fit(dist, AceConfig(k=k, seed=int(rng.integers(2**31))))
            c = working_cdm(dist)
            assert abs(hscore(c, feature_to_phi(fm)) - c.sum_sq_top(k)) < 1e-8

    def test_correlation_equals_top_sum(self):
        dist = random_strict(make_rng(34), 4, 5)
        counts = sample_labeled(dist, 2000, make_rng(35))
        fm = ace_fit(counts, AceConfig(k=2, seed=3))
        c = working_cdm(counts)
        assert abs(fm.correlation - c.rho(2)) < 1e-6

    def test_rotation_invariance_across_seeds(self):
        dist = random_strict(make_rng(36), 4, 4)
        c = working_cdm(dist)
        vals = [
            ace_fit(dist, AceConfig(k=2, seed=s)).correlation for s in (1, 2, 3, 4)
        ]
        assert max(abs(v - c.rho(2)) for v in vals) < 1e-7

    def test_semi_m0_matches_supervised_subspace(self):
        # with no unlabeled samples the working joints are identical, so the
        # same seed gives bitwise-equal features; across seeds the subspaces
        # agree to solver precision
        dist = random_strict(make_rng(37), 4, 5)
        counts = sample_labeled(dist, 3000, make_rng(38))
        sup = ace_fit(counts, AceConfig(k=2, seed=11), mode="supervised")
        semi_same = ace_fit(counts, AceConfig(k=2, seed=11), mode="semi")
        assert np.array_equal(sup.f, semi_same.f)
        assert np.array_equal(sup.g, semi_same.g)
        semi_other = ace_fit(counts, AceConfig(k=2, seed=12), mode="semi")
        p_sup = feature_to_phi(sup)
        p_semi = feature_to_phi(semi_other)
        assert np.linalg.norm(p_sup @ p_sup.T - p_semi @ p_semi.T) < 1e-8

    def test_semi_uses_pooled_marginal(self, diag4):
        lab = sample_labeled(diag4, 400, make_rng(39))
        unl = sample_unlabeled(diag4, 4000, make_rng(40))
        counts = merge_counts(lab, unl)
        fm = ace_fit(counts, AceConfig(k=2, seed=4), mode="semi")
        c = working_cdm(counts, mode="semi")
        assert abs(hscore(c, feature_to_phi(fm)) - c.sum_sq_top(2)) < 1e-8

    def test_k_above_recommended_warns(self, diag4):
        # k = card exceeds the dependence rank: warned, then the covariance
        # legitimately collapses
        counts = counts_from_distribution(diag4, 24)
        with pytest.warns(RuntimeWarning):
            with pytest.raises(SingularCovariance):
                ace_fit(counts, AceConfig(k=4, seed=0))

    def test_singular_covariance_after_restarts(self):
        # a single observation gives a rank-zero working matrix with k=2:
        # every iterate collapses, so all restarts must fail
        counts = EmpiricalCounts(labeled=np.array([[1, 0], [0, 0]]), unlabeled=np.zeros(2))
        with pytest.raises(SingularCovariance):
            ace_fit(counts, AceConfig(k=2, seed=0))

    def test_max_iters_exceeded(self, diag4):
        counts = counts_from_distribution(diag4, 24)
        with pytest.raises(MaxItersExceeded):
            ace_fit(counts, AceConfig(k=2, max_iters=1, tol=-1.0, seed=0))


class TestObjectiveTrace:
    def test_monotone_nondecreasing(self):
        dist = random_strict(make_rng(41), 5, 5)
        trace = ace_objective_trace(dist, AceConfig(k=2, seed=5))
        diffs = np.diff(trace)
        assert np.all(diffs > -1e-12)

    def test_converges_to_top_sum_of_squares(self):
        dist = random_strict(make_rng(42), 4, 6)
        c = working_cdm(dist)
        trace = ace_objective_trace(dist, AceConfig(k=2, seed=6))
        assert abs(trace[-1] - c.sum_sq_top(2)) < 1e-8


class TestFeaturePhiCorrespondence:
    def test_uniform_standard_basis(self):
        # uniform marginal: f = sqrt(card) * standard basis -> phi standard basis
        card = 4
        mu = np.full(card, 1.0 / card)
        f = np.sqrt(card) * np.eye(card)[:, :2]
        fm = FeatureMap(f=f, g=np.zeros((3, 2)), k=2, mu_x=mu, mu_y=np.full(3, 1 / 3), correlation=0.0)
        np.testing.assert_allclose(feature_to_phi(fm), np.eye(card)[:, :2], atol=1e-14)

    def test_projector_matches_svd(self):
        dist = random_strict(make_rng(43), 5, 5)
        counts = sample_labeled(dist, 10_000, make_rng(44))
        fm = ace_fit(counts, AceConfig(k=2, seed=7))
        phi = feature_to_phi(fm)
        c = working_cdm(counts)
        top = c.top_phi(2)
        assert np.linalg.norm(phi @ phi.T - top @ top.T) < 1e-7

    def test_round_trip(self):
        dist = random_strict(make_rng(45), 4, 4)
        fm = ace_fit(dist, AceConfig(k=2, seed=8))
        phi = feature_to_phi(fm)
        back = phi_to_feature(phi, fm.mu_x)
        assert np.abs(back - fm.f).max() < 1e-14
