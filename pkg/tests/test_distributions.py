import math

import numpy as np
import pytest
from hypothesis import given, settings

from hgr import (
    EmpiricalCounts,
    diagonal_family,
    empirical_from_perturbation,
    from_matrix,
    kl_divergence,
    perturbation_from_empirical,
    random_distribution,
    sample_labeled,
    sample_unlabeled,
)
from hgr.distributions import load_distribution, save_distribution, load_samples
from hgr.errors import (
    AllZero,
    BadRange,
    NegativeEntry,
    NonStrictDistribution,
    SupportViolation,
)
from hgr.rng import make_rng

from conftest import strict_dists


class TestFromMatrix:
    def test_uniform_2x2(self):
        d = from_matrix([[1.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(d.px, [0.5, 0.5])
        np.testing.assert_allclose(d.py, [0.5, 0.5])

    def test_diag4_family(self):
        d = diagonal_family(4, 1.0 / 8.0, 1.0 / 24.0)
        assert abs(d.pxy.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(d.px, 0.25)
        np.testing.assert_allclose(d.py, 0.25)
        assert d.strict

    def test_zero_row_is_valid_but_not_strict(self):
        d = from_matrix([[0.5, 0.5], [0.0, 0.0]])
        assert not d.strict
        with pytest.raises(NonStrictDistribution):
            d.require_strict()

    def test_negative_entry_rejected(self):
        with pytest.raises(NegativeEntry):
            from_matrix([[0.5, -0.1], [0.3, 0.3]])

    def test_all_zero_rejected(self):
        with pytest.raises(AllZero):
            from_matrix(np.zeros((2, 2)))

    def test_far_from_simplex_renormalizes_with_warning(self):
        with pytest.warns(RuntimeWarning):
            d = from_matrix([[1.0, 1.0], [1.0, 2.0]])
        assert abs(d.pxy.sum() - 1.0) < 1e-15

    def test_near_simplex_silent(self):
        p = np.full((2, 2), 0.25)
        p[0, 0] += 1e-14
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            from_matrix(p)

    @given(strict_dists())
    @settings(max_examples=25, deadline=None)
    def test_marginals_consistent(self, dist):
        assert abs(dist.px.sum() - 1.0) < 1e-12
        assert abs(dist.py.sum() - 1.0) < 1e-12
        assert np.abs(dist.pxy.sum(axis=1) - dist.px).max() < 1e-14
        assert np.abs(dist.pxy.sum(axis=0) - dist.py).max() < 1e-14


class TestRandomDistribution:
    def test_deterministic_given_seed(self):
        a = random_distribution((12, 10), make_rng(99))
        b = random_distribution((12, 10), make_rng(99))
        assert np.array_equal(a.pxy, b.pxy)

    def test_entrywise_mean_matches_symmetric_model(self):
        # by symmetry every cell has expectation 1/(cx*cy)
        rng = make_rng(7)
        draws = np.stack([random_distribution((3, 4), rng).pxy for _ in range(1000)])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(mean - 1.0 / 12.0) < 3.0 * se)

    def test_too_small_alphabet(self):
        with pytest.raises(BadRange):
            random_distribution((1, 5), make_rng(0))


class TestSampling:
    def test_point_mass_single_draw(self):
        p = np.zeros((3, 4))
        p[1, 2] = 1.0
        d = from_matrix(p)
        counts = sample_labeled(d, 1, make_rng(0))
        assert counts.labeled[1, 2] == 1
        assert counts.n == 1 and counts.labeled.sum() == 1

    def test_large_n_within_5_sigma(self, diag4):
        n = 1_000_000
        counts = sample_labeled(diag4, n, make_rng(321))
        sigma = np.sqrt(diag4.pxy * (1.0 - diag4.pxy) / n)
        assert np.all(np.abs(counts.joint_hat() - diag4.pxy) < 5.0 * sigma)

    def test_uniform_2x2_concentration(self, uniform22):
        counts = sample_labeled(uniform22, 40_000, make_rng(11))
        assert np.all(counts.joint_hat() >= 0.24)
        assert np.all(counts.joint_hat() <= 0.26)

    def test_unlabeled_counts_marginal(self, diag4):
        counts = sample_unlabeled(diag4, 50_000, make_rng(2))
        assert counts.m == 50_000 and counts.labeled.sum() == 0
        assert np.abs(counts.q_x() - 0.25).max() < 0.02

    def test_labeled_unlabeled_independent_streams(self, diag4):
        rng = make_rng(4)
        lab = sample_labeled(diag4, 100, rng)
        unl = sample_unlabeled(diag4, 50, rng)
        assert lab.n == 100 and unl.m == 50


class TestKl:
    def test_identity_is_zero(self, diag4):
        assert kl_divergence(diag4, diag4) == 0.0

    def test_hand_value(self):
        got = kl_divergence(np.array([0.5, 0.5]), np.array([0.25, 0.75]))
        want = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
        assert abs(got - want) < 1e-15

    def test_support_violation(self):
        with pytest.raises(SupportViolation):
            kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))

    def test_second_order_expansion(self, diag4):
        # D(p + tau*delta || p) approaches (tau^2/2) * sum(delta^2/p)
        rng = make_rng(6)
        delta = rng.standard_normal(diag4.pxy.shape)
        delta -= delta.mean()
        quad = 0.5 * np.sum(delta**2 / diag4.pxy)
        ratios = []
        for tau in (1e-3, 1e-4):
            val = kl_divergence(diag4.pxy + tau * delta, diag4.pxy)
            ratios.append(val / (tau**2 * quad))
        assert abs(ratios[1] - 1.0) < abs(ratios[0] - 1.0) / 3.0
        assert abs(ratios[1] - 1.0) < 1e-3

    @given(strict_dists(), strict_dists())
    @settings(max_examples=25, deadline=None)
    def test_nonnegative(self, q, p):
        if q.pxy.shape != p.pxy.shape:
            return
        assert kl_divergence(q, p) >= 0.0


class TestPerturbationEncoding:
    def test_zero_for_exact_empirical(self, diag4):
        counts = EmpiricalCounts(
            labeled=(diag4.pxy * 24).astype(int), unlabeled=np.zeros(4)
        )
        d = perturbation_from_empirical(diag4, counts, eps=0.1)
        assert np.allclose(d.joint, 0.0)
        assert d.marginal is None

    def test_round_trip_exact(self, diag4):
        counts = sample_labeled(diag4, 1000, make_rng(3))
        counts = EmpiricalCounts(labeled=counts.labeled, unlabeled=np.array([5, 3, 2, 9]))
        d = perturbation_from_empirical(diag4, counts, eps=0.01)
        p_hat, q = empirical_from_perturbation(diag4, d, eps=0.01)
        assert np.abs(p_hat - counts.joint_hat()).max() < 1e-14
        assert np.abs(q - counts.q_x()).max() < 1e-14

    def test_root_mass_component_vanishes(self, diag4):
        # the direction is tangent to the simplex: sum sqrt(p) * joint == 0
        counts = sample_labeled(diag4, 500, make_rng(8))
        d = perturbation_from_empirical(diag4, counts, eps=0.5)
        inner = float(np.sum(np.sqrt(diag4.pxy).T * d.joint))
        assert abs(inner) < 1e-12

    def test_rejects_mass_outside_support(self):
        p = np.array([[0.5, 0.0], [0.25, 0.25]])
        d = from_matrix(p)
        counts = EmpiricalCounts(labeled=np.array([[1, 1], [1, 1]]), unlabeled=np.zeros(2))
        with pytest.raises(SupportViolation):
            perturbation_from_empirical(d, counts, eps=0.1)

    def test_requires_strict(self):
        d = from_matrix([[0.5, 0.5], [0.0, 0.0]])
        counts = EmpiricalCounts(labeled=np.array([[1, 1], [0, 0]]), unlabeled=np.zeros(2))
        with pytest.raises(NonStrictDistribution):
            perturbation_from_empirical(d, counts, eps=0.1)


class TestFileFormats:
    def test_distribution_json_round_trip(self, tmp_path, diag4):
        path = tmp_path / "d.json"
        save_distribution(diag4, path)
        back = load_distribution(path)
        assert np.array_equal(back.pxy, diag4.pxy)

    def test_samples_csv(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("x,y\n0,1\n0,1\n2,0\n1,\n2,\n")
        counts = load_samples(path)
        assert counts.labeled[0, 1] == 2
        assert counts.labeled[2, 0] == 1
        assert counts.n == 3
        assert list(counts.unlabeled) == [0, 1, 1]

    def test_samples_csv_bad_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("a,b\n0,1\n")
        with pytest.raises(BadRange):
            load_samples(path)
