import warnings

import numpy as np
import pytest

from replaycm.gmm import GmmModel
from replaycm.ivector import (
    BaumWelchStats,
    IVector,
    TotalVariabilityModel,
    baum_welch_stats,
    center_length_normalize,
    extract_ivector,
    train_t_matrix,
)


def naive_baum_welch(ubm, frames):
    """Direct per-frame posterior-weighted summation oracle."""
    k, d = ubm.means.shape
    n = np.zeros(k)
    f = np.zeros((k, d))
    for x in frames:
        dens = np.array([
            w * np.prod(np.exp(-0.5 * (x - mu) ** 2 / var) / np.sqrt(2 * np.pi * var))
            for w, mu, var in zip(ubm.weights, ubm.means, ubm.variances)
        ])
        post = dens / dens.sum()
        n += post
        f += post[:, None] * (x[None, :] - ubm.means)
    return n, f


def dense_extract_oracle(tv, stats):
    """Explicit dense solve in the full supervector space."""
    k, d = tv.ubm.means.shape
    sigma_inv = np.diag(1.0 / tv.ubm.variances.reshape(-1))
    n_diag = np.diag(np.repeat(stats.n, d))
    f_flat = stats.f.reshape(-1)
    lhs = np.eye(tv.rank) + tv.t_matrix.T @ sigma_inv @ n_diag @ tv.t_matrix
    rhs = tv.t_matrix.T @ sigma_inv @ f_flat
    return np.linalg.solve(lhs, rhs)


def random_ubm(rng, k, d):
    return GmmModel(
        rng.dirichlet(np.ones(k)),
        rng.standard_normal((k, d)) * 2.0,
        rng.uniform(0.5, 2.0, (k, d)),
    )


class TestBaumWelchStats:
    def test_saturated_posterior_at_component_mean(self):
        ubm = GmmModel(np.array([0.5, 0.5]), np.array([[10.0], [-10.0]]),
                       np.ones((2, 1)))
        stats = baum_welch_stats(ubm, np.array([[10.0]]))
        assert np.allclose(stats.n, [1.0, 0.0], atol=1e-8)
        assert np.max(np.abs(stats.f[0])) <= 1e-8

    def test_counts_sum_to_frame_count(self, rng):
        ubm = random_ubm(rng, 4, 3)
        frames = rng.standard_normal((37, 3))
        stats = baum_welch_stats(ubm, frames)
        assert abs(stats.n.sum() - 37.0) <= 1e-8

    def test_matches_direct_summation_oracle(self, rng):
        ubm = random_ubm(rng, 3, 2)
        frames = rng.standard_normal((25, 2))
        stats = baum_welch_stats(ubm, frames)
        n, f = naive_baum_welch(ubm, frames)
        assert np.max(np.abs(stats.n - n)) <= 1e-10
        assert np.max(np.abs(stats.f - f)) <= 1e-10


class TestTrainTMatrix:
    def test_rank1_subspace_recovery(self, rng):
        k, d = 2, 2
        ubm = random_ubm(rng, k, d)
        t_true = rng.standard_normal((k * d, 1))
        stats = []
        for _ in range(150):
            n_u = rng.uniform(5.0, 50.0, k)
            w = rng.standard_normal()
            f_flat = np.repeat(n_u, d) * (t_true[:, 0] * w)
            f_flat += rng.standard_normal(k * d) * 0.01
            stats.append(BaumWelchStats(n_u, f_flat.reshape(k, d)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tv = train_t_matrix(stats, ubm, rank=1, iters=20, seed=0)
        cos = abs(
            float(tv.t_matrix[:, 0] @ t_true[:, 0])
            / (np.linalg.norm(tv.t_matrix) * np.linalg.norm(t_true))
        )
        assert cos > 0.99

    def test_zero_stats_keep_initialization(self, rng):
        k, d = 2, 3
        ubm = random_ubm(rng, k, d)
        stats = [BaumWelchStats(np.zeros(k), np.zeros((k, d))) for _ in range(5)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tv = train_t_matrix(stats, ubm, rank=2, iters=3, seed=7)
        init = 0.1 * np.random.default_rng(7).standard_normal((k * d, 2))
        assert np.array_equal(tv.t_matrix, init)
        ivec = extract_ivector(tv, stats[0])
        assert np.all(ivec.values == 0.0)

    def test_objective_non_decreasing(self, rng):
        k, d = 3, 2
        ubm = random_ubm(rng, k, d)
        stats = []
        for _ in range(40):
            frames = rng.standard_normal((30, d))
            stats.append(baum_welch_stats(ubm, frames))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tv = train_t_matrix(stats, ubm, rank=2, iters=8, seed=1)
        history = np.array(tv.objective_history)
        assert history.size == 9
        assert np.all(np.diff(history) >= -1e-8)

    def test_few_utterances_warn(self, rng):
        ubm = random_ubm(rng, 2, 2)
        stats = [baum_welch_stats(ubm, rng.standard_normal((10, 2))) for _ in range(3)]
        with pytest.warns(UserWarning, match="only 3 utterances"):
            train_t_matrix(stats, ubm, rank=4, iters=2, seed=2)


class TestExtractIvector:
    def test_zero_stats_zero_ivector(self, rng):
        ubm = random_ubm(rng, 2, 2)
        tv = TotalVariabilityModel(ubm, rng.standard_normal((4, 2)))
        ivec = extract_ivector(tv, BaumWelchStats(np.zeros(2), np.zeros((2, 2))))
        assert np.all(ivec.values == 0.0)

    def test_scalar_closed_form(self):
        ubm = GmmModel(np.array([1.0]), np.zeros((1, 1)), np.full((1, 1), 2.0))
        tv = TotalVariabilityModel(ubm, np.array([[0.7]]))
        stats = BaumWelchStats(np.array([3.0]), np.array([[1.5]]))
        ivec = extract_ivector(tv, stats)
        expected = (0.7 * 1.5 / 2.0) / (1.0 + 0.7**2 * 3.0 / 2.0)
        assert np.isclose(ivec.values[0], expected)

    def test_matches_dense_solve_oracle(self, rng):
        for k, d, rank in ((2, 2, 2), (4, 4, 4), (2, 8, 3)):
            ubm = random_ubm(rng, k, d)
            tv = TotalVariabilityModel(ubm, rng.standard_normal((k * d, rank)))
            stats = BaumWelchStats(
                rng.uniform(0.0, 20.0, k), rng.standard_normal((k, d))
            )
            ivec = extract_ivector(tv, stats)
            oracle = dense_extract_oracle(tv, stats)
            assert np.max(np.abs(ivec.values - oracle)) <= 1e-8

    def test_shape_mismatch(self, rng):
        ubm = random_ubm(rng, 2, 2)
        tv = TotalVariabilityModel(ubm, rng.standard_normal((4, 2)))
        with pytest.raises(ValueError, match="do not match"):
            extract_ivector(tv, BaumWelchStats(np.zeros(3), np.zeros((3, 2))))


class TestCenterLengthNormalize:
    def test_unit_norms(self, rng):
        vectors = [IVector(rng.standard_normal(5)) for _ in range(10)]
        normalized, mean, flags = center_length_normalize(vectors)
        assert not any(flags)
        for v in normalized:
            assert abs(np.linalg.norm(v.values) - 1.0) <= 1e-10
        assert np.allclose(mean, np.mean([v.values for v in vectors], axis=0))

    def test_vector_equal_to_mean_flagged(self):
        vectors = [IVector(np.array([1.0, 2.0])), IVector(np.array([1.0, 2.0]))]
        normalized, _, flags = center_length_normalize(vectors)
        assert flags == [True, True]
        assert np.all(normalized[0].values == 0.0)

    def test_fitted_mean_reproduces_training_outputs(self, rng):
        vectors = [IVector(rng.standard_normal(4)) for _ in range(8)]
        at_fit, mean, _ = center_length_normalize(vectors)
        again, _, _ = center_length_normalize(vectors, mean=mean)
        for a, b in zip(at_fit, again):
            assert np.array_equal(a.values, b.values)
