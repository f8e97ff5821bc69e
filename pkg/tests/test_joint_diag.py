import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import joint_diag_oracle, random_spd, well_conditioned
from mweica.errors import InputError, NearDegenerateSpectrum, NotPositiveDefinite
from mweica.evaluation import amari_index
from mweica.joint_diag import mean_diag_error, pham_joint_diag, simultaneous_diag_pair


def offdiag_mass(M):
    return np.abs(M - np.diag(np.diag(M))).sum()


def assert_diagonalizes(W, *mats, rel=1e-10):
    for S in mats:
        C = W.T @ S @ W
        assert offdiag_mass(C) < rel * np.trace(np.abs(C))


def assert_scaled_permutation(M, atol=1e-8):
    M = np.abs(M) / np.abs(M).max(axis=0)
    assert np.allclose(np.sort(M, axis=0)[:-1], 0, atol=atol)
    assert sorted(np.argmax(M, axis=0)) == list(range(M.shape[0]))


class TestPairDiag:
    def test_already_diagonal(self):
        res = simultaneous_diag_pair(np.eye(2), np.diag([1.0, 2.0]))
        assert_scaled_permutation(res.W)

    def test_two_one_three_one(self):
        S1 = np.array([[2.0, 1.0], [1.0, 2.0]])
        S2 = np.array([[3.0, 1.0], [1.0, 3.0]])
        res = simultaneous_diag_pair(S1, S2)
        assert_diagonalizes(res.W, S1, S2)
        # unit columns along (1, 1)/sqrt2 and (1, -1)/sqrt2; the first has the larger S1 variance
        r = 1 / math.sqrt(2)
        np.testing.assert_allclose(np.abs(res.W), [[r, r], [r, r]], atol=1e-12)
        np.testing.assert_allclose(np.diag(res.W.T @ S1 @ res.W), [3.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(sorted(res.eigenvalues), [4 / 3, 2.0], atol=1e-12)

    def test_identical_pair_warns(self, rng):
        S = random_spd(rng, 3)
        with pytest.warns(NearDegenerateSpectrum):
            res = simultaneous_diag_pair(S, S)
        assert res.near_degenerate
        assert_diagonalizes(res.W, S)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_pairs(self, seed):
        rng = np.random.default_rng(seed)
        d = rng.integers(2, 7)
        S1, S2 = random_spd(rng, d), random_spd(rng, d)
        with warnings.catch_warnings():
            warnings.simplefilter("error", NearDegenerateSpectrum)
            res = simultaneous_diag_pair(S1, S2)
        assert_diagonalizes(res.W, S1, S2)
        assert abs(np.linalg.det(res.W)) > 0

    def test_first_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            simultaneous_diag_pair(np.diag([1.0, -1.0]), np.eye(2))


class TestMeanDiagError:
    def test_all_diagonal(self):
        assert mean_diag_error(np.eye(2), [np.diag([1.0, 2.0]), np.diag([3.0, 1.0])]) == pytest.approx(0, abs=1e-15)

    def test_single_matrix(self):
        assert mean_diag_error(np.eye(2), [[[2.0, 1.0], [1.0, 2.0]]]) == pytest.approx(math.log(4 / 3), rel=1e-12)

    def test_oracle_diagonalizer(self):
        B, S = joint_diag_oracle(3)
        assert mean_diag_error(np.linalg.inv(B).T, S) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(2, 5))
    def test_scale_permutation_invariance(self, seed, d):
        rng = np.random.default_rng(seed)
        S = np.array([random_spd(rng, d) for _ in range(4)])
        W = well_conditioned(rng, d, 10.0)
        P = np.eye(d)[rng.permutation(d)]
        D = np.diag(rng.uniform(0.1, 10, d))
        base = mean_diag_error(W, S)
        assert mean_diag_error(W @ P @ D, S) == pytest.approx(base, abs=1e-12)


class TestPham:
    def test_already_joint_diagonal(self):
        res = pham_joint_diag([np.diag([1.0, 2.0]), np.diag([3.0, 1.0])])
        assert_scaled_permutation(res.W)
        assert mean_diag_error(res.W, [np.diag([1.0, 2.0]), np.diag([3.0, 1.0])]) < 1e-14

    @pytest.mark.parametrize("seed", range(10))
    def test_oracle(self, seed):
        B, S = joint_diag_oracle(seed)
        res = pham_joint_diag(S)
        assert res.converged
        assert mean_diag_error(res.W, S) < 1e-9
        # W.T B D B.T W diagonal means W.T B is a scaled permutation
        assert amari_index(res.W, B) < 1e-4
        assert_scaled_permutation(res.W.T @ B, atol=1e-6)

    @pytest.mark.parametrize("precondition", [True, False])
    def test_history_monotone(self, precondition, rng):
        S = np.array([random_spd(rng, 4) for _ in range(10)])
        res = pham_joint_diag(S, precondition=precondition)
        h = np.array(res.criterion_history)
        assert np.all(np.diff(h) <= 1e-12)
        assert h[-1] <= mean_diag_error(np.eye(4), S) + 1e-12
        assert abs(np.linalg.det(res.W)) > 0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(2, 5), st.integers(2, 12))
    def test_monotone_property(self, seed, d, n):
        rng = np.random.default_rng(seed)
        S = np.array([random_spd(rng, d) for _ in range(n)])
        res = pham_joint_diag(S)
        assert np.all(np.diff(res.criterion_history) <= 1e-12)
        assert res.criterion_history[-1] == pytest.approx(mean_diag_error(res.W, S), abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_two_matrices_match_closed_form(self, seed):
        rng = np.random.default_rng(100 + seed)
        S = np.array([random_spd(rng, 4), random_spd(rng, 4)])
        closed = simultaneous_diag_pair(*S)
        res = pham_joint_diag(S)
        assert mean_diag_error(res.W, S) <= mean_diag_error(closed.W, S) + 1e-9

    def test_sweep_budget_reported(self, rng):
        S = np.array([random_spd(rng, 5) for _ in range(10)])
        res = pham_joint_diag(S, max_sweeps=1)
        assert res.sweeps_used == 1
        assert not res.converged

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            pham_joint_diag([np.eye(2), np.diag([1.0, -1.0])])

    def test_rejects_bad_shape(self):
        with pytest.raises(InputError):
            pham_joint_diag(np.ones((2, 2, 3)))

    def test_deterministic_canonical_output(self):
        _, S = joint_diag_oracle(4)
        a = pham_joint_diag(S).W
        b = pham_joint_diag(S).W
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(np.linalg.norm(a, axis=0), 1, atol=1e-12)
        idx = np.argmax(np.abs(a), axis=0)
        assert np.all(a[idx, np.arange(4)] > 0)
