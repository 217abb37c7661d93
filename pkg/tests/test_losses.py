import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvcl import _pykernels, kernels
from cvcl.core import ParamStore, finite_difference_gradient
from cvcl.errors import ConfigurationError, UsageError
from cvcl.losses import (
    LossWeights,
    column_similarity,
    consistency_grad,
    consistency_regularizer,
    cross_view_contrastive_grad,
    cross_view_contrastive_loss,
    fine_tune_loss,
    pairwise_contrastive_grad,
    pairwise_contrastive_loss,
    reconstruction_grad,
    reconstruction_loss,
    target_distribution,
    target_distribution_grad,
)
from cvcl.theory import build_strictly_aligned, perturb, random_assignment, contrastive_lower_bound


# --- independent scalar oracles -------------------------------------------

def sharpen_scalar(H):
    m, K = len(H), len(H[0])
    f = [sum(H[i][j] for i in range(m)) for j in range(K)]
    out = []
    for i in range(m):
        u = [H[i][j] ** 2 / f[j] for j in range(K)]
        out.append([x / sum(u) for x in u])
    return out


def pair_loss_scalar(A, B, tau):
    m, K = len(A), len(A[0])

    def s(X, j, Y, k):
        return sum(X[i][j] * Y[i][k] for i in range(m))

    total = 0.0
    for k in range(K):
        T = sum(math.exp(s(A, j, A, k) / tau) for j in range(K) if j != k)
        T += sum(math.exp(s(A, j, B, k) / tau) for j in range(K))
        total += math.log(math.exp(s(A, k, B, k) / tau) / T)
    return -total / K


def rand_assign(rng, m, K):
    return rng.dirichlet(np.ones(K), size=m)


# --- target distribution ---------------------------------------------------

class TestTargetDistribution:
    def test_uniform_fixed(self):
        H = np.full((5, 4), 0.25)
        np.testing.assert_allclose(target_distribution(H), H, atol=1e-12)

    def test_one_hot_fixed(self):
        H = np.eye(3)[[0, 1, 2, 2, 1]]
        np.testing.assert_allclose(target_distribution(H), H, atol=1e-12)

    def test_hand_matrix(self):
        H = [[0.8, 0.2], [0.4, 0.6]]
        np.testing.assert_allclose(target_distribution(np.array(H)), sharpen_scalar(H), atol=1e-12)

    def test_zero_column_guarded(self):
        P = target_distribution(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert np.all(np.isfinite(P))
        np.testing.assert_allclose(P.sum(axis=1), 1.0)

    def test_gradient_fd(self):
        rng = np.random.default_rng(0)
        H = rand_assign(rng, 6, 3)
        C = rng.normal(size=(6, 3))
        store = ParamStore()
        store.add("H", H)
        fd = finite_difference_gradient(lambda: float(np.sum(C * target_distribution(H))), store)[0]
        np.testing.assert_allclose(target_distribution_grad(H, C), fd, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_target_distribution_row_stochastic(m, K, seed):
    P = target_distribution(rand_assign(np.random.default_rng(seed), m, K))
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


# --- similarity and contrastive loss --------------------------------------

class TestSimilarity:
    def test_zero(self):
        assert column_similarity(np.zeros(4), np.arange(4.0)) == 0

    def test_ones(self):
        assert column_similarity(np.ones(7), np.ones(7)) == 7

    def test_orthogonal(self):
        assert column_similarity([1, 0, 0], [0, 1, 1]) == 0

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            column_similarity(np.ones(3), np.ones(4))


class TestPairwise:
    def test_single_cluster_zero(self):
        P = np.ones((4, 1))
        assert pairwise_contrastive_loss(P, P, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_identity_example(self):
        I2 = np.eye(2)
        value = pairwise_contrastive_loss(I2, I2, 1.0)
        assert value == pytest.approx(pair_loss_scalar(I2.tolist(), I2.tolist(), 1.0), abs=1e-14)
        assert value == pytest.approx(math.log(1 + 2 / math.e), abs=1e-14)
        assert value == pytest.approx(0.55144, abs=1e-5)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m, K = rng.integers(2, 10), rng.integers(2, 6)
            tau = rng.choice([0.2, 0.5, 1.0])
            A, B = rand_assign(rng, m, K), rand_assign(rng, m, K)
            assert pairwise_contrastive_loss(A, B, tau) == pytest.approx(
                pair_loss_scalar(A.tolist(), B.tolist(), tau), rel=1e-12, abs=1e-12
            )

    def test_no_overflow(self):
        P = np.zeros((100, 2))
        P[:, 0] = 1
        # s / tau = 1e4
        value = pairwise_contrastive_loss(P, P, 0.01)
        assert np.isfinite(value)
        assert value == pytest.approx(0.5 * math.log(3), rel=1e-12)

    def test_asymmetric(self):
        rng = np.random.default_rng(2)
        A, B = rand_assign(rng, 6, 3), rand_assign(rng, 6, 3)
        assert pairwise_contrastive_loss(A, B, 0.5) != pytest.approx(pairwise_contrastive_loss(B, A, 0.5))

    def test_errors(self):
        with pytest.raises(UsageError):
            pairwise_contrastive_loss(np.ones((3, 2)), np.ones((4, 2)), 1.0)
        with pytest.raises(UsageError):
            pairwise_contrastive_loss(np.ones((3, 0)), np.ones((3, 0)), 1.0)

    def test_gradient_fd(self):
        rng = np.random.default_rng(3)
        A, B = rand_assign(rng, 5, 3), rand_assign(rng, 5, 3)
        _, dA, dB = pairwise_contrastive_grad(A, B, 0.5)
        store = ParamStore()
        store.add("A", A)
        store.add("B", B)
        fdA, fdB = finite_difference_gradient(lambda: pairwise_contrastive_loss(A, B, 0.5), store)
        np.testing.assert_allclose(dA, fdA, atol=1e-8)
        np.testing.assert_allclose(dB, fdB, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(2, 6), st.integers(4, 32), st.sampled_from([0.2, 0.5, 1.0]),
    st.integers(0, 2**31 - 1),
)
def test_loss_nonnegative_and_above_bound(K, m, tau, seed):
    rng = np.random.default_rng(seed)
    l = pairwise_contrastive_loss(random_assignment(m, K, rng), random_assignment(m, K, rng), tau)
    assert l >= 0
    assert l >= contrastive_lower_bound(K, m, tau)


def test_bound_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        K, m, tau = rng.integers(2, 7), rng.integers(4, 33), rng.choice([0.2, 0.5, 1.0])
        A, B = random_assignment(m, K, rng), random_assignment(m, K, rng)
        assert pairwise_contrastive_loss(A, B, tau) >= contrastive_lower_bound(K, m, tau)


@pytest.mark.parametrize("sizes", [[1, 1, 1], [2, 3, 4], [5, 5, 5], [1, 4]])
def test_strict_alignment_minimal(sizes):
    rng = np.random.default_rng(4)
    P = build_strictly_aligned(sizes)
    for tau in (0.5, 1.0):
        base = pairwise_contrastive_loss(P, P, tau)
        for _ in range(100):
            Q = perturb(P, rng)
            assert base <= pairwise_contrastive_loss(Q, Q, tau)
            assert base <= pairwise_contrastive_loss(P, Q, tau)


# --- cross-view loss -------------------------------------------------------

class TestCrossView:
    def test_two_views(self):
        rng = np.random.default_rng(5)
        A, B = rand_assign(rng, 6, 3), rand_assign(rng, 6, 3)
        expected = 0.5 * (pairwise_contrastive_loss(A, B, 0.5) + pairwise_contrastive_loss(B, A, 0.5))
        assert cross_view_contrastive_loss([A, B], 0.5) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("n_views", [2, 3, 4])
    def test_identical_aligned_views(self, n_views):
        P = build_strictly_aligned([2, 2, 3])
        l_aligned = pairwise_contrastive_loss(P, P, 0.5)
        total = cross_view_contrastive_loss([P] * n_views, 0.5)
        assert total == pytest.approx(n_views * (n_views - 1) / 2 * l_aligned, rel=1e-13)

    def test_three_views_resummation(self):
        rng = np.random.default_rng(6)
        Ps = [rand_assign(rng, 7, 4) for _ in range(3)]
        brute = 0.5 * sum(
            pair_loss_scalar(Ps[a].tolist(), Ps[b].tolist(), 0.5)
            for a, b in itertools.permutations(range(3), 2)
        )
        assert cross_view_contrastive_loss(Ps, 0.5) == pytest.approx(brute, rel=1e-12)

    def test_single_view(self):
        with pytest.raises(UsageError):
            cross_view_contrastive_loss([np.eye(2)], 0.5)

    def test_gradient_fd(self):
        rng = np.random.default_rng(7)
        Ps = [rand_assign(rng, 5, 3) for _ in range(3)]
        _, grads = cross_view_contrastive_grad(Ps, 0.5)
        store = ParamStore()
        for i, P in enumerate(Ps):
            store.add(f"P{i}", P)
        fd = finite_difference_gradient(lambda: cross_view_contrastive_loss(Ps, 0.5), store)
        for g, f in zip(grads, fd):
            np.testing.assert_allclose(g, f, atol=1e-8)


# --- consistency regularizer ----------------------------------------------

class TestConsistency:
    def test_uniform_one_view(self):
        assert consistency_regularizer([np.full((6, 4), 0.25)]) == pytest.approx(-math.log(4), abs=1e-12)

    def test_all_in_one_cluster(self):
        P = np.zeros((5, 3))
        P[:, 1] = 1
        assert consistency_regularizer([P]) == 0.0

    def test_two_views_uniform(self):
        U = np.full((6, 3), 1 / 3)
        assert consistency_regularizer([U, U]) == pytest.approx(-2 * math.log(3), abs=1e-12)

    def test_gradient_at_uniform_constant(self):
        _, (g,) = consistency_grad([np.full((4, 3), 1 / 3)])
        expected = (math.log(1 / 3) + 1) / 4
        np.testing.assert_allclose(g, expected, atol=1e-15)

    def test_gradient_fd(self):
        rng = np.random.default_rng(8)
        P = rand_assign(rng, 6, 4)
        store = ParamStore()
        store.add("P", P)
        fd = finite_difference_gradient(lambda: consistency_regularizer([P]), store)[0]
        np.testing.assert_allclose(consistency_grad([P])[1][0], fd, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(2, 12), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_consistency_range(n_views, m, K, seed):
    rng = np.random.default_rng(seed)
    value = consistency_regularizer([rand_assign(rng, m, K) for _ in range(n_views)])
    assert -n_views * math.log(K) - 1e-12 <= value <= 0


# --- reconstruction and composite -----------------------------------------

class TestReconstruction:
    def test_perfect(self):
        X = np.arange(6.0).reshape(2, 3)
        assert reconstruction_loss([X], [X.copy()]) == 0

    def test_single(self):
        assert reconstruction_loss([np.array([[1.0, 2.0]])], [np.zeros((1, 2))]) == 5

    def test_additive(self):
        X, Xt = np.array([[1.0, 2.0]]), np.zeros((1, 2))
        assert reconstruction_loss([X, X], [Xt, Xt]) == 10

    def test_grad(self):
        rng = np.random.default_rng(9)
        X, Xt = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(reconstruction_grad([X], [Xt])[1][0], 2 * (Xt - X))

    def test_mean_flag(self):
        X, Xt = np.ones((4, 2)), np.zeros((4, 2))
        assert reconstruction_loss([X], [Xt], mean=True) == 2

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            reconstruction_loss([np.ones((2, 2))], [np.ones((2, 3))])


class TestFineTune:
    def test_weights_zero(self):
        rng = np.random.default_rng(10)
        Xs = [rng.normal(size=(4, 3)) for _ in range(2)]
        Xts = [rng.normal(size=(4, 3)) for _ in range(2)]
        Ps = [rand_assign(rng, 4, 3) for _ in range(2)]
        total, _ = fine_tune_loss(Xs, Xts, Ps, LossWeights(0.0, 0.0, 0.5))
        assert total == reconstruction_loss(Xs, Xts)

    def test_uniform_views(self):
        X = np.ones((4, 2))
        U = np.full((4, 3), 1 / 3)
        w = LossWeights(0.01, 0.01, 0.5)
        total, (l_pre, l_c, l_a) = fine_tune_loss([X, X], [X, X], [U, U], w)
        l_c_oracle = 0.5 * 2 * pair_loss_scalar(U.tolist(), U.tolist(), 0.5)
        assert l_pre == 0
        assert l_c == pytest.approx(l_c_oracle, rel=1e-13)
        assert total == pytest.approx(0.01 * l_c_oracle + 0.01 * (-2 * math.log(3)), rel=1e-13)

    def test_components_sum(self):
        rng = np.random.default_rng(12)
        Xs = [rng.normal(size=(5, 2)) for _ in range(3)]
        Xts = [rng.normal(size=(5, 2)) for _ in range(3)]
        Ps = [rand_assign(rng, 5, 4) for _ in range(3)]
        w = LossWeights(0.05, 0.005, 0.2)
        total, (l_pre, l_c, l_a) = fine_tune_loss(Xs, Xts, Ps, w)
        assert abs(total - (l_pre + w.alpha * l_c + w.beta * l_a)) <= 1e-12

    def test_weight_validation(self):
        with pytest.raises(ConfigurationError):
            LossWeights(tau=0.0)
        with pytest.raises(ConfigurationError):
            LossWeights(alpha=-1)


# --- compiled vs fallback kernels -----------------------------------------

@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-4)])
def test_backends_agree(dtype, tol):
    ck = kernels.available_backends()["cython"]
    rng = np.random.default_rng(13)
    for _ in range(20):
        m, K = rng.integers(2, 40), rng.integers(1, 7)
        A = rand_assign(rng, m, K).astype(dtype)
        B = rand_assign(rng, m, K).astype(dtype)
        G = rng.normal(size=(m, K)).astype(dtype)
        np.testing.assert_allclose(ck.target_distribution(A), _pykernels.target_distribution(A), atol=tol)
        np.testing.assert_allclose(
            ck.target_distribution_backward(A, G), _pykernels.target_distribution_backward(A, G),
            atol=tol * 10,
        )
        lc, dAc, dBc = ck.contrastive_pair(A, B, 0.5)
        lp, dAp, dBp = _pykernels.contrastive_pair(A, B, 0.5)
        assert lc == pytest.approx(lp, abs=tol * 10)
        np.testing.assert_allclose(dAc, dAp, atol=tol)
        np.testing.assert_allclose(dBc, dBp, atol=tol)
        vc, gc = ck.consistency(A)
        vp, gp = _pykernels.consistency(A)
        assert vc == pytest.approx(vp, abs=tol)
        np.testing.assert_allclose(gc, gp, atol=tol)
        assert ck.target_distribution(A).dtype == dtype
