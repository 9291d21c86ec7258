import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randkrylov import make_sketch, recommend_dim
from randkrylov.errors import BreakdownError, ShapeError, WhiteningError
from randkrylov.io import gen_svd_matrix
from randkrylov.krylov import truncated_arnoldi
from randkrylov.rand_qr import (
    block_rgs,
    cgs,
    rand_cholesky_qr,
    rgs,
    rhqr,
    rhqr_apply_q,
    whiten,
    whitened_apply,
)

from conftest import random_orthonormal


def _ident(n):
    return make_sketch("identity", n, n)


def _householder_qr(W):
    """Textbook Householder QR, the deterministic oracle."""
    A = np.array(W, dtype=float)
    n, m = A.shape
    Q = np.eye(n)
    for j in range(m):
        x = A[j:, j]
        v = x.copy()
        v[0] += np.copysign(np.linalg.norm(x), x[0])
        v /= np.linalg.norm(v)
        A[j:] -= 2 * np.outer(v, v @ A[j:])
        Q[:, j:] -= 2 * np.outer(Q[:, j:] @ v, v)
    return Q[:, :m], np.triu(A[:m])



def _measured_eps(op, W):
    U = np.linalg.qr(W)[0]
    sv = np.linalg.svd(op.apply(U), compute_uv=False)
    return max(sv.max() ** 2 - 1, 1 - sv.min() ** 2)


def _cond_bound(eps):
    return np.sqrt((1 + eps) / (1 - eps))


# randomized Cholesky QR

def test_chol_orthonormal_identity(rng):
    W = random_orthonormal(rng, 30, 5)
    F = rand_cholesky_qr(W, _ident(30))
    np.testing.assert_allclose(np.abs(F.R), np.eye(5), atol=1e-14)
    np.testing.assert_allclose(np.abs(F.Q), np.abs(W), atol=1e-14)


def test_chol_single_column():
    w = np.zeros((4, 1))
    w[1] = 3.0
    F = rand_cholesky_qr(w, _ident(4))
    np.testing.assert_allclose(F.R, [[3.0]])
    np.testing.assert_allclose(F.Q[:, 0], [0, 1, 0, 0])


def test_chol_conditioning(rng):
    U = random_orthonormal(rng, 512, 20)
    W = U * np.geomspace(1, 1e-4, 20)
    # at the textbook size 4m the measured distortion decides the bound
    op = make_sketch("gaussian", 512, 80, seed=1)
    F = rand_cholesky_qr(W, op)
    assert np.linalg.norm(F.S.T @ F.S - np.eye(20)) <= 1e-10
    assert np.linalg.cond(F.Q) <= _cond_bound(_measured_eps(op, W)) * (1 + 1e-8)
    op = make_sketch("gaussian", 512, recommend_dim(20, "gaussian", 512), seed=1)
    assert np.linalg.cond(rand_cholesky_qr(W, op).Q) <= 2


# randomized Gram-Schmidt

def test_rgs_identity_small():
    F = rgs(np.eye(3), _ident(3))
    np.testing.assert_allclose(F.Q, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(F.R, np.eye(3), atol=1e-15)


def test_rgs_identity_equals_cgs(rng):
    W = rng.standard_normal((60, 12))
    F = rgs(W, _ident(60))
    Q, R = cgs(W)
    np.testing.assert_allclose(F.Q, Q, atol=1e-12)
    np.testing.assert_allclose(F.R, R, atol=1e-12)


def test_rgs_svd_instance():
    W = gen_svd_matrix(1024, 30, 1e2, 1e-2, seed=0)
    op = make_sketch("gaussian", 1024, recommend_dim(30, "gaussian"), seed=0)
    F = rgs(W, op)
    assert np.linalg.norm(F.S.T @ F.S - np.eye(30), 2) <= 1e-12
    assert np.linalg.cond(F.Q) <= 2
    np.testing.assert_allclose(F.Q @ F.R, W, atol=1e-12 * np.linalg.norm(W))
    np.testing.assert_allclose(op.apply(F.Q), F.S, atol=1e-12)


def test_rgs_transpose_variant(rng):
    W = rng.standard_normal((200, 10))
    op = make_sketch("gaussian", 200, 100, seed=3)
    a = rgs(W, op, lstsq="pivoted")
    b = rgs(W, op, lstsq="transpose")
    np.testing.assert_allclose(a.R, b.R, atol=1e-10 * np.abs(a.R).max())


def test_rgs_breakdown(rng):
    W = rng.standard_normal((50, 4))
    W[:, 3] = W[:, 0] + W[:, 2]
    with pytest.raises(BreakdownError) as ei:
        rgs(W, make_sketch("gaussian", 50, 30, seed=0))
    assert ei.value.column == 3


def test_rgs_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        rgs(rng.standard_normal((40, 3)), make_sketch("gaussian", 50, 10))


# block variant

def test_block_rgs_b1_bitwise(rng):
    W = rng.standard_normal((100, 8))
    op = make_sketch("gaussian", 100, 50, seed=2)
    assert np.array_equal(block_rgs(W, op, 1).R, rgs(W, op).R)


def test_block_rgs_matches_rgs(rng):
    W = rng.standard_normal((1024, 32))
    op = make_sketch("gaussian", 1024, 300, seed=2)
    Rb = block_rgs(W, op, 4).R
    Rr = rgs(W, op).R
    assert np.linalg.norm(Rb - Rr) <= 1e-10 * np.linalg.norm(Rr)


def test_block_rgs_single_block(rng):
    W = rng.standard_normal((300, 10))
    op = make_sketch("gaussian", 300, 100, seed=2)
    F = block_rgs(W, op, 10)
    assert np.linalg.norm(F.S.T @ F.S - np.eye(10)) <= 1e-12
    F = block_rgs(W, op, 3)  # trailing partial block
    np.testing.assert_allclose(F.Q @ F.R, W, atol=1e-12 * np.abs(W).max())


# randomized Householder

def test_rhqr_single_column():
    w = np.zeros((6, 1))
    w[0] = 1.0
    F = rhqr(w, make_sketch("gaussian", 5, 3, seed=0))
    np.testing.assert_allclose(F.U[:, 0], 2 * w[:, 0])
    np.testing.assert_allclose(F.T, [[0.5]])
    np.testing.assert_allclose(F.R, [[-1.0]])
    np.testing.assert_allclose(rhqr_apply_q(F, np.array([1.0])), -w[:, 0])


def test_rhqr_identity_is_householder(rng):
    W = rng.standard_normal((40, 7))
    F = rhqr(W, _ident(33))
    Qh, Rh = _householder_qr(W)
    np.testing.assert_allclose(np.abs(F.R), np.abs(Rh), atol=1e-12)
    Q = F.Q
    signs = np.sign(np.sum(Q * Qh, axis=0))
    np.testing.assert_allclose(Q * signs, Qh, atol=1e-12)


def test_rhqr_hard_instance():
    W = gen_svd_matrix(2048, 30, 1e4, 1e-4, seed=0)
    op = make_sketch("gaussian", 2048 - 30, recommend_dim(30, "gaussian"), seed=0)
    F = rhqr(W, op)
    Q = F.Q
    S = F.psi.apply(Q)
    assert np.linalg.norm(S.T @ S - np.eye(30), 2) <= 1e-10
    assert np.linalg.cond(Q) <= 2
    np.testing.assert_allclose(rhqr_apply_q(F, F.R), W, atol=1e-12 * np.linalg.norm(W))


def test_rhqr_textbook_size_bound():
    W = gen_svd_matrix(2048, 30, 1e4, 1e-4, seed=0)
    op = make_sketch("gaussian", 2018, 120, seed=0)
    F = rhqr(W, op)
    S = F.psi.apply(F.Q)
    assert np.linalg.norm(S.T @ S - np.eye(30), 2) <= 1e-10
    # with Psi Q orthonormal, cond(Q) equals cond(Psi U) for any orthonormal basis U of range(Q)
    U = np.linalg.qr(F.Q)[0]
    np.testing.assert_allclose(np.linalg.cond(F.Q), np.linalg.cond(F.psi.apply(U)), rtol=1e-8)


def test_rhqr_apply_zero(rng):
    W = rng.standard_normal((30, 4))
    F = rhqr(W, make_sketch("gaussian", 26, 12, seed=1))
    np.testing.assert_array_equal(rhqr_apply_q(F, np.zeros(4)), np.zeros(30))
    with pytest.raises(ShapeError):
        rhqr_apply_q(F, np.zeros(5))


def test_rhqr_breakdown():
    W = np.zeros((10, 2))
    W[0, 0] = 1.0
    W[0, 1] = 2.0
    with pytest.raises(BreakdownError):
        rhqr(W, make_sketch("gaussian", 8, 4, seed=0))


# whitening

def test_whiten_sketch_orthonormal_gives_identity(rng):
    W = random_orthonormal(rng, 25, 4)
    B = whiten(W, _ident(25))
    np.testing.assert_allclose(np.abs(B.R), np.eye(4), atol=1e-14)


def test_whiten_identity_is_qr(rng):
    from randkrylov.dense_core import qr_small

    W = rng.standard_normal((40, 6))
    np.testing.assert_allclose(whiten(W, _ident(40)).R, qr_small(W)[1], atol=1e-13)


def test_whiten_truncated_arnoldi_basis():
    n = 500
    d = np.linspace(1, 10, n)
    A = np.diag(d) + np.diag(np.full(n - 1, 0.3), 1)
    T = truncated_arnoldi(A, np.ones(n), 40, 2)
    op = make_sketch("gaussian", n, recommend_dim(41, "gaussian", n), seed=4)
    B = whiten(T.W[:, :40], op)
    assert np.linalg.cond(B.materialize()) <= 2


def test_whiten_failure():
    W = np.ones((20, 3))
    with pytest.raises(WhiteningError) as ei:
        whiten(W, make_sketch("gaussian", 20, 10, seed=0))
    assert ei.value.column == 1


def test_whitened_apply(rng):
    W = rng.standard_normal((50, 5))
    B = whiten(W, make_sketch("gaussian", 50, 25, seed=0))
    np.testing.assert_allclose(whitened_apply(B, B.R[:, 2]), W[:, 2], atol=1e-12)
    np.testing.assert_array_equal(whitened_apply(B, np.zeros(5)), np.zeros(50))
    y = rng.standard_normal(5)
    ref = B.materialize() @ y
    np.testing.assert_allclose(whitened_apply(B, y), ref, rtol=1e-12, atol=1e-12 * np.linalg.norm(ref))


def test_cgs_basic(rng):
    W = rng.standard_normal((20, 5))
    Q, R = cgs(W)
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-13)
    np.testing.assert_allclose(Q @ R, W, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 12), kind=st.sampled_from(["gaussian", "s_hashing", "srht"]))
def test_rgs_invariants(seed, m, kind):
    r = np.random.default_rng(seed)
    n = 128
    W = r.standard_normal((n, m))
    op = make_sketch(kind, n, 100, seed=seed)
    F = rgs(W, op)
    np.testing.assert_allclose(F.S.T @ F.S, np.eye(m), atol=1e-12)
    np.testing.assert_allclose(F.Q @ F.R, W, atol=1e-11 * np.abs(W).max())
    np.testing.assert_array_equal(F.R, np.triu(F.R))
    assert np.all(np.diag(F.R) > 0)
