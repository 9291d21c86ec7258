import mpmath
import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from randkrylov.dense_core import (
    hessenberg_eig,
    horner,
    lstsq_small,
    matfun_small,
    qr_small,
    real_schur,
    schur_reorder,
    sylvester_small,
)
from randkrylov.errors import DomainError, ParameterError, ShapeError, SingularEquationError, SingularFactorError


def test_qr_small_properties(rng):
    A = rng.standard_normal((40, 7))
    Q, R = qr_small(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(7), atol=1e-14)
    np.testing.assert_allclose(Q @ R, A, atol=1e-13)
    assert np.all(np.diag(R) > 0)
    np.testing.assert_array_equal(R, np.triu(R))


def test_qr_small_identity():
    Q, R = qr_small(np.eye(3))
    np.testing.assert_array_equal(Q, np.eye(3))
    np.testing.assert_array_equal(R, np.eye(3))


def test_qr_small_singular_column(rng):
    A = rng.standard_normal((10, 3))
    A[:, 2] = A[:, 0] - 2 * A[:, 1]
    with pytest.raises(SingularFactorError) as ei:
        qr_small(A)
    assert ei.value.index == 2


def test_qr_small_rejects_wide():
    with pytest.raises(ShapeError):
        qr_small(np.ones((2, 3)))


def test_lstsq_identity_and_orthonormal(rng):
    b = rng.standard_normal(5)
    np.testing.assert_allclose(lstsq_small(np.eye(5), b), b, atol=1e-15)
    Q = np.linalg.qr(rng.standard_normal((20, 4)))[0]
    c = rng.standard_normal(20)
    np.testing.assert_allclose(lstsq_small(Q, c), Q.T @ c, atol=1e-14)


def test_lstsq_normal_equations(rng):
    A = rng.standard_normal((30, 6))
    b = rng.standard_normal(30)
    x = lstsq_small(A, b)
    np.testing.assert_allclose(A.T @ (A @ x - b), 0, atol=1e-12)


def test_lstsq_rank_deficient_min_norm(rng):
    A = rng.standard_normal((12, 4))
    A[:, 3] = A[:, 0] + A[:, 1]
    b = rng.standard_normal(12)
    x, rank = lstsq_small(A, b, return_rank=True)
    assert rank == 3
    np.testing.assert_allclose(x, np.linalg.pinv(A) @ b, atol=1e-10)


def test_lstsq_multiple_rhs(rng):
    A = rng.standard_normal((15, 3))
    B = rng.standard_normal((15, 2))
    X = lstsq_small(A, B)
    np.testing.assert_allclose(X, np.linalg.lstsq(A, B, rcond=None)[0], atol=1e-12)


def _mp_eigvals(A):
    ev, _ = mpmath.eig(mpmath.matrix(A.tolist()))
    return np.array(sorted((complex(v) for v in ev), key=lambda z: (round(z.real, 8), z.imag)))


def test_real_schur_relation_and_eigenvalues(rng):
    A = rng.standard_normal((8, 8))
    F = real_schur(A)
    np.testing.assert_allclose(F.Q @ F.T @ F.Q.T, A, atol=1e-13)
    np.testing.assert_allclose(F.Q.T @ F.Q, np.eye(8), atol=1e-14)
    assert np.all(np.tril(F.T, -2) == 0)
    for i, size in F.blocks():
        if size == 2:
            assert F.T[i + 1, i] != 0
    got = np.array(sorted(F.eigvals, key=lambda z: (round(z.real, 8), z.imag)))
    np.testing.assert_allclose(got, _mp_eigvals(A), atol=1e-12)


def test_real_schur_rotation_block():
    F = real_schur(np.array([[0.0, -1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(sorted(F.eigvals, key=lambda z: z.imag), [-1j, 1j], atol=1e-15)


def test_schur_reorder_moves_selection(rng):
    A = rng.standard_normal((10, 10))
    F = real_schur(A)
    target = F.eigvals[np.argmax(np.abs(F.eigvals))]
    sel = np.isclose(F.eigvals, target) | np.isclose(F.eigvals, np.conj(target))
    k = int(sel.sum())
    G = schur_reorder(F, sel)
    np.testing.assert_allclose(G.Q @ G.T @ G.Q.T, A, atol=1e-12)
    np.testing.assert_allclose(np.sort_complex(G.eigvals[:k]), np.sort_complex(F.eigvals[sel]), atol=1e-12)


def test_schur_reorder_predicate():
    A = np.diag([1.0, 5.0, 2.0, 7.0])
    G = schur_reorder(real_schur(A), lambda z: z.real > 4)
    np.testing.assert_allclose(sorted(G.eigvals[:2].real), [5.0, 7.0])


def test_schur_reorder_split_pair_rejected():
    A = np.array([[0.0, -1.0, 0.3], [1.0, 0.0, 0.2], [0.0, 0.0, 3.0]])
    F = real_schur(A)
    mask = np.zeros(3, dtype=bool)
    pair = [i for i, s in F.blocks() if s == 2][0]
    mask[pair] = True
    with pytest.raises(ParameterError):
        schur_reorder(F, mask)


def test_hessenberg_eig(rng):
    G = np.triu(rng.standard_normal((9, 9)), -1)
    w, Y = hessenberg_eig(G)
    np.testing.assert_allclose(G @ Y, Y * w, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(Y, axis=0), 1.0, atol=1e-14)


def _taylor_exp(G, terms=60):
    out = np.eye(G.shape[0])
    term = np.eye(G.shape[0])
    for j in range(1, terms):
        term = term @ G / j
        out = out + term
    return out


def test_exp_against_taylor(rng):
    G = rng.standard_normal((6, 6)) * 0.3
    np.testing.assert_allclose(matfun_small(G, "exp"), _taylor_exp(G), atol=1e-13)


def test_exp_of_diagonal():
    d = np.array([0.0, 1.0, -2.0])
    np.testing.assert_allclose(matfun_small(np.diag(d), "exp"), np.diag(np.exp(d)), rtol=1e-14)


def test_inv_and_resolvent(rng):
    G = rng.standard_normal((5, 5)) + 4 * np.eye(5)
    np.testing.assert_allclose(matfun_small(G, "inv") @ G, np.eye(5), atol=1e-13)
    R = matfun_small(G, "resolvent", t=1.5)
    np.testing.assert_allclose(R @ (G + 1.5 * np.eye(5)), np.eye(5), atol=1e-13)


def test_invsqrt_and_log_spd(rng):
    B = rng.standard_normal((6, 6))
    G = B @ B.T + 6 * np.eye(6)
    X = matfun_small(G, "invsqrt")
    np.testing.assert_allclose(X @ X @ G, np.eye(6), atol=1e-12)
    L = matfun_small(G, "log")
    np.testing.assert_allclose(sla.expm(L), G, rtol=1e-12, atol=1e-12 * np.abs(G).max())


def test_polynomial_horner(rng):
    G = rng.standard_normal((4, 4))
    c = [1.0, -2.0, 0.5, 3.0]
    ref = c[0] * np.eye(4) + c[1] * G + c[2] * G @ G + c[3] * G @ G @ G
    np.testing.assert_allclose(matfun_small(G, "polynomial", coeffs=c), ref, atol=1e-13)
    np.testing.assert_allclose(horner(G, [0, 0, 1]), G @ G, atol=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        matfun_small(np.diag([1.0, -1.0]), "log")
    with pytest.raises(DomainError):
        matfun_small(np.diag([1.0, 0.0]), "inv")
    with pytest.raises(DomainError):
        matfun_small(np.diag([1.0, -2.0]), "resolvent", t=2.0)
    with pytest.raises(DomainError):
        matfun_small(np.diag([4.0, -1.0]), "invsqrt")
    with pytest.raises(ParameterError):
        matfun_small(np.eye(2), "sinh")


def test_sylvester_small_against_kronecker(rng):
    A = rng.standard_normal((5, 5)) + 3 * np.eye(5)
    B = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    C = rng.standard_normal((5, 4))
    X = sylvester_small(A, B, C)
    K = np.kron(np.eye(4), A) + np.kron(B.T, np.eye(5))
    ref = np.linalg.solve(K, C.flatten(order="F")).reshape((5, 4), order="F")
    np.testing.assert_allclose(X, ref, atol=1e-12)


def test_sylvester_small_overlap():
    with pytest.raises(SingularEquationError):
        sylvester_small(np.diag([1.0, 2.0]), np.diag([-2.0, 5.0]), np.ones((2, 2)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(-1e3, 1e3)))
def test_qr_small_reconstructs(A):
    try:
        Q, R = qr_small(A)
    except SingularFactorError:
        return
    scale = max(1.0, np.abs(A).max())
    np.testing.assert_allclose(Q @ R, A, atol=1e-12 * scale)
    assert np.all(np.diag(R) >= 0)
