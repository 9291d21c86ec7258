import warnings

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from randkrylov import make_sketch, recommend_dim
from randkrylov.errors import DomainError, ParameterError
from randkrylov.krylov import rand_arnoldi
from randkrylov.linear_solvers import rfom
from randkrylov.matrix_functions import (
    FunctionSpec,
    MatFunTask,
    fab,
    fab_arnoldi,
    fab_corrected,
    fab_sfom,
    fab_sfom_whitened,
    shifted_solves,
)

METHODS = ["arnoldi", "sfom_explicit", "sfom_whitened", "corrected"]


def _sketch(n, m, seed=0):
    return make_sketch("gaussian", n, recommend_dim(m + 1, "gaussian", n), seed=seed)


def _tridiag(n, diag=2.5, off=-1.0):
    return sp.diags([np.full(n - 1, off), np.full(n, diag), np.full(n - 1, off)], [-1, 0, 1]).tocsr()


def test_function_spec():
    f = FunctionSpec.monomial(3)
    assert f.coeffs == (0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ParameterError):
        FunctionSpec("cosh")
    with pytest.raises(ParameterError):
        FunctionSpec("polynomial")
    assert FunctionSpec("resolvent", 2.0).to_dict() == {"name": "resolvent", "shift": 2.0, "coeffs": None}


def test_task_validation(rng):
    with pytest.raises(ParameterError):
        MatFunTask("exp", np.eye(3), np.ones(3), 2, method="lanczos")
    with pytest.raises(ParameterError):
        fab_sfom(MatFunTask("exp", np.eye(3), np.ones(3), 2, method="sfom_explicit"))
    with pytest.raises(ParameterError):
        fab_corrected(MatFunTask("exp", np.eye(3), np.ones(3), 2, method="corrected"))


def test_arnoldi_identity_polynomial(rng):
    A = rng.standard_normal((40, 40))
    b = rng.standard_normal(40)
    x = fab_arnoldi(MatFunTask(FunctionSpec.monomial(1), A, b, 3))
    np.testing.assert_allclose(x, A @ b, atol=1e-12 * np.linalg.norm(A @ b))


def test_exp_of_zero(rng):
    b = rng.standard_normal(20)
    for method in ("arnoldi", "sfom_explicit"):
        x = fab(MatFunTask("exp", np.zeros((20, 20)), b, 1, method, op=make_sketch("gaussian", 20, 10)))
        np.testing.assert_allclose(x, b, atol=1e-14)


def test_arnoldi_full_space_exp(rng):
    n = 60
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    x = fab_arnoldi(MatFunTask("exp", A, b, n))
    ref = sla.expm(A) @ b
    np.testing.assert_allclose(x, ref, atol=1e-9 * np.linalg.norm(ref))


def test_sfom_identity_sketch_equals_arnoldi(rng):
    n = 80
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    op = make_sketch("identity", n, n)
    a = fab_arnoldi(MatFunTask("exp", A, b, 15))
    s = fab_sfom(MatFunTask("exp", A, b, 15, "sfom_explicit", op=op))
    np.testing.assert_allclose(s, a, atol=1e-10 * np.linalg.norm(a))


def test_sfom_square_exact(rng):
    n = 200
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    x = fab_sfom(MatFunTask(FunctionSpec.monomial(2), A, b, 5, "sfom_explicit", op=_sketch(n, 5)))
    ref = A @ (A @ b)
    np.testing.assert_allclose(x, ref, atol=1e-9 * np.linalg.norm(ref))


def test_resolvent_is_rfom(rng):
    n, m = 150, 20
    A = _tridiag(n, 3.0)
    b = rng.standard_normal(n)
    op = _sketch(n, m)
    t = 0.7
    x = fab_sfom(MatFunTask(FunctionSpec("resolvent", t), A, b, m, "sfom_explicit", op=op))
    At = (A + t * sp.eye_array(n)).tocsr()
    f = rfom(At, b, m, op, rtol=0)
    np.testing.assert_allclose(x, f.x, atol=1e-10 * np.linalg.norm(f.x))


def test_shifted_solves_share_basis(rng):
    n, m = 120, 25
    A = _tridiag(n, 3.0)
    b = rng.standard_normal(n)
    op = _sketch(n, m)
    shifts = [0.1, 0.5, 1.0, 2.0, 5.0]
    xs = shifted_solves(A, b, shifts, m, op)
    for t, x in zip(shifts, xs):
        ref = fab_sfom(MatFunTask(FunctionSpec("resolvent", t), A, b, m, "sfom_explicit", op=op))
        np.testing.assert_allclose(x, ref, atol=1e-12 * np.linalg.norm(ref))


def test_whitened_inactive_truncation(rng):
    n, m = 200, 20
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    op = _sketch(n, m)
    w = fab_sfom_whitened(MatFunTask("exp", A, b, m, "sfom_whitened", k=m, op=op))
    s = fab_sfom(MatFunTask("exp", A, b, m, "sfom_explicit", op=op))
    np.testing.assert_allclose(w, s, atol=1e-8 * np.linalg.norm(s))


def test_whitened_exp_tridiagonal():
    n, m = 500, 30
    A = _tridiag(n, 2.0)
    b = np.random.default_rng(1).standard_normal(n)
    ref = sla.expm(-A.toarray()) @ b
    mA = -A
    e_arn = np.linalg.norm(fab_arnoldi(MatFunTask("exp", mA, b, m)) - ref)
    x = fab_sfom_whitened(MatFunTask("exp", mA, b, m, "sfom_whitened", k=2, op=_sketch(n, m)))
    assert np.linalg.norm(x - ref) <= 10 * max(e_arn, 1e-15 * np.linalg.norm(ref))


@pytest.mark.parametrize("method", METHODS)
def test_eigenvector_one_step(method):
    n = 50
    A = np.diag(np.linspace(1, 2, n))
    b = np.zeros(n)
    b[7] = 2.0
    lam = A[7, 7]
    x = fab(MatFunTask("exp", A, b, 3, method, k=2, op=make_sketch("gaussian", n, 20, seed=0)))
    np.testing.assert_allclose(x, np.exp(lam) * b, atol=1e-9)


def test_corrected_on_orthonormal_basis(rng):
    n, m = 100, 12
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    c, info = fab_corrected(MatFunTask("exp", A, b, m, "corrected", k=m), return_info=True)
    a = fab_arnoldi(MatFunTask("exp", A, b, m))
    np.testing.assert_allclose(c, a, atol=1e-9 * np.linalg.norm(a))


def test_corrected_truncated_matches_arnoldi():
    n, m = 400, 25
    A = _tridiag(n, 2.0) * -0.5
    b = np.random.default_rng(2).standard_normal(n)
    A = A + sp.diags(np.linspace(0, 0.3, n), 0) + sp.diags(np.full(n - 2, 0.05), 2)
    c = fab_corrected(MatFunTask("exp", A, b, m, "corrected", k=2))
    a = fab_arnoldi(MatFunTask("exp", A, b, m))
    np.testing.assert_allclose(c, a, atol=1e-6 * np.linalg.norm(a))


def test_corrected_warns_on_lsqr_failure(monkeypatch, rng):
    import randkrylov.matrix_functions as mf

    def fake_lsqr(M, w, **kw):
        return (np.zeros(M.shape[1]), 7, 1) + (0,) * 7

    monkeypatch.setattr(mf, "lsqr", fake_lsqr)
    A = rng.standard_normal((30, 30))
    with pytest.warns(RuntimeWarning):
        x, info = fab_corrected(MatFunTask("exp", A, np.ones(30), 5, "corrected", k=2), return_info=True)
    assert info["flag"] == "lsqr_not_converged"
    assert np.all(np.isfinite(x))


def test_domain_violation_propagates():
    A = np.diag([-1.0, -2.0, -3.0])
    with pytest.raises(DomainError):
        fab_arnoldi(MatFunTask("log", A, np.ones(3), 3))


@pytest.mark.parametrize("method", METHODS)
def test_polynomial_exactness(method):
    n, m = 500, 8
    A = _tridiag(n, 2.0) / 4 + sp.diags(np.full(n - 1, 0.1), 1)
    b = np.random.default_rng(3).standard_normal(n)
    op = _sketch(n, m, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for j in range(m):
            ref = b.copy()
            for _ in range(j):
                ref = A @ ref
            x = fab(MatFunTask(FunctionSpec.monomial(j), A, b, m, method, k=2, op=op))
            np.testing.assert_allclose(x, ref, atol=1e-8 * np.linalg.norm(ref))
