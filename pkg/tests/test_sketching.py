import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from randkrylov import _kernels_py, make_sketch, recommend_dim, wrap_psi, fwht
from randkrylov.errors import ParameterError, ShapeError
from randkrylov.sketching import SketchOperator

from conftest import random_orthonormal


def test_identity_returns_input(rng):
    x = rng.standard_normal(17)
    op = make_sketch("identity", 17, 17)
    np.testing.assert_array_equal(op.apply(x), x)


def test_identity_requires_square():
    with pytest.raises(ParameterError):
        make_sketch("identity", 10, 5)


@pytest.mark.parametrize("kind", ["gaussian", "s_hashing", "srht"])
def test_same_seed_same_output(kind, rng):
    x = rng.standard_normal(50)
    a = make_sketch(kind, 50, 20, seed=7).apply(x)
    b = make_sketch(kind, 50, 20, seed=7).apply(x)
    c = make_sketch(kind, 50, 20, seed=8).apply(x)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_scaling():
    op = make_sketch("gaussian", 2000, 400, seed=1)
    M = op.to_dense()
    # entries are N(0, 1/l)
    assert abs(M.var() * 400 - 1.0) < 0.02


def test_hashing_column_structure():
    op = make_sketch("s_hashing", 300, 40, seed=3, s=5)
    M = op.to_dense()
    nnz = np.count_nonzero(M, axis=0)
    assert np.all(nnz == 5)
    np.testing.assert_allclose(np.abs(M[M != 0]), 1 / np.sqrt(5), rtol=0, atol=1e-15)


def test_hashing_default_s():
    assert make_sketch("s_hashing", 100, 30).s == 8
    assert make_sketch("s_hashing", 100, 4).s == 4


def test_srht_matches_explicit_product():
    n, l = 37, 12
    op = make_sketch("srht", n, l, seed=11)
    n_pad = 64
    H = sla.hadamard(n_pad) / np.sqrt(n_pad)
    D = np.diag(op._state["signs"])
    P = np.eye(n_pad)[op._state["rows"]]
    ref = np.sqrt(n_pad / l) * (P @ H @ D)[:, :n]
    np.testing.assert_allclose(op.to_dense(), ref, atol=1e-14)


def test_srht_rows_without_replacement():
    op = make_sketch("srht", 100, 128, seed=2)
    assert len(set(op._state["rows"].tolist())) == 128
    # sampling every row gives an isometry
    x = np.random.default_rng(0).standard_normal(100)
    assert abs(np.linalg.norm(op.apply(x)) - np.linalg.norm(x)) < 1e-12


def test_srht_too_large():
    with pytest.raises(ParameterError):
        make_sketch("srht", 100, 129)


@pytest.mark.parametrize("kind", ["gaussian", "s_hashing"])
def test_l_larger_than_n_rejected(kind):
    with pytest.raises(ParameterError):
        make_sketch(kind, 10, 11)


def test_unknown_kind():
    with pytest.raises(ParameterError):
        make_sketch("fourier", 10, 5)


def test_apply_shape_errors():
    op = make_sketch("gaussian", 10, 5)
    with pytest.raises(ShapeError):
        op.apply(np.ones(9))
    with pytest.raises(ShapeError):
        op.apply(np.ones((10, 2, 2)))


@pytest.mark.parametrize("kind", ["gaussian", "s_hashing", "srht", "identity"])
def test_matrix_apply_matches_columns(kind, rng):
    l = 30 if kind != "identity" else 30
    op = make_sketch(kind, 30, l, seed=5)
    X = rng.standard_normal((30, 4))
    Y = op @ X
    for j in range(4):
        np.testing.assert_allclose(Y[:, j], op.apply(X[:, j]), rtol=0, atol=1e-14)


@pytest.mark.parametrize("kind", ["gaussian", "s_hashing", "srht"])
def test_dict_roundtrip(kind, rng):
    op = make_sketch(kind, 64, 16, seed=99)
    op2 = SketchOperator.from_dict(op.to_dict())
    x = rng.standard_normal(64)
    np.testing.assert_array_equal(op.apply(x), op2.apply(x))


def test_psi_wrapper(rng):
    inner = make_sketch("gaussian", 40, 10, seed=4)
    psi = wrap_psi(inner, 5)
    assert psi.n == 45 and psi.output_dim == 15
    x = rng.standard_normal(45)
    y = psi.apply(x)
    np.testing.assert_array_equal(y[:5], x[:5])
    np.testing.assert_allclose(y[5:], inner.apply(x[5:]), rtol=0, atol=1e-15)
    with pytest.raises(ParameterError):
        wrap_psi(psi, 2)
    rt = SketchOperator.from_dict(psi.to_dict())
    np.testing.assert_array_equal(rt.apply(x), y)


def test_fwht_against_hadamard(rng):
    x = rng.standard_normal((16, 3))
    ref = sla.hadamard(16) @ x / 4.0
    np.testing.assert_allclose(fwht(x), ref, atol=1e-14)
    np.testing.assert_allclose(fwht(fwht(x)), x, atol=1e-14)


def test_fwht_rejects_non_power_of_two():
    with pytest.raises(ShapeError):
        fwht(np.ones(12))


def test_recommend_dim():
    assert recommend_dim(30, "gaussian") == 600
    assert recommend_dim(30, "gaussian", gaussian_factor=4) == 120
    assert recommend_dim(30, "gaussian", n=100) == 100
    assert recommend_dim(10, "s_hashing", log_factor=2) == int(np.ceil(20 * np.log(10)))
    assert recommend_dim(50, "srht", n=1000) == 1024
    assert recommend_dim(5, "identity", n=77) == 77
    with pytest.raises(ParameterError):
        recommend_dim(0, "gaussian")


@pytest.mark.parametrize("kind", ["gaussian", "s_hashing", "srht"])
def test_embedding_quality_at_recommended_size(kind):
    # a high-probability guarantee, so count seeds instead of trusting one draw
    n, m = 2048, 20
    Q = random_orthonormal(np.random.default_rng(1), n, m)
    ok = 0
    for seed in range(20):
        op = make_sketch(kind, n, recommend_dim(m, kind, n), seed=seed)
        sv = np.linalg.svd(op.apply(Q), compute_uv=False)
        ok += sv.max() ** 2 <= 1.6 and sv.min() ** 2 >= 0.4
    assert ok >= 18


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(["gaussian", "s_hashing", "srht"]),
    n=st.integers(2, 80),
    seed=st.integers(0, 2**32),
    a=st.floats(-10, 10),
)
def test_linearity(kind, n, seed, a):
    l = max(1, n // 2)
    op = make_sketch(kind, n, l, seed=seed)
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(n), r.standard_normal(n)
    lhs = op.apply(a * x + y)
    rhs = a * op.apply(x) + op.apply(y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + abs(a)) * np.sqrt(n))


def test_python_kernels_match_compiled(rng):
    compiled = pytest.importorskip("randkrylov._kernels")
    X = rng.standard_normal((256, 5))
    a, b = X.copy(), X.copy()
    compiled.fwht_inplace(a)
    _kernels_py.fwht_inplace(b)
    assert np.array_equal(a, b)
    op = make_sketch("s_hashing", 500, 37, seed=1, s=4)
    rows, vals = np.array(op._state["rows"]), np.array(op._state["vals"])
    Y = rng.standard_normal((500, 3))
    o1, o2 = np.zeros((37, 3)), np.zeros((37, 3))
    compiled.hash_apply(rows, vals, Y, o1)
    _kernels_py.hash_apply(rows, vals, Y, o2)
    assert np.array_equal(o1, o2)


def test_backend_override_subprocess():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c", "import randkrylov; print(randkrylov.BACKEND)"],
        env={"RANDKRYLOV_BACKEND": "python", "PATH": ""}, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
