import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import fmlsmr as f
from fmlsmr.diagnostics import (
    CostModel,
    flop_model,
    jacobi_singular_values,
    nres,
    normalized_backward_error,
    optimal_backward_error,
    stewart_backward_error,
    stewart_perturbation,
    storage_matrices,
    storage_model,
)

from .oracles import dense_nres, random_sparse


def svd_oracle(D, x, b):
    r = b - D @ x
    u = r / np.linalg.norm(r)
    block = np.hstack([D, np.linalg.norm(r) / np.linalg.norm(x) * (np.eye(len(b)) - np.outer(u, u))])
    return np.linalg.svd(block, compute_uv=False)[-1]


def triple(rng, m=10, n=4):
    D = random_sparse(rng, m, n, 0.7)
    return D, f.from_dense(D), rng.standard_normal(n), rng.standard_normal(m)


# nres


def test_nres_identity_e1():
    b = np.array([1.0, 0.0, 0.0])
    assert nres(f.from_dense(np.eye(3)), np.zeros(3), b) == 1.0


def test_nres_at_lstsq_solution(rng):
    D, A, _, b = triple(rng)
    x = np.linalg.lstsq(D, b, rcond=None)[0]
    assert nres(A, x, b) <= 1e-15


def test_nres_matches_dense(rng):
    D, A, x, b = triple(rng, 8, 5)
    assert nres(A, x, b) == pytest.approx(dense_nres(D, x, b), rel=1e-14)
    assert nres(A, x, b, a_norm1=np.abs(D).sum(axis=0).max()) == nres(A, x, b)


def test_nres_undefined():
    A = f.from_dense(np.zeros((2, 2)))
    with pytest.raises(ZeroDivisionError):
        nres(A, np.ones(2), np.ones(2))
    with pytest.raises(f.DimensionError):
        nres(f.from_dense(np.eye(2)), np.ones(3), np.ones(2))


# Stewart estimate


def test_stewart_examples(rng):
    A = f.from_dense(np.array([[1.0], [0.0]]))
    assert stewart_backward_error(A, np.zeros(1), np.array([0.0, 1.0])) == 0.0
    assert stewart_backward_error(f.from_dense(np.eye(2)), np.ones(2), np.ones(2)) == 0.0
    D, A, _, b = triple(rng)
    x = np.linalg.lstsq(D, b, rcond=None)[0]
    assert stewart_backward_error(A, x, b) <= 1e-14


def test_stewart_perturbation_is_feasible(rng):
    D, A, x, b = triple(rng)
    E = stewart_perturbation(A, x, b)
    P = D + E
    gap = np.linalg.norm(P.T @ (b - P @ x))
    assert gap <= 1e-12 * np.abs(D).sum(axis=0).max()
    assert np.linalg.norm(E, 2) == pytest.approx(stewart_backward_error(A, x, b), rel=1e-12)
    assert normalized_backward_error(A, x, b) == pytest.approx(
        stewart_backward_error(A, x, b) / np.abs(D).sum(axis=0).max(), rel=1e-15)


# optimal backward error


def test_optimal_matches_svd_oracle(rng):
    for _ in range(10):
        D, A, x, b = triple(rng)
        opt = optimal_backward_error(A, x, b)
        assert opt == pytest.approx(svd_oracle(D, x, b), rel=1e-10)
        assert opt <= stewart_backward_error(A, x, b)


def test_optimal_at_lstsq_solution(rng):
    D, A, _, b = triple(rng)
    x = np.linalg.lstsq(D, b, rcond=None)[0]
    assert optimal_backward_error(A, x, b) <= 1e-13 * np.linalg.norm(D, 2)
    assert optimal_backward_error(f.from_dense(np.eye(2)), np.ones(2), np.ones(2)) == 0.0


def test_optimal_errors(rng):
    _, A, x, b = triple(rng)
    with pytest.raises(ValueError):
        optimal_backward_error(A, np.zeros(4), b)
    with pytest.raises(f.DenseCapError):
        optimal_backward_error(A, x, b, cap=13)
    big = f.from_dense(np.eye(1001))
    with pytest.raises(f.DenseCapError):
        optimal_backward_error(big, np.ones(1001), np.zeros(1001))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_optimal_never_exceeds_stewart(m, n, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((m, n))
    x, b = rng.standard_normal(n), rng.standard_normal(m)
    A = f.from_dense(D)
    if np.linalg.norm(b - D @ x) < 1e-8:
        return
    assert optimal_backward_error(A, x, b) <= stewart_backward_error(A, x, b) * (1 + 1e-12)


# Jacobi SVD


@pytest.mark.parametrize("shape", [(7, 7), (9, 4), (4, 9), (12, 5), (1, 3), (5, 1)])
def test_jacobi_matches_numpy(rng, shape):
    G = rng.standard_normal(shape)
    np.testing.assert_allclose(jacobi_singular_values(G), np.linalg.svd(G, compute_uv=False),
                               rtol=1e-12, atol=1e-14)


def test_jacobi_graded_small_values():
    # small singular values keep high relative accuracy
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))[0]
    s = np.logspace(0, -12, 6)
    sv = jacobi_singular_values(Q * s)
    np.testing.assert_allclose(sv, s, rtol=1e-8)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e10, 1e10, allow_nan=False, allow_subnormal=False)))
def test_jacobi_property(G):
    ref = np.linalg.svd(G, compute_uv=False)
    got = jacobi_singular_values(G)
    tol = 1e-12 * max(ref.max(), 1e-300) * max(G.shape)
    assert got.shape == ref.shape
    assert np.all(np.abs(got - ref) <= tol + 1e-300)


def test_jacobi_rejects_bad_input():
    with pytest.raises(f.DimensionError):
        jacobi_singular_values(np.ones(3))
    with pytest.raises(ValueError):
        jacobi_singular_values(np.array([[1.0, np.inf]]))


def test_jacobi_extreme_scales():
    for s in (1e-200, 1e200):
        G = s * np.array([[3.0, 0.0], [4.0, 1.0]])
        np.testing.assert_allclose(jacobi_singular_values(G), np.linalg.svd(G, compute_uv=False),
                                   rtol=1e-13)
    np.testing.assert_array_equal(jacobi_singular_values(np.zeros((3, 2))), [0.0, 0.0])


# cost models


def test_flop_model_examples():
    assert flop_model(CostModel("lsmr", 1, 0, 1, 1, 1)) == 14
    k, m, n, nnz = sympy.symbols("k m n nnz", nonnegative=True)
    zero = flop_model(CostModel("fmlsmr", k, 0, m, n, nnz))
    assert sympy.expand(zero - (4 * k * 2 * nnz + (12 * n + 2 * m) * k)) == 0
    fm = flop_model(CostModel("fmlsmr", 100, 8, 10**4, 10**4, 5 * 10**4))
    fl = flop_model(CostModel("flsmr", 100, 8, 10**4, 10**4, 5 * 10**4))
    assert fm < fl


def test_flop_model_symbolic_rows():
    k, ell, m, n, nnz = sympy.symbols("k ell m n nnz", nonnegative=True)
    mv = 2 * nnz
    inner = (2 * ell + 4) * k * mv + 8 * k * ell * n + 4 * k * ell**2
    cm = lambda meth: CostModel(meth, k, ell, m, n, nnz)
    assert sympy.expand(flop_model(cm("lsmr")) - (2 * k * mv + (8 * n + 2 * m) * k)) == 0
    assert sympy.expand(flop_model(cm("fmlsmr")) - inner - (12 * n + 2 * m) * k) == 0
    fl = inner + sympy.Rational(2, 3) * k**3 + 2 * (m + n + 1) * k**2
    assert sympy.simplify(flop_model(cm("flsmr")) - fl) == 0
    assert isinstance(flop_model(CostModel("flsmr", 3, 1, 1, 1, 1)), int)


def test_storage_model_examples():
    assert storage_model(CostModel("lsmr", 7)) == (3, 5)
    assert storage_model(CostModel("fmlsmr", 10**6)) == (3, 7)
    assert storage_model(CostModel("flsmr", 10)) == (14, 13)
    assert storage_matrices(CostModel("flsmr", 10)) == ("T_{k+1}", "P_{k+1}")
    assert storage_matrices(CostModel("fmlsmr", 10)) == ()


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel("mlsmr", 1)
    with pytest.raises(ValueError):
        CostModel("lsmr", -1)
    assert CostModel("lsmr", 1, nnz=3).mv == 6
