import gc

import numpy as np
import pytest

import fmlsmr as f
from fmlsmr import inner
from fmlsmr.inner import (
    DiagonalPreconditioner,
    InnerSolverConfig,
    SPDPreconditioner,
    apply_fixed_spd,
    cg_normal,
    minres_normal,
)
from fmlsmr.sparsemat import FlopCounter

from .oracles import random_sparse, random_spd

SOLVERS = {"minres": minres_normal, "cg": cg_normal}


@pytest.mark.parametrize("method", SOLVERS)
def test_identity_one_step(method, rng):
    p = rng.standard_normal(5)
    v = SOLVERS[method](f.from_dense(np.eye(5)), p, InnerSolverConfig(method, 1))
    np.testing.assert_allclose(v, p, rtol=0, atol=1e-14)


@pytest.mark.parametrize("method", SOLVERS)
def test_full_steps_match_dense_solve(method, rng):
    D = random_sparse(rng, 10, 6, 0.8)
    p = rng.standard_normal(6)
    v = SOLVERS[method](f.from_dense(D), p, InnerSolverConfig(method, 6))
    ref = np.linalg.solve(D.T @ D, p)
    assert np.linalg.norm(v - ref) <= 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("method", SOLVERS)
def test_one_step_is_scalar_multiple(method, rng):
    D = random_sparse(rng, 12, 7, 0.6)
    p = rng.standard_normal(7)
    v = SOLVERS[method](f.from_dense(D), p, InnerSolverConfig(method, 1))
    omega = np.dot(v, p) / np.dot(p, p)
    np.testing.assert_allclose(v, omega * p, atol=1e-14 * np.linalg.norm(v))


def test_cg_and_minres_agree_at_n_steps(rng):
    n = 8
    D = random_sparse(rng, 14, n, 0.7)
    A = f.from_dense(D)
    p = rng.standard_normal(n)
    a = minres_normal(A, p, InnerSolverConfig("minres", n))
    b = cg_normal(A, p, InnerSolverConfig("cg", n))
    assert np.linalg.norm(a - b) <= 1e-7 * np.linalg.norm(a)


def test_shift(rng):
    D = random_sparse(rng, 9, 5, 0.8)
    p = rng.standard_normal(5)
    for method in SOLVERS:
        v = SOLVERS[method](f.from_dense(D), p, InnerSolverConfig(method, 5, shift=0.3))
        np.testing.assert_allclose((D.T @ D + 0.3 * np.eye(5)) @ v, p, atol=1e-9)


def test_minres_residual_non_increasing(rng):
    D = random_sparse(rng, 40, 25, 0.3, cond=1e3)
    A = f.from_dense(D)
    p = rng.standard_normal(25)
    N = D.T @ D
    res = []
    for steps in range(1, 16):
        v, info = minres_normal(A, p, InnerSolverConfig("minres", steps), full_output=True)
        res.append(np.linalg.norm(N @ v - p))
        assert info.steps == steps
        assert info.residual_norm == pytest.approx(res[-1], rel=1e-6)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res, res[1:]))


def test_early_exit_only_when_exact():
    A = f.from_dense(np.diag([1.0, 2.0, 3.0]))
    p = np.array([1.0, 0.0, 0.0])  # eigenvector: exact after one step
    v, info = minres_normal(A, p, InnerSolverConfig("minres", 5), full_output=True)
    assert info.steps == 1
    np.testing.assert_allclose(v, p)


def test_cg_stagnation_flag():
    A = f.from_dense(np.array([[1.0, 0.0], [0.0, 0.0]]))
    v, info = cg_normal(A, np.array([0.0, 1.0]), InnerSolverConfig("cg", 3), full_output=True)
    assert info.stagnated and info.steps == 0
    np.testing.assert_array_equal(v, 0.0)


def test_zero_rhs():
    A = f.from_dense(np.eye(3))
    for method in SOLVERS:
        v = SOLVERS[method](A, np.zeros(3), InnerSolverConfig(method, 2))
        np.testing.assert_array_equal(v, 0.0)


def test_flop_accounting(rng):
    D = random_sparse(rng, 30, 20, 0.3)
    A = f.from_dense(D)
    ell, n = 5, 20
    c = FlopCounter()
    minres_normal(A, rng.standard_normal(n), InnerSolverConfig("minres", ell), counter=c)
    assert c.mv == 2 * ell
    assert c.flops == 2 * ell * 2 * A.nnz + 8 * ell * n + 4 * ell * ell


def test_deterministic(rng):
    D = random_sparse(rng, 30, 20, 0.3)
    A = f.from_dense(D)
    p = rng.standard_normal(20)
    cfg = InnerSolverConfig("minres", 7)
    np.testing.assert_array_equal(minres_normal(A, p, cfg), minres_normal(A, p, cfg))


@pytest.mark.parametrize("kw", [dict(method="gmres"), dict(steps=0), dict(shift=-1.0),
                                dict(shift=np.inf), dict(zero_init=False)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        InnerSolverConfig(**kw)


def test_wrong_method_or_shape():
    A = f.from_dense(np.eye(3))
    with pytest.raises(ValueError):
        minres_normal(A, np.ones(3), InnerSolverConfig("cg"))
    with pytest.raises(f.DimensionError):
        cg_normal(A, np.ones(4), InnerSolverConfig("cg"))


def test_apply_fixed_spd_examples(rng):
    p = rng.standard_normal(4)
    np.testing.assert_allclose(apply_fixed_spd(np.eye(4), p), p)
    np.testing.assert_allclose(apply_fixed_spd(np.diag([4.0, 9.0]), np.array([4.0, 9.0])), [1, 1])
    M = random_spd(rng, 8, 100.0)
    q = rng.standard_normal(8)
    np.testing.assert_allclose(M @ apply_fixed_spd(M, q), q, atol=1e-12)


def test_apply_fixed_spd_caches_per_matrix(rng):
    M = random_spd(rng, 5)
    apply_fixed_spd(M, np.ones(5))
    key = id(M)
    assert key in inner._factor_cache
    pre = inner._factor_cache[key][1]
    apply_fixed_spd(M, np.zeros(5))
    assert inner._factor_cache[key][1] is pre
    del M
    gc.collect()
    assert key not in inner._factor_cache


def test_non_spd_rejected():
    with pytest.raises(ValueError):
        apply_fixed_spd(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        SPDPreconditioner(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(f.DimensionError):
        SPDPreconditioner(np.ones((2, 3)))


def test_diagonal_preconditioner():
    A = f.from_dense(np.array([[3.0, 0.0, 0.0], [4.0, 1.0, 0.0]]))
    pre = DiagonalPreconditioner.column_scaling(A)
    np.testing.assert_allclose(pre.d, [25.0, 1.0, 1.0])
    np.testing.assert_allclose(pre(np.array([25.0, 2.0, 3.0])), [1, 2, 3])
    with pytest.raises(ValueError):
        DiagonalPreconditioner([1.0, 0.0])
