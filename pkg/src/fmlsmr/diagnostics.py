"""Accuracy metrics and cost models for the LSMR family.

Backward errors are for the least-squares problem with only ``A``
perturbed: the optimal value is the smallest singular value of
``[A, (||r||/||x||)(I - r r^T / ||r||^2)]``, and Stewart's rank-one
perturbation ``E = -r r^T A / ||r||^2`` gives the cheap upper bound
``||A^T r|| / ||r||``.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np

from .errors import DenseCapError, DimensionError
from .sparsemat import SparseMatrix, matvec, one_norm, rmatvec, to_dense

__all__ = [
    "nres",
    "stewart_backward_error",
    "stewart_perturbation",
    "normalized_backward_error",
    "optimal_backward_error",
    "jacobi_singular_values",
    "CostModel",
    "flop_model",
    "storage_model",
    "storage_matrices",
    "OPTIMAL_BE_CAP",
]

OPTIMAL_BE_CAP = 2000


def _residual(A, x, b):
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != (A.ncols,) or b.shape != (A.nrows,):
        raise DimensionError("x or b does not conform with A")
    return b - matvec(A, x)


def nres(A: SparseMatrix, x, b, a_norm1: float | None = None) -> float:
    """Normalized residual ``||A^T (A x - b)|| / (||A||_1 (||A||_1 ||x|| + ||b||))``.

    Raises ``ZeroDivisionError`` when the denominator vanishes (``A = 0`` or
    ``x = b = 0``), where the measure is undefined.
    """
    if a_norm1 is None:
        a_norm1 = one_norm(A)
    r = _residual(A, x, b)
    num = float(np.linalg.norm(rmatvec(A, r)))
    den = a_norm1 * (a_norm1 * float(np.linalg.norm(x)) + float(np.linalg.norm(b)))
    if den == 0.0:
        raise ZeroDivisionError("NRes is undefined for this (A, x, b)")
    return num / den


def stewart_backward_error(A: SparseMatrix, x, b) -> float:
    """``||A^T r|| / ||r||`` with ``r = b - A x``; 0 when ``r = 0``."""
    r = _residual(A, x, b)
    rnorm = float(np.linalg.norm(r))
    if rnorm == 0.0:
        return 0.0
    return float(np.linalg.norm(rmatvec(A, r))) / rnorm


def stewart_perturbation(A: SparseMatrix, x, b) -> np.ndarray:
    """Dense ``E = -r r^T A / ||r||^2`` (small problems only)."""
    r = _residual(A, x, b)
    rr = float(np.dot(r, r))
    if rr == 0.0:
        return np.zeros(A.shape)
    return -np.outer(r, rmatvec(A, r)) / rr


def normalized_backward_error(A: SparseMatrix, x, b, a_norm1: float | None = None) -> float:
    """Stewart's estimate divided by ``||A||_1``."""
    if a_norm1 is None:
        a_norm1 = one_norm(A)
    return stewart_backward_error(A, x, b) / a_norm1


def _round_robin(n):
    """Pairings of ``0..n-1`` (``n`` even) covering every pair once in ``n-1`` rounds."""
    top = list(range(0, n, 2))
    bot = list(range(1, n, 2))
    for _ in range(n - 1):
        yield np.array(top), np.array(bot)
        # keep top[0] fixed, rotate the others
        top, bot = [top[0], bot[0]] + top[1:-1], bot[1:] + [top[-1]]


def jacobi_singular_values(G, tol=None, max_sweeps=60) -> np.ndarray:
    """Singular values of ``G`` by one-sided (Hestenes) Jacobi, descending.

    Columns of the tall orientation are rotated pairwise until mutually
    orthogonal; the round-robin ordering rotates ``ncols / 2`` disjoint pairs
    at once. Small singular values come out with high relative accuracy.
    """
    G = np.array(G, dtype=float)
    if G.ndim != 2:
        raise DimensionError("expected a 2-D array")
    if not np.all(np.isfinite(G)):
        raise ValueError("matrix has non-finite entries")
    if G.shape[0] < G.shape[1]:
        G = G.T.copy()
    rows, cols = G.shape
    if cols == 0:
        return np.zeros(0)
    # scale to unit max entry so squared column norms neither under- nor overflow
    scale = float(np.abs(G).max())
    if scale == 0.0:
        return np.zeros(cols)
    G /= scale
    if cols % 2:
        G = np.hstack([G, np.zeros((rows, 1))])
    if tol is None:
        tol = rows * np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p, q in _round_robin(G.shape[1]):
            Gp, Gq = G[:, p], G[:, q]
            a = np.einsum("ij,ij->j", Gp, Gp)
            b = np.einsum("ij,ij->j", Gq, Gq)
            c = np.einsum("ij,ij->j", Gp, Gq)
            active = np.abs(c) > tol * np.sqrt(a * b)
            if not active.any():
                continue
            rotated = True
            p, q, a, b, c = p[active], q[active], a[active], b[active], c[active]
            # zeta = inf (negligible c) yields t = 0, the identity rotation
            with np.errstate(over="ignore"):
                zeta = (b - a) / (2.0 * c)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            Gp, Gq = G[:, p], G[:, q]
            G[:, p] = cs * Gp - sn * Gq
            G[:, q] = sn * Gp + cs * Gq
        if not rotated:
            break
    sigma = scale * np.sqrt(np.einsum("ij,ij->j", G, G))[:cols]
    return np.sort(sigma)[::-1]


def optimal_backward_error(A: SparseMatrix, x, b, cap: int = OPTIMAL_BE_CAP) -> float:
    """Smallest Frobenius-norm ``E`` making ``x`` a least-squares solution of
    ``min ||(A + E) x - b||``.

    Computed as the smallest singular value of the ``m x (n + m)`` block
    ``[A, (||r||/||x||)(I - r r^T/||r||^2)]`` with the in-house Jacobi SVD.
    Returns 0 when ``r = 0``.

    Raises
    ------
    DenseCapError
        ``m + n`` exceeds ``cap``.
    ValueError
        ``x = 0``, where the measure is undefined.
    """
    m, n = A.shape
    if m + n > cap:
        raise DenseCapError(f"m + n = {m + n} exceeds the dense cap {cap}")
    x = np.asarray(x, dtype=float)
    xnorm = float(np.linalg.norm(x))
    if xnorm == 0.0:
        raise ValueError("backward error is undefined for x = 0")
    r = _residual(A, x, b)
    rnorm = float(np.linalg.norm(r))
    if rnorm == 0.0:
        return 0.0
    u = r / rnorm
    proj = np.eye(m) - np.outer(u, u)
    block = np.hstack([to_dense(A, cap=max(m * n, 1)), (rnorm / xnorm) * proj])
    return float(jacobi_singular_values(block)[-1])


# ---------------------------------------------------------------------------
# cost models


@dataclass(frozen=True)
class CostModel:
    """Sizes entering the flop and storage counts.

    Fields may be plain numbers or symbols (anything supporting ``+`` and
    ``*``), which allows the formulas to be checked symbolically.
    """

    method: str
    k: object
    ell: object = 0
    m: object = 0
    n: object = 0
    nnz: object = 0

    def __post_init__(self):
        if self.method not in ("lsmr", "flsmr", "fmlsmr"):
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("k", "ell", "m", "n", "nnz"):
            v = getattr(self, name)
            if isinstance(v, numbers.Real) and v < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def mv(self):
        return 2 * self.nnz


def _tidy(value):
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def flop_model(c: CostModel):
    """Dominant-term flop count of ``k`` outer steps (``MV = 2 nnz``)."""
    k, ell, m, n, mv = c.k, c.ell, c.m, c.n, c.mv
    if c.method == "lsmr":
        return 2 * k * mv + (8 * n + 2 * m) * k
    inner = (2 * ell + 4) * k * mv + 8 * k * ell * n + 4 * k * ell**2
    if c.method == "fmlsmr":
        return inner + (12 * n + 2 * m) * k
    return _tidy(inner + 2 * k**3 / 3 + 2 * (m + n + 1) * k**2)


def storage_model(c: CostModel):
    """``(vectors of length m, vectors of length n)`` held after ``k`` steps."""
    if c.method == "lsmr":
        return (3, 5)
    if c.method == "fmlsmr":
        return (3, 7)
    return (c.k + 4, c.k + 3)


def storage_matrices(c: CostModel) -> tuple:
    """Small dense matrices kept in addition to the vectors."""
    return ("T_{k+1}", "P_{k+1}") if c.method == "flsmr" else ()
