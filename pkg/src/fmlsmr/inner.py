"""Inner solvers for ``(A^T A + shift I) v = p``.

The flexible methods use a fixed budget of ``steps`` Krylov iterations from
a zero initial guess. The normal operator is only ever applied as
``A^T (A x)``; ``A^T A`` is never formed.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalFault
from .sparsemat import FlopCounter, SparseMatrix, normal_matvec

__all__ = [
    "InnerSolverConfig",
    "InnerInfo",
    "minres_normal",
    "cg_normal",
    "make_inner_solver",
    "SPDPreconditioner",
    "DiagonalPreconditioner",
    "apply_fixed_spd",
]

# inner residual below this fraction of ||p|| counts as an exact solve
EXACT_TOL = 1e-14


@dataclass(frozen=True)
class InnerSolverConfig:
    method: str = "minres"
    steps: int = 8
    shift: float = 0.0
    zero_init: bool = True

    def __post_init__(self):
        if self.method not in ("minres", "cg"):
            raise ValueError(f"unknown inner method {self.method!r}")
        if int(self.steps) < 1:
            raise ValueError("inner steps must be >= 1")
        if not np.isfinite(self.shift) or self.shift < 0:
            raise ValueError("shift must be finite and >= 0")
        if not self.zero_init:
            raise ValueError("inner solves always start from zero")


class InnerInfo(NamedTuple):
    steps: int
    residual_norm: float
    stagnated: bool


def _prepare(A, p, cfg, method):
    if cfg.method != method:
        raise ValueError(f"config selects {cfg.method!r}, called {method!r}")
    p = np.asarray(p, dtype=float)
    if p.shape != (A.ncols,):
        raise DimensionError(f"p has shape {p.shape}, expected ({A.ncols},)")
    return p


def _charge(counter, n, steps):
    if counter is not None:
        counter.add(8 * steps * n + 4 * steps * steps)


def minres_normal(A: SparseMatrix, p, cfg: InnerSolverConfig,
                  counter: FlopCounter | None = None, full_output: bool = False):
    """Run ``cfg.steps`` MINRES iterations on ``(A^T A + shift I) v = p``.

    Each iteration is one Lanczos step (two products with ``A``) followed by
    the QR update of the tridiagonal. The loop exits early only when the
    Lanczos recurrence breaks down or the residual drops below
    ``1e-14 ||p||``, both of which mean the solve is exact.

    Returns ``v``, or ``(v, InnerInfo)`` when ``full_output`` is set.
    """
    p = _prepare(A, p, cfg, "minres")
    n = p.shape[0]
    x = np.zeros(n)
    beta1 = float(np.linalg.norm(p))
    if beta1 == 0.0:
        return (x, InnerInfo(0, 0.0, False)) if full_output else x

    q_prev = np.zeros(n)
    q = p / beta1
    z = np.empty(n)
    work = np.empty(A.nrows)
    w_prev = np.zeros(n)
    w_prev2 = np.zeros(n)
    beta = 0.0
    c_prev, s_prev = 1.0, 0.0   # rotation j-1
    c_prev2, s_prev2 = 1.0, 0.0  # rotation j-2
    phibar = beta1
    tiny = np.finfo(float).eps
    done = 0
    for j in range(1, int(cfg.steps) + 1):
        normal_matvec(A, q, cfg.shift, out=z, work=work, counter=counter)
        if beta:
            z -= beta * q_prev
        alpha = float(np.dot(q, z))
        z -= alpha * q
        beta_next = float(np.linalg.norm(z))

        # previous two rotations act on the new column (beta, alpha, beta_next)
        eps_j = s_prev2 * beta
        delta0 = c_prev2 * beta
        delta = c_prev * delta0 + s_prev * alpha
        gbar = -s_prev * delta0 + c_prev * alpha
        gamma = float(np.hypot(gbar, beta_next))
        if not np.isfinite(gamma):
            raise NumericalFault("non-finite value in inner MINRES")
        if gamma == 0.0:
            break
        c, s = gbar / gamma, beta_next / gamma
        tau = c * phibar
        phibar = -s * phibar

        w = (q - delta * w_prev - eps_j * w_prev2) / gamma
        x += tau * w
        w_prev2, w_prev = w_prev, w
        c_prev2, s_prev2, c_prev, s_prev = c_prev, s_prev, c, s
        done = j

        if abs(phibar) < EXACT_TOL * beta1 or beta_next <= tiny * abs(alpha):
            break
        q_prev, q = q, z / beta_next
        z = np.empty(n)
        beta = beta_next

    if not np.all(np.isfinite(x)):
        raise NumericalFault("non-finite iterate in inner MINRES")
    _charge(counter, n, done)
    return (x, InnerInfo(done, abs(phibar), False)) if full_output else x


def cg_normal(A: SparseMatrix, p, cfg: InnerSolverConfig,
              counter: FlopCounter | None = None, full_output: bool = False):
    """Run ``cfg.steps`` conjugate gradient iterations on ``(A^T A + shift I) v = p``.

    If a search direction has ``d^T B d <= 0`` (possible only for a singular
    operator with ``shift = 0``) the iterate so far is returned and the
    ``stagnated`` flag of :class:`InnerInfo` is set.
    """
    p = _prepare(A, p, cfg, "cg")
    n = p.shape[0]
    x = np.zeros(n)
    r = p.copy()
    rr = float(np.dot(r, r))
    p_norm = np.sqrt(rr)
    if rr == 0.0:
        return (x, InnerInfo(0, 0.0, False)) if full_output else x
    d = r.copy()
    Bd = np.empty(n)
    work = np.empty(A.nrows)
    stagnated = False
    done = 0
    for j in range(1, int(cfg.steps) + 1):
        normal_matvec(A, d, cfg.shift, out=Bd, work=work, counter=counter)
        dBd = float(np.dot(d, Bd))
        if not np.isfinite(dBd):
            raise NumericalFault("non-finite value in inner CG")
        if dBd <= 0.0:
            stagnated = True
            break
        step = rr / dBd
        x += step * d
        r -= step * Bd
        rr_new = float(np.dot(r, r))
        done = j
        if np.sqrt(rr_new) < EXACT_TOL * p_norm:
            rr = rr_new
            break
        d *= rr_new / rr
        d += r
        rr = rr_new
    if not np.all(np.isfinite(x)):
        raise NumericalFault("non-finite iterate in inner CG")
    _charge(counter, n, done)
    return (x, InnerInfo(done, float(np.sqrt(rr)), stagnated)) if full_output else x


def make_inner_solver(A: SparseMatrix, cfg: InnerSolverConfig,
                      counter: FlopCounter | None = None):
    """Return ``p -> v`` applying the configured inner solve with ``A``."""
    solve = minres_normal if cfg.method == "minres" else cg_normal

    def apply(p):
        return solve(A, p, cfg, counter=counter)

    return apply


class SPDPreconditioner:
    """Callable ``p -> M^{-1} p`` backed by a Cholesky factorization of ``M``."""

    def __init__(self, M):
        M = np.array(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError("M must be square")
        if not np.allclose(M, M.T, rtol=1e-12, atol=0.0):
            raise ValueError("M is not symmetric")
        try:
            self._factor = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("M is not symmetric positive definite") from exc
        self.n = M.shape[0]

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise DimensionError(f"p has shape {p.shape}, expected ({self.n},)")
        return scipy.linalg.cho_solve(self._factor, p)


class DiagonalPreconditioner:
    """Callable ``p -> p / d`` for a positive diagonal ``M = diag(d)``."""

    def __init__(self, d):
        d = np.array(d, dtype=float)
        if d.ndim != 1 or not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("diagonal must be finite and positive")
        self.d = d
        self.n = d.shape[0]

    @classmethod
    def column_scaling(cls, A: SparseMatrix):
        """``M = diag(A^T A)``; empty columns get weight 1."""
        sq = np.bincount(A.col_indices, weights=A.values * A.values, minlength=A.ncols)
        sq[sq == 0.0] = 1.0
        return cls(sq)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise DimensionError(f"p has shape {p.shape}, expected ({self.n},)")
        return p / self.d


_factor_cache: dict[int, tuple] = {}


def apply_fixed_spd(M, p):
    """Return ``M^{-1} p``; the factorization of ``M`` is cached while ``M`` lives.

    The cache is keyed on the array object, so mutating ``M`` in place after
    the first call is not detected.
    """
    key = id(M)
    hit = _factor_cache.get(key)
    if hit is None or hit[0]() is not M:
        pre = SPDPreconditioner(M)
        ref = weakref.ref(M, lambda _r, key=key: _factor_cache.pop(key, None))
        _factor_cache[key] = (ref, pre)
    else:
        pre = hit[1]
    return pre(p)
