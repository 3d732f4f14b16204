"""Golub-Kahan bidiagonalization processes.

Three variants are provided:

* :func:`gk_explicit_start` / :func:`gk_explicit_step` -- bidiagonalization of
  ``A L^{-1}`` with an explicit dense right preconditioner ``L``, two solves
  per step. Kept as a test oracle.
* :func:`mgk_start` / :func:`mgk_step` -- the merged recurrence that only
  needs ``M^{-1}`` with ``M = L^T L``: one preconditioner apply per step.
  This drives MLSMR and FMLSMR.
* :func:`fgk_start` / :func:`fgk_step` -- the flexible process, where the
  preconditioner may change every step and both bases are built by
  single-pass classical Gram-Schmidt. This drives FLSMR.

Breakdown (a vanishing ``alpha`` or ``beta``) is reported through the
``breakdown`` attribute of the returned state; it is a terminal condition,
not an error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndefinitePreconditionerError, NumericalFault
from .sparsemat import FlopCounter, SparseMatrix, matvec, rmatvec

__all__ = [
    "DEFAULT_BREAKDOWN_TOL",
    "BidiagState",
    "ColumnBasis",
    "FlexibleBasisState",
    "TestPreconditioner",
    "gk_explicit_start",
    "gk_explicit_step",
    "mgk_start",
    "mgk_step",
    "fgk_start",
    "fgk_step",
    "lower_bidiagonal",
]

DEFAULT_BREAKDOWN_TOL = float(np.sqrt(np.finfo(float).eps))


@dataclass
class BidiagState:
    """Current vectors and scalars of a (merged) Golub-Kahan process.

    After step ``k``: ``u`` is ``u_{k+1}``, ``v_tilde`` is ``v~_{k+1}``,
    ``p_hat`` is ``M v~_{k+1}`` (the same array as ``v_tilde`` when
    ``M = I``), ``beta`` is ``beta_{k+1}`` and ``alpha`` is ``alpha_{k+1}``.
    For the explicit-L process ``v`` holds the orthonormal ``v_{k+1}`` and
    ``p_hat`` is unused.
    """

    u: np.ndarray
    v_tilde: np.ndarray
    p_hat: np.ndarray | None
    alpha: float
    beta: float
    step: int = 0
    breakdown: str | None = None
    v: np.ndarray | None = None


def _check_finite(value, what, step):
    if not np.isfinite(value):
        raise NumericalFault(f"non-finite {what}", step)


# ---------------------------------------------------------------------------
# explicit-L process (oracle)


@dataclass
class TestPreconditioner:
    """Dense pair ``L``, ``M = L^T L`` for checking the merged recurrence.

    Production code never forms ``L``; this type exists for the explicit
    two-solve process only.
    """

    __test__ = False  # not a pytest class

    L: np.ndarray
    M: np.ndarray

    @classmethod
    def from_spd(cls, M):
        """Take ``L`` as the upper Cholesky factor of ``M``."""
        M = np.asarray(M, dtype=float)
        C = np.linalg.cholesky(M)
        return cls(L=C.T.copy(), M=M)

    @classmethod
    def random(cls, n, rng, cond=10.0):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        d = np.geomspace(1.0, cond, n)
        M = (Q * d) @ Q.T
        return cls.from_spd(0.5 * (M + M.T))


def gk_explicit_start(A: SparseMatrix, P: TestPreconditioner, b, tol=DEFAULT_BREAKDOWN_TOL):
    b = np.asarray(b, dtype=float)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        zero = np.zeros(A.ncols)
        return BidiagState(np.zeros(A.nrows), zero, None, 0.0, 0.0, breakdown="beta", v=zero)
    u = b / beta
    u_hat = np.linalg.solve(P.L.T, rmatvec(A, u))
    alpha = float(np.linalg.norm(u_hat))
    if alpha == 0.0:
        zero = np.zeros(A.ncols)
        return BidiagState(u, zero, None, 0.0, beta, breakdown="alpha", v=zero)
    v = u_hat / alpha
    return BidiagState(u, np.linalg.solve(P.L, v), None, alpha, beta, v=v)


def gk_explicit_step(A: SparseMatrix, P: TestPreconditioner, state: BidiagState,
                     tol=DEFAULT_BREAKDOWN_TOL) -> BidiagState:
    """One step of bidiagonalization of ``A L^{-1}`` with two dense solves.

    ``state.v_tilde`` must hold ``L^{-1} v_k``; the returned state carries
    ``u_{k+1}``, ``v_{k+1}``, ``alpha_{k+1}`` and ``beta_{k+1}``.
    """
    if state.breakdown:
        raise ValueError("process already broke down")
    k = state.step + 1
    w = matvec(A, state.v_tilde)
    q = w - state.alpha * state.u
    beta = float(np.linalg.norm(q))
    if beta <= tol * np.linalg.norm(w):
        return BidiagState(state.u, state.v_tilde, None, state.alpha, beta, k, "beta", state.v)
    u = q / beta
    u_hat = np.linalg.solve(P.L.T, rmatvec(A, u))
    p = u_hat - beta * state.v
    alpha = float(np.linalg.norm(p))
    if alpha <= tol * np.linalg.norm(u_hat):
        return BidiagState(u, state.v_tilde, None, alpha, beta, k, "alpha", state.v)
    v = p / alpha
    return BidiagState(u, np.linalg.solve(P.L, v), None, alpha, beta, k, None, v)


# ---------------------------------------------------------------------------
# merged process


def _alpha_from(v, p, step):
    vp = float(np.dot(v, p))
    _check_finite(vp, "<v, p>", step)
    if vp < 0.0:
        raise IndefinitePreconditionerError(
            f"<v, p> = {vp:.3e} < 0: preconditioner apply is not positive definite", step
        )
    return np.sqrt(vp)


def mgk_start(A: SparseMatrix, b, apply_Minv=None, tol=DEFAULT_BREAKDOWN_TOL,
              counter: FlopCounter | None = None) -> BidiagState:
    """Initialize the merged process on ``b``.

    ``apply_Minv(p)`` returns ``M^{-1} p``; ``None`` means ``M = I`` and the
    apply is skipped (``v~`` and ``p`` coincide).
    """
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return BidiagState(np.zeros(m), np.zeros(n), np.zeros(n), 0.0, 0.0, breakdown="beta")
    u = b / beta
    p = rmatvec(A, u, counter=counter)
    if apply_Minv is None:
        alpha = float(np.linalg.norm(p))
        v = p
    else:
        v = np.asarray(apply_Minv(p), dtype=float)
        alpha = _alpha_from(v, p, 0)
    _check_finite(alpha, "alpha", 0)
    if alpha == 0.0:
        return BidiagState(u, np.zeros(n), np.zeros(n), 0.0, beta, breakdown="alpha")
    p /= alpha
    if v is not p:
        v /= alpha
    return BidiagState(u, v, p, alpha, beta)


def mgk_step(A: SparseMatrix, apply_Minv, state: BidiagState, tol=DEFAULT_BREAKDOWN_TOL,
             counter: FlopCounter | None = None, work=None, work_m=None) -> BidiagState:
    """One merged step with exactly one preconditioner apply.

    Updates ``state`` in place and returns it::

        beta u    <- A v~ - alpha u
        p         <- A^T u - beta p
        v~        <- M^{-1} p
        alpha     <- sqrt(<v~, p>)
        v~, p     <- v~ / alpha, p / alpha

    ``work`` (length ``n``) and ``work_m`` (length ``m``) are optional scratch
    buffers for ``A^T u`` and ``A v~``.

    Breakdown is flagged when ``beta <= tol * ||A v~||`` or when the new
    ``p`` cancels to ``||p|| <= tol * ||A^T u||`` (for ``M = I`` these are the
    tests of the explicit process). In either case the remaining fields are
    left as they were, so that ``alpha`` or ``beta`` may be read as zero by
    the caller. A negative ``<v~, p>`` raises
    :class:`~fmlsmr.errors.IndefinitePreconditionerError`.
    """
    if state.breakdown:
        raise ValueError("process already broke down")
    k = state.step + 1
    state.step = k
    u = state.u
    w = matvec(A, state.v_tilde, out=work_m, counter=counter)
    w_norm = float(np.linalg.norm(w))
    w -= state.alpha * u
    beta = float(np.linalg.norm(w))
    _check_finite(beta, "beta", k)
    state.beta = beta
    if beta <= tol * w_norm or beta == 0.0:
        state.breakdown = "beta"
        state.alpha = 0.0
        return state
    np.divide(w, beta, out=u)

    atu = rmatvec(A, u, out=work, counter=counter)
    atu_norm = float(np.linalg.norm(atu))
    p = state.p_hat
    p *= -beta
    p += atu
    p_norm = float(np.linalg.norm(p))
    if p_norm <= tol * atu_norm or p_norm == 0.0:
        state.breakdown = "alpha"
        state.alpha = 0.0
        return state
    if apply_Minv is None:
        # M = I: v~ and p share storage
        alpha = p_norm
        v = p
    else:
        v = np.asarray(apply_Minv(p), dtype=float)
        alpha = _alpha_from(v, p, k)
        if alpha == 0.0:
            state.breakdown = "alpha"
            state.alpha = 0.0
            return state
    _check_finite(alpha, "alpha", k)
    p /= alpha
    if v is not p:
        v /= alpha
    state.v_tilde = v
    state.alpha = alpha
    return state


def lower_bidiagonal(alphas, betas) -> np.ndarray:
    """Assemble the ``(k+1) x k`` matrix ``B_k`` from ``alpha_1..alpha_k`` and
    ``beta_2..beta_{k+1}``."""
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    k = alphas.shape[0]
    if betas.shape[0] != k:
        raise ValueError("need k alphas and k betas (beta_2 .. beta_{k+1})")
    B = np.zeros((k + 1, k))
    B[np.arange(k), np.arange(k)] = alphas
    B[np.arange(1, k + 1), np.arange(k)] = betas
    return B


# ---------------------------------------------------------------------------
# flexible process


class ColumnBasis:
    """Growable set of equal-length column vectors in one Fortran-ordered buffer.

    Behaves like a list of columns (``len``, indexing, iteration);
    :meth:`matrix` returns the stacked columns as a view without copying.
    """

    def __init__(self, length, capacity=8):
        self.length = int(length)
        self._buf = np.zeros((self.length, max(int(capacity), 1)), order="F")
        self._count = 0

    def __len__(self):
        return self._count

    def __getitem__(self, j):
        return self.matrix()[:, j]

    def __iter__(self):
        return iter(self.matrix().T)

    def append(self, v):
        if self._count == self._buf.shape[1]:
            grown = np.zeros((self.length, 2 * self._count), order="F")
            grown[:, : self._count] = self._buf
            self._buf = grown
        self._buf[:, self._count] = v
        self._count += 1

    def matrix(self) -> np.ndarray:
        return self._buf[:, : self._count]

    @property
    def nbytes(self) -> int:
        return self._count * self.length * self._buf.itemsize


@dataclass
class FlexibleBasisState:
    """Bases and coefficient matrices of the flexible process.

    After ``k`` steps ``Z`` holds ``z_1..z_k``, ``U_tilde`` holds
    ``u~_1..u~_{k+1}``, ``W`` holds ``w_1..w_{k+1}`` and the leading blocks
    ``T[:k+1, :k+1]`` (upper triangular) and ``P[:k+1, :k]`` (upper
    Hessenberg) satisfy ``A Z_k = U~_{k+1} P_k`` and
    ``A^T U~_{k+1} = W_{k+1} T_{k+1}``. ``T`` and ``P`` are grown by doubling.
    """

    beta1: float
    Z: ColumnBasis
    U_tilde: ColumnBasis
    W: ColumnBasis
    T: np.ndarray = field(default_factory=lambda: np.zeros((8, 8)))
    P: np.ndarray = field(default_factory=lambda: np.zeros((8, 8)))
    step: int = 0
    breakdown: str | None = None

    @property
    def k(self) -> int:
        return self.step

    def T_block(self) -> np.ndarray:
        """``T_{k+1}`` (copy)."""
        j = len(self.W)
        return self.T[:j, :j].copy()

    def P_block(self) -> np.ndarray:
        """``P_k`` (copy)."""
        k = len(self.Z)
        return self.P[: k + 1, :k].copy()

    def _ensure(self, size):
        cap = self.T.shape[0]
        if size <= cap:
            return
        new = max(size, 2 * cap)
        for name in ("T", "P"):
            old = getattr(self, name)
            grown = np.zeros((new, new))
            grown[:cap, :cap] = old
            setattr(self, name, grown)


def _gram_schmidt_column(v, basis, counter, length):
    """Single-pass classical Gram-Schmidt of ``v`` against ``basis``.

    Returns ``(coefficients, v_orth)``; ``v`` is overwritten.
    """
    if not len(basis):
        return np.zeros(0), v
    Q = basis.matrix()
    coeffs = Q.T @ v
    v -= Q @ coeffs
    if counter is not None:
        counter.add(4 * length * len(basis))
    return coeffs, v


def _t_column(A, state, tol, counter):
    """Fill column ``j`` of ``T`` from ``A^T u~_j`` and append ``w_j``."""
    j = len(state.U_tilde)
    state._ensure(j + 1)
    v = rmatvec(A, state.U_tilde[-1], counter=counter)
    xi = float(np.linalg.norm(v))
    coeffs, v = _gram_schmidt_column(v, state.W, counter, A.ncols)
    state.T[: j - 1, j - 1] = coeffs
    t = float(np.linalg.norm(v))
    if not np.isfinite(t):
        raise NumericalFault("non-finite t", state.step + 1)
    if t <= tol * xi or t == 0.0:
        state.T[j - 1, j - 1] = 0.0
        state.breakdown = "t"
        return
    state.T[j - 1, j - 1] = t
    v /= t
    state.W.append(v)


def fgk_start(A: SparseMatrix, b, tol=DEFAULT_BREAKDOWN_TOL,
              counter: FlopCounter | None = None) -> FlexibleBasisState:
    """Set ``u~_1 = b / ||b||`` and build ``t_{1,1}``, ``w_1``."""
    b = np.asarray(b, dtype=float)
    beta1 = float(np.linalg.norm(b))
    m, n = A.shape
    state = FlexibleBasisState(beta1, ColumnBasis(n), ColumnBasis(m), ColumnBasis(n))
    if beta1 == 0.0:
        state.breakdown = "beta"
        return state
    state.U_tilde.append(b / beta1)
    _t_column(A, state, tol, counter)
    return state


def fgk_step(A: SparseMatrix, apply_Ninv_k, state: FlexibleBasisState,
             tol=DEFAULT_BREAKDOWN_TOL, counter: FlopCounter | None = None) -> FlexibleBasisState:
    """Advance the flexible process by one step (in place).

    Solves ``N_k z_k = w_k`` through ``apply_Ninv_k`` (``None`` = identity),
    orthogonalizes ``A z_k`` against ``u~_1..u~_k`` to form column ``k`` of
    ``P`` and ``u~_{k+1}``, then orthogonalizes ``A^T u~_{k+1}`` against
    ``w_1..w_k`` to form column ``k+1`` of ``T`` and ``w_{k+1}``.

    Breakdown of ``p_{k+1,k}`` sets ``breakdown = "p"`` (``u~_{k+1}`` is not
    appended); breakdown of ``t_{k+1,k+1}`` sets ``breakdown = "t"`` (no
    ``w_{k+1}``). The relations remain valid with the zero entry.
    """
    if state.breakdown:
        raise ValueError("process already broke down")
    k = state.step + 1
    state.step = k
    w = state.W[-1]
    z = w.copy() if apply_Ninv_k is None else np.array(apply_Ninv_k(w), dtype=float)
    if not np.all(np.isfinite(z)):
        raise NumericalFault("non-finite preconditioned vector", k)
    state.Z.append(z)
    state._ensure(k + 1)
    v = matvec(A, z, counter=counter)
    xi = float(np.linalg.norm(v))
    coeffs, v = _gram_schmidt_column(v, state.U_tilde, counter, A.nrows)
    state.P[:k, k - 1] = coeffs
    p = float(np.linalg.norm(v))
    if not np.isfinite(p):
        raise NumericalFault("non-finite p", k)
    if p <= tol * xi or p == 0.0:
        state.P[k, k - 1] = 0.0
        state.breakdown = "p"
        return state
    state.P[k, k - 1] = p
    v /= p
    state.U_tilde.append(v)
    _t_column(A, state, tol, counter)
    return state
