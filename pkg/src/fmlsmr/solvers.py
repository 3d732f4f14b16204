"""Outer least-squares solvers: LSMR, MLSMR, FLSMR and FMLSMR.

All four start from ``x_0 = 0`` and stop on the normalized residual::

    ||A^T (b - A x)||_2 <= tol * ||A||_1 * (||b||_2 + ||A||_1 ||x||_2)

recomputed from an explicit residual ``r = b - A x``. The 1-norm of ``A``
stands in for the spectral norm because it is cheap and exact.

LSMR, MLSMR and FMLSMR share the merged Golub-Kahan recurrence and the
double-QR rotation update; they differ only in how ``v~ = M^{-1} p`` is
computed (identity, a fixed SPD solve, or an inner Krylov solve). FLSMR
keeps the full flexible bases and re-solves a small dense problem each step.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .bidiag import DEFAULT_BREAKDOWN_TOL, fgk_start, fgk_step, mgk_start, mgk_step
from .errors import DimensionError, NumericalFault
from .inner import InnerSolverConfig, make_inner_solver
from .sparsemat import FlopCounter, SparseMatrix, matvec, one_norm, rmatvec

__all__ = [
    "CONVERGED",
    "MAX_ITERATIONS",
    "BREAKDOWN",
    "NUMERICAL_FAULT",
    "METHODS",
    "OuterConfig",
    "IterationRecord",
    "SolveReport",
    "RotationState",
    "rotation_init",
    "lsmr_rotation_update",
    "HessenbergLSResult",
    "hessenberg_ls_solve",
    "lsmr_solve",
    "mlsmr_solve",
    "fmlsmr_solve",
    "flsmr_solve",
    "solve",
]

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
BREAKDOWN = "breakdown"
NUMERICAL_FAULT = "numerical_fault"

METHODS = ("lsmr", "mlsmr", "flsmr", "fmlsmr")


@dataclass(frozen=True)
class OuterConfig:
    """Outer-iteration controls.

    ``time_limit`` (seconds) and ``max_basis_bytes`` (FLSMR only) are extra
    budgets; hitting either ends the run with status ``max_iterations``.
    """

    tol: float = 1e-12
    max_iterations: int = 100_000
    inner: InnerSolverConfig | None = None
    residual_check_stride: int = 1
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL
    time_limit: float | None = None
    max_basis_bytes: int | None = 4 * 2**30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")
        if int(self.residual_check_stride) < 1:
            raise ValueError("residual_check_stride must be >= 1")

    def inner_or_default(self) -> InnerSolverConfig:
        return self.inner if self.inner is not None else InnerSolverConfig()


@dataclass
class IterationRecord:
    """Per-step measurements.

    ``elapsed`` includes the residual check; ``kernel_elapsed`` does not.
    ``flops`` is cumulative and inclusive. On steps skipped by
    ``residual_check_stride`` (``checked`` false) ``atr_norm`` is the
    recurrence estimate and ``nres`` / ``stewart_be`` are derived from it.
    """

    iter: int
    nres: float
    stewart_be: float
    atr_norm: float
    elapsed: float
    flops: int
    kernel_elapsed: float = 0.0
    kernel_flops: int = 0
    estimate: float = float("nan")
    checked: bool = True


@dataclass
class SolveReport:
    method: str
    status: str
    iterations: int
    x: np.ndarray
    history: list = field(default_factory=list)
    a_norm1: float = 0.0
    b_norm: float = 0.0
    message: str = ""
    elapsed: float = 0.0
    kernel_elapsed: float = 0.0
    kernel_flops: int = 0
    check_flops: int = 0
    mv_count: int = 0
    peak_m_vectors: int = 0
    peak_n_vectors: int = 0
    peak_basis_bytes: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def flops(self) -> int:
        return self.kernel_flops + self.check_flops

    @property
    def final_nres(self) -> float:
        return self.history[-1].nres if self.history else 0.0


# ---------------------------------------------------------------------------
# rotation core


@dataclass
class RotationState:
    """Scalars and direction vectors of the LSMR double-QR recurrence.

    ``rho``, ``rho_bar`` hold ``rho_k``, ``rho_bar_k`` of the last update
    (``1`` initially); ``alpha_bar`` and ``xi_bar`` are already advanced to
    ``k+1``. ``abs(xi_bar)`` is the residual of the reduced problem, which
    equals ``||A^T r_k||`` in the ``M^{-1}``-norm for a fixed ``M``.
    """

    rho: float
    rho_bar: float
    c: float
    s: float
    c_bar: float
    s_bar: float
    theta: float
    theta_bar: float
    alpha_bar: float
    xi: float
    xi_bar: float
    h: np.ndarray
    h_bar: np.ndarray
    x: np.ndarray
    step: int = 0


def rotation_init(alpha1: float, beta1: float, v1) -> RotationState:
    v1 = np.asarray(v1, dtype=float)
    n = v1.shape[0]
    return RotationState(
        rho=1.0, rho_bar=1.0, c=1.0, s=0.0, c_bar=1.0, s_bar=0.0,
        theta=0.0, theta_bar=0.0, alpha_bar=float(alpha1), xi=0.0,
        xi_bar=float(alpha1) * float(beta1),
        h=v1.copy(), h_bar=np.zeros(n), x=np.zeros(n),
    )


def lsmr_rotation_update(state: RotationState, alpha_next: float, beta_next: float,
                         v_next) -> RotationState:
    """Apply the two plane rotations of step ``k`` and advance ``x``.

    ``state`` is updated in place (its vectors are large) and returned.
    ``alpha_next``, ``beta_next`` and ``v_next`` are ``alpha_{k+1}``,
    ``beta_{k+1}`` and ``v~_{k+1}``. The first rotation eliminates
    ``beta_{k+1}`` from the bidiagonal and uses ``alpha_{k+1}`` for the new
    superdiagonal; the second eliminates ``theta_{k+1}`` from ``R^T``.
    """
    rho_prev = state.rho
    rho_bar_prev = state.rho_bar

    rho = float(np.hypot(state.alpha_bar, beta_next))
    c = state.alpha_bar / rho
    s = beta_next / rho
    theta = s * alpha_next
    state.alpha_bar = c * alpha_next

    theta_bar = state.s_bar * rho
    rho_bar = float(np.hypot(state.c_bar * rho, theta))
    c_bar = state.c_bar * rho / rho_bar
    s_bar = theta / rho_bar

    xi = c_bar * state.xi_bar
    state.xi_bar = -s_bar * state.xi_bar
    for value in (rho, rho_bar, xi, state.alpha_bar):
        if not np.isfinite(value):
            raise NumericalFault("non-finite rotation scalar", state.step + 1)

    h, h_bar = state.h, state.h_bar
    h_bar *= -(theta_bar * rho / (rho_prev * rho_bar_prev))
    h_bar += h
    state.x += (xi / (rho * rho_bar)) * h_bar
    h *= -(theta / rho)
    h += v_next

    state.rho, state.rho_bar = rho, rho_bar
    state.c, state.s, state.c_bar, state.s_bar = c, s, c_bar, s_bar
    state.theta, state.theta_bar, state.xi = theta, theta_bar, xi
    state.step += 1
    return state


# ---------------------------------------------------------------------------
# reduced problem for FLSMR


class HessenbergLSResult(NamedTuple):
    y: np.ndarray
    residual: float
    rank_deficient: bool


def hessenberg_ls_solve(H, rhs_scale: float) -> HessenbergLSResult:
    """Solve ``min_y ||rhs_scale * e_1 - H y||_2`` for upper Hessenberg ``H``.

    ``H`` is ``(k+1) x k``. A Givens QR reduces it to triangular form; if the
    triangle is numerically singular the minimum-norm solution is computed
    from an SVD instead and ``rank_deficient`` is set.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] + 1:
        raise DimensionError(f"H must be (k+1) x k, got {H.shape}")
    if np.any(np.tril(H, -2)):
        raise ValueError("H is not upper Hessenberg")
    k = H.shape[1]
    R = H.copy()
    g = np.zeros(k + 1)
    g[0] = rhs_scale
    for j in range(k):
        a, b = R[j, j], R[j + 1, j]
        r = float(np.hypot(a, b))
        if r == 0.0:
            continue
        c, s = a / r, b / r
        top = R[j, j:].copy()
        R[j, j:] = c * top + s * R[j + 1, j:]
        R[j + 1, j:] = -s * top + c * R[j + 1, j:]
        R[j + 1, j] = 0.0
        g[j], g[j + 1] = c * g[j] + s * g[j + 1], -s * g[j] + c * g[j + 1]
    diag = np.abs(np.diag(R[:k, :k]))
    scale = diag.max() if k else 0.0
    if k == 0:
        return HessenbergLSResult(np.zeros(0), abs(rhs_scale), False)
    if scale == 0.0 or diag.min() <= k * np.finfo(float).eps * scale:
        rhs = np.zeros(k + 1)
        rhs[0] = rhs_scale
        y = np.linalg.lstsq(H, rhs, rcond=None)[0]
        return HessenbergLSResult(y, float(np.linalg.norm(rhs - H @ y)), True)
    y = scipy.linalg.solve_triangular(R[:k, :k], g[:k], lower=False)
    return HessenbergLSResult(y, abs(float(g[k])), False)



# ---------------------------------------------------------------------------
# shared driver plumbing


class _Run:
    """Bookkeeping for one solve: timing, counters, stopping test, history."""

    def __init__(self, method, A, b, cfg):
        self.method = method
        self.A = A
        self.b = b
        self.cfg = cfg
        self.anorm = one_norm(A)
        self.bnorm = float(np.linalg.norm(b))
        self.kernel = FlopCounter()
        self.check = FlopCounter()
        self.r = np.empty(A.nrows)
        self.atr = np.empty(A.ncols)
        self.history = []
        self.t0 = time.perf_counter()
        self.check_time = 0.0
        self.last_rnorm = self.bnorm
        self.peak_m = 0
        self.peak_n = 0
        self.peak_bytes = 0

    def measure(self, k, x, estimate, force=False):
        """Record step ``k``; returns the NRes value used for stopping (or None)."""
        cfg = self.cfg
        checked = force or k % cfg.residual_check_stride == 0
        xnorm = float(np.linalg.norm(x))
        denom = self.anorm * (self.anorm * xnorm + self.bnorm)
        if checked:
            t = time.perf_counter()
            matvec(self.A, x, out=self.r, counter=self.check)
            np.subtract(self.b, self.r, out=self.r)
            rmatvec(self.A, self.r, out=self.atr, counter=self.check)
            self.check.add(2 * self.A.nrows)
            atr = float(np.linalg.norm(self.atr))
            rnorm = float(np.linalg.norm(self.r))
            self.last_rnorm = rnorm
            self.check_time += time.perf_counter() - t
        else:
            atr = abs(float(estimate))
            rnorm = self.last_rnorm
        if not (np.isfinite(atr) and np.isfinite(xnorm)):
            raise NumericalFault("non-finite residual", k)
        nres = atr / denom if denom > 0 else 0.0
        stewart = atr / rnorm if rnorm > 0 else 0.0
        now = time.perf_counter() - self.t0
        self.history.append(
            IterationRecord(
                iter=k, nres=nres, stewart_be=stewart, atr_norm=atr, elapsed=now,
                flops=self.kernel.flops + self.check.flops,
                kernel_elapsed=now - self.check_time, kernel_flops=self.kernel.flops,
                estimate=float(estimate), checked=checked,
            )
        )
        return nres if checked else None

    def over_time(self):
        lim = self.cfg.time_limit
        return lim is not None and time.perf_counter() - self.t0 > lim

    def track(self, m_vectors, n_vectors, basis_bytes=0):
        self.peak_m = max(self.peak_m, m_vectors)
        self.peak_n = max(self.peak_n, n_vectors)
        self.peak_bytes = max(self.peak_bytes, basis_bytes)

    def report(self, status, k, x, message=""):
        elapsed = time.perf_counter() - self.t0
        return SolveReport(
            method=self.method, status=status, iterations=k, x=x,
            history=self.history, a_norm1=self.anorm, b_norm=self.bnorm,
            message=message, elapsed=elapsed, kernel_elapsed=elapsed - self.check_time,
            kernel_flops=self.kernel.flops, check_flops=self.check.flops,
            mv_count=self.kernel.mv + self.check.mv,
            peak_m_vectors=self.peak_m, peak_n_vectors=self.peak_n,
            peak_basis_bytes=self.peak_bytes,
        )


def _validate(A, b):
    if not isinstance(A, SparseMatrix):
        raise TypeError("A must be a SparseMatrix")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.nrows,):
        raise DimensionError(f"b has shape {b.shape}, expected ({A.nrows},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("b contains NaN or Inf")
    return np.ascontiguousarray(b)


def _distinct(*arrays):
    return len({id(a) for a in arrays if a is not None})


# ---------------------------------------------------------------------------
# merged solvers


def _merged_solve(method, A, b, make_apply, cfg, callback, vector_flops):
    """Shared MLSMR / FMLSMR loop; ``make_apply(counter)`` builds ``M^{-1}``."""
    b = _validate(A, b)
    run = _Run(method, A, b, cfg)
    apply_Minv = make_apply(run.kernel)
    m, n = A.shape
    if run.bnorm == 0.0:
        return run.report(CONVERGED, 0, np.zeros(n), "b = 0")
    tol_bd = cfg.breakdown_tol
    try:
        st = mgk_start(A, b, apply_Minv, tol=tol_bd, counter=run.kernel)
    except NumericalFault as exc:
        return run.report(NUMERICAL_FAULT, 0, np.zeros(n), str(exc))
    if st.breakdown:
        return run.report(CONVERGED, 0, np.zeros(n), "A^T b = 0")
    rot = rotation_init(st.alpha, st.beta, st.v_tilde)
    if callback is not None:
        callback(0, st, rot)
    work_n = np.empty(n)
    work_m = np.empty(m)

    k = 0
    while k < cfg.max_iterations:
        k += 1
        try:
            mgk_step(A, apply_Minv, st, tol=tol_bd, counter=run.kernel,
                     work=work_n, work_m=work_m)
            alpha_next = 0.0 if st.breakdown else st.alpha
            beta_next = 0.0 if st.breakdown == "beta" else st.beta
            lsmr_rotation_update(rot, alpha_next, beta_next, st.v_tilde)
        except NumericalFault as exc:
            if exc.step is None:
                exc = NumericalFault(str(exc), k)
            return run.report(NUMERICAL_FAULT, k - 1, rot.x, str(exc))
        run.kernel.add(vector_flops)
        run.track(
            _distinct(st.u, work_m, run.r),
            _distinct(rot.x, rot.h, rot.h_bar, st.v_tilde, st.p_hat, work_n, run.atr),
        )
        if callback is not None:
            callback(k, st, rot)
        try:
            nres = run.measure(k, rot.x, rot.xi_bar, force=bool(st.breakdown))
        except NumericalFault as exc:
            return run.report(NUMERICAL_FAULT, k, rot.x, str(exc))
        if nres is not None and nres <= cfg.tol:
            return run.report(CONVERGED, k, rot.x)
        if st.breakdown:
            return run.report(BREAKDOWN, k, rot.x, f"{st.breakdown} breakdown at step {k}")
        if run.over_time():
            return run.report(MAX_ITERATIONS, k, rot.x, "time limit reached")
    return run.report(MAX_ITERATIONS, k, rot.x)


def lsmr_solve(A: SparseMatrix, b, cfg: OuterConfig | None = None,
               callback: Callable | None = None) -> SolveReport:
    """Unpreconditioned LSMR (MLSMR with ``M = I``)."""
    cfg = cfg or OuterConfig()
    m, n = A.shape
    return _merged_solve("lsmr", A, b, lambda _c: None, cfg, callback, 8 * n + 2 * m)


def mlsmr_solve(A: SparseMatrix, b, apply_Minv=None, cfg: OuterConfig | None = None,
                callback: Callable | None = None) -> SolveReport:
    """Modified LSMR with a fixed SPD preconditioner.

    Parameters
    ----------
    A : SparseMatrix
    b : array_like, shape (m,)
    apply_Minv : callable or None
        ``p -> M^{-1} p`` for a fixed SPD ``M`` (see
        :class:`~fmlsmr.inner.SPDPreconditioner`). ``None`` gives plain LSMR.
    cfg : OuterConfig, optional
    callback : callable, optional
        Called as ``callback(k, bidiag_state, rotation_state)`` after the
        start-up (``k = 0``) and after every step.

    Returns
    -------
    SolveReport
        At convergence ``x`` is the least-squares solution of minimum
        ``M``-norm.
    """
    cfg = cfg or OuterConfig()
    m, n = A.shape
    method = "lsmr" if apply_Minv is None else "mlsmr"
    return _merged_solve(method, A, b, lambda _c: apply_Minv, cfg, callback, 8 * n + 2 * m)


def fmlsmr_solve(A: SparseMatrix, b, cfg: OuterConfig | None = None,
                 callback: Callable | None = None) -> SolveReport:
    """Flexible modified LSMR.

    Each ``v~ = M_k^{-1} p`` is an inner solve of ``A^T A v~ = p`` with the
    configured fixed-budget Krylov method (default: 8 MINRES steps), so the
    implied preconditioner changes from step to step. Storage does not grow
    with the number of iterations, and ``||A^T r_k||`` need not decrease
    monotonically.
    """
    cfg = cfg or OuterConfig()
    m, n = A.shape
    inner_cfg = cfg.inner_or_default()
    return _merged_solve(
        "fmlsmr", A, b, lambda counter: make_inner_solver(A, inner_cfg, counter),
        cfg, callback, 12 * n + 2 * m,
    )


# ---------------------------------------------------------------------------
# flexible LSMR


def flsmr_solve(A: SparseMatrix, b, cfg: OuterConfig | None = None, apply_Ninv=None,
                callback: Callable | None = None) -> SolveReport:
    """Flexible LSMR on the flexible Golub-Kahan bases.

    By default each ``z_k = N_k^{-1} w_k`` is the same inner solve FMLSMR
    uses, applied to ``w_k``. Passing ``apply_Ninv`` fixes the preconditioner
    instead (``p -> N^{-1} p``); with ``N = M`` the iterates then minimize
    ``||A^T r||_2`` over the same Krylov space MLSMR searches.

    Each step solves ``min_y ||beta_1 t_11 e_1 - T_{k+1} P_k y||`` from
    scratch with :func:`hessenberg_ls_solve` and sets ``x_k = Z_k y``. ``callback(k, fgk_state, x)`` is called
    after every step.
    """
    cfg = cfg or OuterConfig()
    b = _validate(A, b)
    run = _Run("flsmr", A, b, cfg)
    m, n = A.shape
    if run.bnorm == 0.0:
        return run.report(CONVERGED, 0, np.zeros(n), "b = 0")
    if apply_Ninv is None:
        apply_Ninv = make_inner_solver(A, cfg.inner_or_default(), run.kernel)
    tol_bd = cfg.breakdown_tol
    try:
        st = fgk_start(A, b, tol=tol_bd, counter=run.kernel)
    except NumericalFault as exc:
        return run.report(NUMERICAL_FAULT, 0, np.zeros(n), str(exc))
    if st.breakdown:
        return run.report(CONVERGED, 0, np.zeros(n), "A^T b = 0")
    rhs = st.beta1 * st.T[0, 0]
    H = np.zeros((9, 8))
    x = np.zeros(n)

    k = 0
    while k < cfg.max_iterations:
        k += 1
        try:
            fgk_step(A, apply_Ninv, st, tol=tol_bd, counter=run.kernel)
        except NumericalFault as exc:
            return run.report(NUMERICAL_FAULT, k - 1, x, str(exc))
        # only column k of H = T_{k+1} P_k is new: P has no entry in row
        # k+1 before column k, so the earlier columns are unchanged
        if k > H.shape[1]:
            grown = np.zeros((2 * k + 1, 2 * k))
            grown[: H.shape[0], : H.shape[1]] = H
            H = grown
        H[: k + 1, k - 1] = st.T[: k + 1, : k + 1] @ st.P[: k + 1, k - 1]
        sol = hessenberg_ls_solve(H[: k + 1, :k], rhs)
        x = st.Z.matrix() @ sol.y
        run.kernel.add(2 * (k + 1) ** 2 + 6 * k + 2 * n * k)
        basis_bytes = st.Z.nbytes + st.W.nbytes + st.U_tilde.nbytes
        run.track(len(st.U_tilde) + 1, len(st.Z) + len(st.W) + 2, basis_bytes)
        if callback is not None:
            callback(k, st, x)
        try:
            nres = run.measure(k, x, sol.residual, force=bool(st.breakdown))
        except NumericalFault as exc:
            return run.report(NUMERICAL_FAULT, k, x, str(exc))
        if nres is not None and nres <= cfg.tol:
            return run.report(CONVERGED, k, x)
        if st.breakdown:
            return run.report(BREAKDOWN, k, x, f"{st.breakdown} breakdown at step {k}")
        if run.over_time():
            return run.report(MAX_ITERATIONS, k, x, "time limit reached")
        cap = cfg.max_basis_bytes
        if cap is not None and basis_bytes + 8 * (2 * n + m) > cap:
            return run.report(MAX_ITERATIONS, k, x, "basis storage cap reached")
    return run.report(MAX_ITERATIONS, k, x)


def solve(method: str, A: SparseMatrix, b, cfg: OuterConfig | None = None,
          apply_Minv=None) -> SolveReport:
    """Dispatch on a method name from :data:`METHODS`."""
    if method == "lsmr":
        return lsmr_solve(A, b, cfg)
    if method == "mlsmr":
        return mlsmr_solve(A, b, apply_Minv, cfg)
    if method == "flsmr":
        return flsmr_solve(A, b, cfg)
    if method == "fmlsmr":
        return fmlsmr_solve(A, b, cfg)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
