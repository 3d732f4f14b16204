"""Sparse LSMR with merged and flexible preconditioning.

The package provides four least-squares solvers sharing one CSR matrix
type: plain ``lsmr``, ``mlsmr`` (fixed SPD preconditioner applied once per
step), ``flsmr`` (flexible Golub-Kahan with per-step preconditioners) and
``fmlsmr`` (a fixed-length inner Krylov solve on the normal equations used
inside the merged recurrence). Hot kernels are compiled with Cython when
available; set ``FMLSMR_PURE_PYTHON=1`` to force the NumPy fallback.
"""
from ._backend import BACKEND, COMPILED, available_backends
from .diagnostics import (
    CostModel,
    flop_model,
    nres,
    optimal_backward_error,
    stewart_backward_error,
    storage_model,
)
from .errors import (
    DenseCapError,
    DimensionError,
    IndefinitePreconditionerError,
    MatrixMarketError,
    NumericalFault,
)
from .inner import InnerSolverConfig, SPDPreconditioner, make_inner_solver
from .solvers import (
    METHODS,
    OuterConfig,
    SolveReport,
    flsmr_solve,
    fmlsmr_solve,
    lsmr_solve,
    mlsmr_solve,
    solve,
)
from .sparsemat import (
    FlopCounter,
    SparseMatrix,
    from_dense,
    matvec,
    normal_matvec,
    one_norm,
    parse_matrix_market,
    read_matrix_market,
    rmatvec,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "COMPILED", "available_backends",
    "CostModel", "flop_model", "storage_model",
    "nres", "stewart_backward_error", "optimal_backward_error",
    "DenseCapError", "DimensionError", "IndefinitePreconditionerError",
    "MatrixMarketError", "NumericalFault",
    "InnerSolverConfig", "SPDPreconditioner", "make_inner_solver",
    "METHODS", "OuterConfig", "SolveReport", "solve",
    "lsmr_solve", "mlsmr_solve", "flsmr_solve", "fmlsmr_solve",
    "FlopCounter", "SparseMatrix", "from_dense", "matvec", "rmatvec",
    "normal_matvec", "one_norm", "parse_matrix_market", "read_matrix_market",
]
