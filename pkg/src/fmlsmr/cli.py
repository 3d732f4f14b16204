"""Benchmark runner: ``fmlsmr-bench --matrix A.mtx --method fmlsmr --out run``.

Writes ``<out>.csv`` with one row per outer iteration and ``<out>.json``
with a run summary. Exit codes: 0 converged, 1 I/O or configuration error,
2 iteration or time budget exhausted, 3 breakdown or numerical fault.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .diagnostics import CostModel, flop_model
from .errors import DimensionError, MatrixMarketError
from .inner import DiagonalPreconditioner, InnerSolverConfig
from .solvers import CONVERGED, MAX_ITERATIONS, METHODS, OuterConfig, SolveReport, solve
from .sparsemat import read_matrix_market, read_vector

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_MAXIT, EXIT_FAULT = 0, 1, 2, 3
CSV_HEADER = ("iter", "nres", "stewart_be_normalized", "atr_norm", "elapsed_ms", "flops")


def random_rhs(m: int, seed) -> np.ndarray:
    """Uniform entries in the open interval (0, 1) from numpy's PCG64.

    Each entry is ``j / 2**53`` with ``j`` drawn uniformly from
    ``[1, 2**53)``, so 0 is excluded as well as 1.
    """
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(1, 2**53, size=int(m), dtype=np.int64) * 2.0**-53


@dataclass(frozen=True)
class RunConfig:
    matrix_path: str
    rhs: str = "random"
    seed: int = 1
    method: str = "fmlsmr"
    inner_method: str = "minres"
    inner_steps: int = 8
    tol: float = 1e-12
    max_iterations: int = 100_000
    output_path: str | None = None
    timing: bool = False
    time_limit: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.inner_method not in ("minres", "cg"):
            raise ValueError(f"unknown inner method {self.inner_method!r}")
        if self.method in ("flsmr", "fmlsmr") and int(self.inner_steps) < 1:
            raise ValueError("inner steps must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max iterations must be >= 1")


def exit_code(status: str) -> int:
    if status == CONVERGED:
        return EXIT_OK
    if status == MAX_ITERATIONS:
        return EXIT_MAXIT
    return EXIT_FAULT


def model_flops(report: SolveReport, cfg: RunConfig, shape, nnz):
    """Modelled flop count for the run, or None when there is no model."""
    if report.method == "mlsmr":
        return None
    ell = 0 if report.method == "lsmr" else cfg.inner_steps
    return flop_model(CostModel(report.method, report.iterations, ell, shape[0], shape[1], nnz))


def load_problem(cfg: RunConfig):
    A = read_matrix_market(cfg.matrix_path)
    if cfg.rhs == "random":
        b = random_rhs(A.nrows, cfg.seed)
    else:
        b = read_vector(cfg.rhs)
        if b.shape != (A.nrows,):
            raise DimensionError(f"rhs has length {b.shape[0]}, matrix has {A.nrows} rows")
    return A, b


def run_benchmark(cfg: RunConfig):
    """Run one configured solve; returns ``(report, exit_code)``.

    ``mlsmr`` is run with the column-scaling preconditioner
    ``M = diag(A^T A)``.

    Outputs are written when ``cfg.output_path`` is set. I/O and input
    errors propagate to the caller.
    """
    A, b = load_problem(cfg)
    outer = OuterConfig(
        tol=cfg.tol,
        max_iterations=cfg.max_iterations,
        inner=InnerSolverConfig(method=cfg.inner_method, steps=cfg.inner_steps),
        time_limit=cfg.time_limit,
    )
    # MLSMR from the command line uses column scaling as its fixed SPD M
    apply_Minv = DiagonalPreconditioner.column_scaling(A) if cfg.method == "mlsmr" else None
    report = solve(cfg.method, A, b, outer, apply_Minv=apply_Minv)
    if cfg.output_path:
        emit_history(report, cfg.output_path,
                     summary_extra=_summary_extra(report, cfg, A))
    return report, exit_code(report.status)


def _summary_extra(report, cfg, A):
    return {
        "matrix": str(cfg.matrix_path),
        "shape": list(A.shape),
        "nnz": A.nnz,
        "rhs": cfg.rhs,
        "seed": cfg.seed,
        "inner_method": cfg.inner_method,
        "inner_steps": cfg.inner_steps,
        "tol": cfg.tol,
        "flop_model": model_flops(report, cfg, A.shape, A.nnz),
    }


def _g17(v) -> str:
    return format(float(v), ".17g")


def emit_history(report: SolveReport, path, summary_extra: dict | None = None):
    """Write ``<path>.csv`` and ``<path>.json``; returns the two paths.

    The CSV values carry 17 significant digits, so re-parsing them gives
    back the recorded doubles exactly.
    """
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    csv_path = base.with_name(base.name + ".csv")
    json_path = base.with_name(base.name + ".json")
    a1 = report.a_norm1 or 1.0
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in report.history:
            w.writerow([rec.iter, _g17(rec.nres), _g17(rec.stewart_be / a1),
                        _g17(rec.atr_norm), _g17(rec.elapsed * 1e3), rec.flops])
    summary = {
        "method": report.method,
        "status": report.status,
        "message": report.message,
        "iterations": report.iterations,
        "final_nres": report.final_nres,
        "elapsed_s": report.elapsed,
        "kernel_elapsed_s": report.kernel_elapsed,
        "flops_measured": report.flops,
        "flops_kernel": report.kernel_flops,
        "mv_count": report.mv_count,
        "backend": _backend.kernels.BACKEND,
        "version": __version__,
    }
    if summary_extra:
        summary.update(summary_extra)
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
    return csv_path, json_path


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is reserved for max_iterations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fmlsmr-bench", description=__doc__.splitlines()[0])
    p.add_argument("--matrix", required=True, help="Matrix Market file (.mtx or .mtx.gz)")
    p.add_argument("--rhs", default="random",
                   help="'random' or a Matrix Market m x 1 file (default: random)")
    p.add_argument("--seed", type=int, default=1, help="seed for --rhs random (default: 1)")
    p.add_argument("--method", choices=METHODS, default="fmlsmr")
    p.add_argument("--inner", choices=("minres", "cg"), default="minres")
    p.add_argument("--inner-steps", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--maxit", type=int, default=100_000)
    p.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.add_argument("--time", action="store_true", help="print timing to stdout")
    p.add_argument("--time-limit", type=float, default=None, help="wall-clock budget in seconds")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = RunConfig(
            matrix_path=args.matrix, rhs=args.rhs, seed=args.seed, method=args.method,
            inner_method=args.inner, inner_steps=args.inner_steps, tol=args.tol,
            max_iterations=args.maxit, output_path=args.out, timing=args.time,
            time_limit=args.time_limit,
        )
        report, code = run_benchmark(cfg)
    except (OSError, MatrixMarketError, DimensionError, ValueError) as exc:
        print(f"fmlsmr-bench: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{report.method}: {report.status} after {report.iterations} iterations, "
          f"nres={report.final_nres:.3e}")
    if report.message and report.status != CONVERGED:
        print(f"  {report.message}")
    if cfg.timing:
        print(f"  time {report.elapsed:.6f} s (kernel {report.kernel_elapsed:.6f} s), "
              f"{report.flops} flops")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
