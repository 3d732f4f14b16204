"""Immutable CSR matrices, Matrix Market ingestion and the matrix-vector kernels.

Both ``A @ x`` and ``A.T @ y`` are computed from the single CSR copy; the
transpose product is a scatter over rows, so no CSC copy is ever built.
"""
from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DenseCapError, DimensionError, MatrixMarketError

__all__ = [
    "SparseMatrix",
    "FlopCounter",
    "parse_matrix_market",
    "read_matrix_market",
    "read_vector",
    "from_dense",
    "matvec",
    "rmatvec",
    "normal_matvec",
    "one_norm",
    "to_dense",
    "DENSE_CAP",
]

DENSE_CAP = 10**6


@dataclass
class FlopCounter:
    """Running tally of matrix-vector products and floating point operations.

    ``mv`` counts single products with ``A`` or ``A.T``; each costs
    ``2 * nnz`` flops. ``vector_flops`` holds the symbolic vector-operation
    charges added by the solvers.
    """

    mv: int = 0
    mv_flops: int = 0
    vector_flops: int = 0

    @property
    def flops(self) -> int:
        return self.mv_flops + self.vector_flops

    def add_mv(self, nnz: int, count: int = 1) -> None:
        self.mv += count
        self.mv_flops += 2 * nnz * count

    def add(self, flops) -> None:
        self.vector_flops += int(flops)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real ``nrows x ncols`` matrix in compressed sparse row form.

    Arrays are copied to contiguous ``int64`` / ``float64`` storage and made
    read-only, so one instance can be shared between concurrent solves.
    Explicitly stored zeros are kept and count towards ``nnz``.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _row_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        data = np.ascontiguousarray(self.values, dtype=np.float64)
        nrows, ncols = int(self.nrows), int(self.ncols)
        if nrows < 0 or ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if indptr.shape != (nrows + 1,):
            raise ValueError("row_offsets must have length nrows + 1")
        nnz = indices.shape[0]
        if data.shape != (nnz,):
            raise ValueError("values and col_indices must have equal length")
        if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
            raise ValueError("row_offsets must be non-decreasing from 0 to nnz")
        if nnz:
            if indices.min() < 0 or indices.max() >= ncols:
                raise ValueError("column index out of range")
            # strictly increasing within each row: a decrease is only allowed
            # where a new row starts
            step = np.diff(indices)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[indptr[1:-1][indptr[1:-1] < nnz]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within rows")
            if not np.all(np.isfinite(data)):
                raise ValueError("matrix contains NaN or Inf values")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "nrows", nrows)
        object.__setattr__(self, "ncols", ncols)
        object.__setattr__(self, "row_offsets", indptr)
        object.__setattr__(self, "col_indices", indices)
        object.__setattr__(self, "values", data)
        row_ids = np.repeat(np.arange(nrows, dtype=np.int64), np.diff(indptr))
        row_ids.setflags(write=False)
        object.__setattr__(self, "_row_ids", row_ids)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def matvec(self, x, out=None, counter=None):
        return matvec(self, x, out=out, counter=counter)

    def rmatvec(self, y, out=None, counter=None):
        return rmatvec(self, y, out=out, counter=counter)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def _vector(x, n, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"{name} has shape {x.shape}, expected ({n},)")
    return np.ascontiguousarray(x)


def _out(out, n):
    if out is None:
        return np.empty(n)
    if out.shape != (n,) or out.dtype != np.float64 or not out.flags.c_contiguous:
        raise DimensionError(f"output buffer must be a contiguous float64 vector of length {n}")
    return out


def _kwargs(A):
    return {"row_ids": A._row_ids} if _backend.kernels.BACKEND == "python" else {}


def matvec(A: SparseMatrix, x, out=None, counter: FlopCounter | None = None):
    """Return ``A @ x``; charges ``2 * nnz`` flops to ``counter`` if given."""
    x = _vector(x, A.ncols, "x")
    out = _out(out, A.nrows)
    _backend.kernels.csr_matvec(A.row_offsets, A.col_indices, A.values, x, out, **_kwargs(A))
    if counter is not None:
        counter.add_mv(A.nnz)
    return out


def rmatvec(A: SparseMatrix, y, out=None, counter: FlopCounter | None = None):
    """Return ``A.T @ y`` without forming the transpose."""
    y = _vector(y, A.nrows, "y")
    out = _out(out, A.ncols)
    _backend.kernels.csr_rmatvec(A.row_offsets, A.col_indices, A.values, y, out, **_kwargs(A))
    if counter is not None:
        counter.add_mv(A.nnz)
    return out


def normal_matvec(A: SparseMatrix, x, shift=0.0, out=None, work=None,
                  counter: FlopCounter | None = None):
    """Return ``A.T @ (A @ x) + shift * x`` in one fused sweep (two MV of cost)."""
    x = _vector(x, A.ncols, "x")
    out = _out(out, A.ncols)
    work = _out(work, A.nrows)
    _backend.kernels.csr_normal_matvec(
        A.row_offsets, A.col_indices, A.values, x, float(shift), work, out, **_kwargs(A)
    )
    if counter is not None:
        counter.add_mv(A.nnz, 2)
    return out


def one_norm(A: SparseMatrix) -> float:
    """Maximum absolute column sum."""
    if A.nnz == 0:
        return 0.0
    sums = np.bincount(A.col_indices, weights=np.abs(A.values), minlength=A.ncols)
    return float(sums.max())


def to_dense(A: SparseMatrix, cap: int = DENSE_CAP) -> np.ndarray:
    if A.nrows * A.ncols > cap:
        raise DenseCapError(
            f"dense copy of {A.nrows}x{A.ncols} exceeds the cap of {cap} entries"
        )
    dense = np.zeros((A.nrows, A.ncols))
    dense[A._row_ids, A.col_indices] = A.values
    return dense


def from_dense(D, keep_zeros: bool = False) -> SparseMatrix:
    """Build a CSR matrix from a dense 2-D array (zeros dropped unless ``keep_zeros``)."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2:
        raise DimensionError("expected a 2-D array")
    mask = np.ones(D.shape, dtype=bool) if keep_zeros else D != 0
    rows, cols = np.nonzero(mask)
    indptr = np.zeros(D.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=D.shape[0]), out=indptr[1:])
    return SparseMatrix(D.shape[0], D.shape[1], indptr, cols, D[rows, cols])


def _from_coo(nrows, ncols, rows, cols, vals) -> SparseMatrix:
    """CSR from 0-based triplets; duplicates are summed, rows sorted by column."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        new = np.ones(rows.size, dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nrows), out=indptr[1:])
    return SparseMatrix(nrows, ncols, indptr, cols, vals)


def _data_lines(lines, start):
    """Yield ``(lineno, stripped)`` for non-blank, non-comment lines."""
    for lineno, raw in enumerate(lines, start=start):
        line = raw.strip()
        if line and not line.startswith("%"):
            yield lineno, line


def parse_matrix_market(text) -> SparseMatrix:
    """Parse a Matrix Market ``coordinate``/``array`` real general/symmetric matrix.

    Parameters
    ----------
    text : bytes or str
        Full file contents.

    Returns
    -------
    SparseMatrix
        Symmetric storage is expanded to both triangles, duplicate coordinate
        entries are summed and explicit zeros are kept. A dense ``array``
        file stores every entry.

    Raises
    ------
    MatrixMarketError
        Malformed header or size line, an unsupported field or symmetry,
        out-of-range indices, bad numbers, or too few/many entries. The
        message carries the offending 1-based line number.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError:
            text = bytes(text).decode("latin-1")
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty input", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    fmt, fld, sym = (h.lower() for h in header[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unknown format {fmt!r}", 1)
    if fld != "real" and fld != "double":
        raise MatrixMarketError(f"unsupported field {fld!r}; only real matrices are read", 1)
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)
    if fmt == "array" and sym != "general":
        raise MatrixMarketError("only 'array real general' is supported", 1)

    body = _data_lines(lines[1:], start=2)
    try:
        size_lineno, size_line = next(body)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines)) from None
    try:
        dims = [int(t) for t in size_line.split()]
    except ValueError:
        raise MatrixMarketError(f"bad size line {size_line!r}", size_lineno) from None
    expected_len = 3 if fmt == "coordinate" else 2
    if len(dims) != expected_len or min(dims) < 0:
        raise MatrixMarketError(f"bad size line {size_line!r}", size_lineno)
    nrows, ncols = dims[0], dims[1]
    if sym == "symmetric" and nrows != ncols:
        raise MatrixMarketError("symmetric matrix must be square", size_lineno)

    if fmt == "array":
        count = nrows * ncols
        vals = np.empty(count)
        got = 0
        last = size_lineno
        for lineno, line in body:
            last = lineno
            for tok in line.split():
                if got >= count:
                    raise MatrixMarketError("more entries than declared", lineno)
                try:
                    vals[got] = float(tok)
                except ValueError:
                    raise MatrixMarketError(f"bad value {tok!r}", lineno) from None
                got += 1
        if got < count:
            raise MatrixMarketError(f"truncated: {got} of {count} entries", last)
        dense = vals.reshape((ncols, nrows)).T  # column-major on disk
        return from_dense(dense, keep_zeros=True)

    nnz = dims[2]
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    got = 0
    last = size_lineno
    for lineno, line in body:
        last = lineno
        if got >= nnz:
            raise MatrixMarketError("more entries than declared", lineno)
        toks = line.split()
        if len(toks) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {line!r}", lineno)
        try:
            i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError:
            raise MatrixMarketError(f"bad entry {line!r}", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range for {nrows}x{ncols}", lineno)
        if not np.isfinite(v):
            raise MatrixMarketError(f"non-finite value {toks[2]!r}", lineno)
        rows[got], cols[got], vals[got] = i - 1, j - 1, v
        got += 1
    if got < nnz:
        raise MatrixMarketError(f"truncated: {got} of {nnz} entries", last)
    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return _from_coo(nrows, ncols, rows, cols, vals)


def _read_bytes(path) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else io.open
    with opener(path, "rb") as fh:
        return fh.read()


def read_matrix_market(path) -> SparseMatrix:
    """Read a ``.mtx`` (optionally ``.mtx.gz``) file."""
    return parse_matrix_market(_read_bytes(path))


def read_vector(path) -> np.ndarray:
    """Read a right-hand side stored as an ``m x 1`` Matrix Market matrix."""
    M = read_matrix_market(path)
    if M.ncols != 1:
        raise MatrixMarketError(f"expected a single column, got {M.ncols}")
    return to_dense(M, cap=max(DENSE_CAP, M.nrows))[:, 0]
