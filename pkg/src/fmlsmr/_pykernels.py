"""NumPy fallback for the CSR kernels in ``_ckernels.pyx``.

``np.bincount`` accumulates weights in input order, which for CSR storage is
row-major, matching the compiled loops term for term.
"""
import numpy as np

BACKEND = "python"


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, out, row_ids=None):
    if row_ids is None:
        row_ids = _row_ids(indptr)
    out[:] = np.bincount(row_ids, weights=data * x[indices], minlength=out.shape[0])
    return out


def csr_rmatvec(indptr, indices, data, y, out, row_ids=None):
    if row_ids is None:
        row_ids = _row_ids(indptr)
    out[:] = np.bincount(indices, weights=data * y[row_ids], minlength=out.shape[0])
    return out


def csr_normal_matvec(indptr, indices, data, x, shift, work, out, row_ids=None):
    if row_ids is None:
        row_ids = _row_ids(indptr)
    csr_matvec(indptr, indices, data, x, work, row_ids)
    csr_rmatvec(indptr, indices, data, work, out, row_ids)
    if shift != 0.0:
        out += shift * x
    return out
