# cython: language_level=3
"""Compiled CSR kernels.

Every kernel accumulates in storage order, row by row, starting from 0.0,
so results are bitwise identical to :mod:`fmlsmr._pykernels`.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    """out <- A @ x."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double s
    with nogil:
        for i in range(nrows):
            s = 0.0
            for j in range(indptr[i], indptr[i + 1]):
                s = s + data[j] * x[indices[j]]
            out[i] = s
    return np.asarray(out)


def csr_rmatvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[::1] data, const double[::1] y, double[::1] out):
    """out <- A.T @ y, scattered over rows."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t ncols = out.shape[0]
    cdef Py_ssize_t i, j
    cdef double yi
    with nogil:
        for i in range(ncols):
            out[i] = 0.0
        for i in range(nrows):
            yi = y[i]
            for j in range(indptr[i], indptr[i + 1]):
                out[indices[j]] = out[indices[j]] + data[j] * yi
    return np.asarray(out)


def csr_normal_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                      const double[::1] data, const double[::1] x, double shift,
                      double[::1] work, double[::1] out):
    """out <- A.T @ (A @ x) + shift * x, with ``work`` (length nrows) as scratch.

    Fuses the two sweeps: each row's dot product is scattered back as soon
    as it is formed, so ``work`` is written but never re-read.
    """
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t ncols = out.shape[0]
    cdef Py_ssize_t i, j
    cdef double s
    with nogil:
        for i in range(ncols):
            out[i] = 0.0
        for i in range(nrows):
            s = 0.0
            for j in range(indptr[i], indptr[i + 1]):
                s = s + data[j] * x[indices[j]]
            work[i] = s
            for j in range(indptr[i], indptr[i + 1]):
                out[indices[j]] = out[indices[j]] + data[j] * s
        if shift != 0.0:
            for i in range(ncols):
                out[i] = out[i] + shift * x[i]
    return np.asarray(out)
