# cython: language_level=3
"""Compiled similarity kernel: batched dot products over a flat buffer.

Twin of ``_pykernel.py``; keep the arithmetic order in sync so the two
backends agree bit for bit (the build disables fp contraction for this).
"""

BACKEND = "compiled"


def dot_scores(const double[::1] data, const double[::1] query, double[::1] out):
    """Write the dot product of ``query`` against each row of ``data``."""
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t dim = query.shape[0]
    cdef Py_ssize_t i, j, base
    cdef double acc
    with nogil:
        for i in range(n):
            base = i * dim
            acc = 0.0
            for j in range(dim):
                acc += data[base + j] * query[j]
            out[i] = acc
