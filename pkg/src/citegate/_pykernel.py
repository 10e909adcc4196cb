"""Pure-Python twin of the compiled similarity kernel.

Kept operation-for-operation identical to ``_simkernel.pyx`` (same
multiply-add order) so both backends return bit-identical doubles.
"""

from __future__ import annotations

BACKEND = "pure"


def dot_scores(data, query, out):
    """Write the dot product of ``query`` against each row of ``data``.

    ``data`` is a flat row-major buffer of ``len(out)`` rows, each of
    ``len(query)`` components.  Rows are unit vectors, so the dot product
    is the cosine similarity.
    """
    dim = len(query)
    n = len(out)
    for i in range(n):
        base = i * dim
        acc = 0.0
        for j in range(dim):
            acc += data[base + j] * query[j]
        out[i] = acc
