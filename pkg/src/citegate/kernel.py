"""Backend selection for the similarity kernel.

Prefers the compiled Cython extension when it was built; otherwise falls
back to the pure-Python twin.  Both expose the same ``dot_scores``
contract and produce bit-identical results.
"""

from __future__ import annotations

from array import array

try:
    from citegate import _simkernel as _impl  # type: ignore[attr-defined]

    COMPILED = True
except ImportError:  # extension not built — pure fallback
    from citegate import _pykernel as _impl  # type: ignore[no-redef]

    COMPILED = False

BACKEND: str = _impl.BACKEND


def dot_scores(data: array, query: array, out: array) -> None:
    """Score every row of ``data`` (flat row-major doubles) against ``query``."""
    if len(out) * len(query) != len(data):
        raise ValueError(
            f"buffer mismatch: {len(data)} values != {len(out)} rows x {len(query)} dims"
        )
    _impl.dot_scores(data, query, out)


def cosine_scores(data: array, query: array, n: int) -> array:
    """Return an ``array('d')`` of ``n`` cosine scores for unit-vector rows."""
    out = array("d", bytes(8 * n))
    dot_scores(data, query, out)
    return out
