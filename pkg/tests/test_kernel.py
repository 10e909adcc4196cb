"""Similarity kernel: backend parity and contract checks."""

from __future__ import annotations

import random
from array import array

import pytest

from citegate import _pykernel, kernel


def _naive_scores(data, query, n, dim):
    return [
        sum(data[i * dim + j] * query[j] for j in range(dim)) for i in range(n)
    ]


def test_scores_match_naive_loop():
    rng = random.Random(7)
    n, dim = 40, 16
    data = array("d", [rng.uniform(-1, 1) for _ in range(n * dim)])
    query = array("d", [rng.uniform(-1, 1) for _ in range(dim)])
    scores = kernel.cosine_scores(data, query, n)
    expected = _naive_scores(data, query, n, dim)
    assert list(scores) == pytest.approx(expected, abs=1e-12)


def test_backends_agree_bit_for_bit():
    rng = random.Random(11)
    n, dim = 131, 48
    data = array("d", [rng.uniform(-1, 1) for _ in range(n * dim)])
    query = array("d", [rng.uniform(-1, 1) for _ in range(dim)])
    out_selected = array("d", bytes(8 * n))
    out_pure = array("d", bytes(8 * n))
    kernel.dot_scores(data, query, out_selected)
    _pykernel.dot_scores(data, query, out_pure)
    assert out_selected.tobytes() == out_pure.tobytes()


def test_buffer_mismatch_rejected():
    data = array("d", [1.0, 2.0, 3.0])
    query = array("d", [1.0, 0.0])
    out = array("d", [0.0])  # 1 row x 2 dims != 3 values
    with pytest.raises(ValueError):
        kernel.dot_scores(data, query, out)


def test_backend_reports_identity():
    assert kernel.BACKEND in ("compiled", "pure")
