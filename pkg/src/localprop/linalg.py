"""Dense vector/matrix arithmetic with a fixed summation order.

Vectors and matrices are plain float64 numpy arrays. Every reduction is
carried out in ascending index order through ``np.add.accumulate`` (which is
strictly sequential), never through BLAS or numpy's pairwise ``sum``.  Two
runs that feed the same inputs through these helpers therefore produce
bitwise-identical results regardless of thread count or library build.

Most helpers accept either a single vector of shape ``(d,)`` or a stack of
per-example vectors of shape ``(N, d)``; the example axis is never reduced
unless the function name says so (``outer_sum``, ``total``).
"""
from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

FLOAT = np.float64


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up where only finite values are allowed."""


def as_vector(data) -> np.ndarray:
    v = np.asarray(data, dtype=FLOAT)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(data) -> np.ndarray:
    m = np.asarray(data, dtype=FLOAT)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def zeros(n: int) -> np.ndarray:
    return np.zeros(n, dtype=FLOAT)


# ---------------------------------------------------------------------------
# multiply-accumulate accounting
# ---------------------------------------------------------------------------

class MacCounter:
    """Thread-safe tally of multiply-accumulate operations."""

    def __init__(self):
        self._lock = threading.Lock()
        self.enabled = False
        self.count = 0

    def add(self, n: int) -> None:
        if self.enabled:
            with self._lock:
                self.count += int(n)

    def reset(self) -> None:
        with self._lock:
            self.count = 0


macs = MacCounter()


@contextmanager
def count_macs():
    """Count MACs issued by matvec/outer helpers inside the block.

    >>> with count_macs() as c:
    ...     _ = matvec(np.eye(2), np.ones(2))
    >>> c.count
    4
    """
    prev = macs.enabled
    macs.reset()
    macs.enabled = True
    try:
        yield macs
    finally:
        macs.enabled = prev


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _seq_sum(a: np.ndarray, axis: int) -> np.ndarray:
    # accumulate is sequential; its last slice is the ascending-order sum
    if a.shape[axis] == 0:
        shape = list(a.shape)
        del shape[axis]
        return np.zeros(shape, dtype=FLOAT)
    return np.take(np.add.accumulate(a, axis=axis), -1, axis=axis)


def total(a) -> float:
    """Sum of all entries, row-major ascending order."""
    flat = np.asarray(a, dtype=FLOAT).ravel()
    if flat.size == 0:
        return 0.0
    return float(np.add.accumulate(flat)[-1])


def dot(a, b) -> float:
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.shape != b.shape:
        raise ValueError(f"dot: shape mismatch {a.shape} vs {b.shape}")
    return total(a * b)


def l1_norm(a) -> float:
    return total(np.abs(np.asarray(a, dtype=FLOAT)))


def l2_norm_sq(a) -> float:
    a = np.asarray(a, dtype=FLOAT)
    return total(a * a)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def matvec(m, v) -> np.ndarray:
    """``result[..., r] = sum_c m[r, c] * v[..., c]`` in ascending ``c``."""
    m = np.asarray(m, dtype=FLOAT)
    v = np.asarray(v, dtype=FLOAT)
    if m.ndim != 2 or v.shape[-1:] != (m.shape[1],):
        raise ValueError(f"matvec: matrix {m.shape} incompatible with vector {v.shape}")
    macs.add(m.size * (v.size // max(m.shape[1], 1)))
    return _seq_sum(v[..., None, :] * m, axis=-1)


def matvec_transposed(m, v) -> np.ndarray:
    """``result[..., c] = sum_r m[r, c] * v[..., r]`` in ascending ``r``."""
    m = np.asarray(m, dtype=FLOAT)
    v = np.asarray(v, dtype=FLOAT)
    if m.ndim != 2 or v.shape[-1:] != (m.shape[0],):
        raise ValueError(
            f"matvec_transposed: matrix {m.shape} incompatible with vector {v.shape}")
    macs.add(m.size * (v.size // max(m.shape[0], 1)))
    return _seq_sum(v[..., :, None] * m, axis=-2)


def outer(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("outer expects two 1-D vectors")
    macs.add(a.size * b.size)
    return a[:, None] * b[None, :]


def outer_sum(a, b) -> np.ndarray:
    """Sum over examples of ``a[i] (x) b[i]``, examples added in ascending order."""
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"outer_sum: incompatible stacks {a.shape} and {b.shape}")
    macs.add(a.size * b.shape[1])
    if a.shape[0] == 0:
        return np.zeros((a.shape[1], b.shape[1]), dtype=FLOAT)
    return _seq_sum(a[:, :, None] * b[:, None, :], axis=0)


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.shape != b.shape:
        raise ValueError(f"hadamard: shape mismatch {a.shape} vs {b.shape}")
    return a * b


def axpy(y, s: float, x) -> np.ndarray:
    """Return ``y + s * x`` (a new array)."""
    y = np.asarray(y, dtype=FLOAT)
    x = np.asarray(x, dtype=FLOAT)
    if y.shape != x.shape:
        raise ValueError(f"axpy: shape mismatch {y.shape} vs {x.shape}")
    return y + s * x


def scale(s: float, x) -> np.ndarray:
    return s * np.asarray(x, dtype=FLOAT)


def emap(f, a) -> np.ndarray:
    return np.asarray(f(np.asarray(a, dtype=FLOAT)), dtype=FLOAT)


def transpose(m) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(m).T)


def check_finite(a, what: str = "value") -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite entries in {what}")
