"""Flat parameter-vector algebra and coordinate-wise statistics.

Parameter vectors are plain 1-D ``float64`` numpy arrays. Every function here
is pure and returns a fresh array.
"""

from typing import Sequence, Tuple

import numpy as np

from robustfed.errors import NumericError, StructuralError, UsageError

ParameterVector = np.ndarray


def as_vector(values) -> ParameterVector:
    v = np.array(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise StructuralError("parameter vector must have positive dimension")
    if not np.all(np.isfinite(v)):
        raise NumericError("parameter vector contains non-finite entries")
    return v


def zero(n: int) -> ParameterVector:
    return np.zeros(int(n), dtype=np.float64)


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise StructuralError(f"dimension mismatch: {a.size} vs {b.size}")


def _finite(v):
    if not np.all(np.isfinite(v)):
        raise NumericError("operation produced non-finite entries")
    return v


def add(a: ParameterVector, b: ParameterVector) -> ParameterVector:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    return _finite(a + b)


def scale(a: ParameterVector, c: float) -> ParameterVector:
    if not np.isfinite(c):
        raise UsageError("scale factor must be finite")
    return _finite(np.asarray(a, dtype=np.float64) * float(c))


def euclidean_distance(a: ParameterVector, b: ParameterVector) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def stack(vs: Sequence[ParameterVector]) -> np.ndarray:
    """Stack equal-length vectors into a ``(count, dim)`` matrix."""
    if len(vs) == 0:
        raise UsageError("need at least one vector")
    dims = {np.shape(v) for v in vs}
    if len(dims) != 1:
        raise StructuralError(f"vectors have differing dimensions: {sorted(dims)}")
    return np.array(vs, dtype=np.float64)


def weighted_fold(weights: Sequence[float], vs: Sequence[ParameterVector]) -> ParameterVector:
    """Sum ``w_i * v_i`` with a fixed left-to-right accumulation order.

    Keeping the order fixed makes results bit-reproducible regardless of how
    the inputs were produced.
    """
    if len(vs) == 0:
        raise UsageError("need at least one vector")
    acc = np.float64(weights[0]) * np.asarray(vs[0], dtype=np.float64)
    for w, v in zip(weights[1:], vs[1:]):
        acc = acc + np.float64(w) * np.asarray(v, dtype=np.float64)
    return acc


def coordinate_median(vs: Sequence[ParameterVector]) -> ParameterVector:
    """Per-coordinate median; even counts average the two middle values."""
    m = np.sort(stack(vs), axis=0)
    k = m.shape[0]
    if k % 2:
        return m[k // 2].copy()
    return (m[k // 2 - 1] + m[k // 2]) / 2.0


def coordinate_stats(vs: Sequence[ParameterVector]) -> Tuple[ParameterVector, ParameterVector]:
    """Per-coordinate mean and population standard deviation."""
    m = stack(vs)
    mean = m.mean(axis=0)
    std = np.sqrt(((m - mean) ** 2).mean(axis=0))
    return mean, std
