"""One-dimensional Sobol sequence in pure integer arithmetic.

The first dimension uses direction numbers ``v_k = 2**(32 - k)``, i.e. the
van der Corput sequence in base 2 visited in Gray-code order.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

BITS = 32


def sobol_indices(n: int, skip: int = 1) -> np.ndarray:
    """First ``n`` points as 32-bit integers, after skipping ``skip`` points."""
    if n < 0 or skip < 0:
        raise ValidationError("n and skip must be nonnegative")
    out = np.empty(n, dtype=np.uint64)
    x = 0
    for i in range(skip + n):
        if i >= skip:
            out[i - skip] = x
        # flip the direction number of the lowest zero bit of i
        c = ((~i) & (i + 1)).bit_length()
        x ^= 1 << (BITS - c)
    return out


def sobol_points(n: int, skip: int = 1) -> np.ndarray:
    return sobol_indices(n, skip).astype(np.float64) / float(1 << BITS)


def sobol_latencies(n: int, lo: float, hi: float) -> list[float]:
    """First ``n`` Sobol points (zero point skipped) scaled to [lo, hi]."""
    if not np.isfinite(lo) or not np.isfinite(hi) or not lo < hi:
        raise ValidationError("need finite lo < hi")
    if n < 0:
        raise ValidationError("n must be nonnegative")
    return (lo + (hi - lo) * sobol_points(n)).tolist()
