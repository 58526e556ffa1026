"""Order-independent, correctly rounded averaging of float arrays.

Floats are split into integer mantissas and binary exponents, summed
exactly with Python integers, and rounded once at the end. Any two
computations over the same multiset of summands therefore agree bit for
bit, regardless of order or grouping.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def exact_sum(values) -> Fraction:
    """Exact rational sum of a float array (finite entries only)."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        return Fraction(0)
    mant, expo = np.frexp(x)
    ints = (mant * 2.0**53).astype(np.int64)
    expo = expo.astype(np.int64) - 53
    # split so per-exponent partial sums cannot overflow int64
    hi = ints >> 26
    lo = ints & ((1 << 26) - 1)
    keys, inv = np.unique(expo, return_inverse=True)
    hi_sum = np.zeros(keys.size, dtype=np.int64)
    lo_sum = np.zeros(keys.size, dtype=np.int64)
    np.add.at(hi_sum, inv, hi)
    np.add.at(lo_sum, inv, lo)
    emin = int(keys[0])
    total = 0
    for k, h, l in zip(keys.tolist(), hi_sum.tolist(), lo_sum.tolist()):
        total += ((h << 26) + l) << (k - emin)
    if emin >= 0:
        return Fraction(total << emin)
    return Fraction(total, 1 << -emin)


def exact_mean(values, count: int | None = None) -> float:
    """Correctly rounded ``sum(values) / count``.

    Falls back to plain floating arithmetic when any entry is non-finite.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if count is None:
        count = x.size
    if count == 0:
        raise ValueError("mean of zero terms")
    if not np.all(np.isfinite(x)):
        return float(np.sum(x) / count)
    return float(exact_sum(x) / count)
