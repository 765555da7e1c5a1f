"""Input checks shared by the metric functions and estimators."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import UndefinedMetricError


def check_wealth(values, name="wealth") -> np.ndarray:
    """1-D, finite, non-negative. Integer input keeps an integer dtype."""
    arr = np.asarray(values)
    if arr.dtype == object:
        arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.dtype.kind == "b":
        arr = arr.astype(np.int64)
    if arr.dtype.kind not in "iuf":
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative entries")
    if arr.dtype.kind == "u":
        arr = arr.astype(np.int64) if arr.size == 0 or arr.max() < 2**63 else arr.astype(np.float64)
    return arr


def exact_integers(arr: np.ndarray) -> list[int]:
    """Integers proportional to ``arr`` with no rounding.

    Floats are rescaled by a common power of two, which leaves every ratio
    between entries unchanged.
    """
    if arr.dtype.kind in "iu":
        return [int(v) for v in arr]
    mant, exp = np.frexp(arr.astype(np.float64))
    mant = (mant * 2.0**53).astype(np.int64)
    nz = mant != 0
    if not nz.any():
        return [0] * arr.size
    emin = int(exp[nz].min())
    return [int(m) << int(e - emin) if m else 0 for m, e in zip(mant, exp)]


def check_threshold(s) -> Fraction:
    """Supply share in (0, 1) as an exact fraction; floats snap to the nearest simple ratio."""
    if isinstance(s, str):
        frac = Fraction(s)
    elif isinstance(s, Fraction):
        frac = s
    else:
        frac = Fraction(float(s)).limit_denominator(10**6)
    if not 0 < frac < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {s}")
    return frac


def check_degrees(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError("degrees must be one-dimensional")
    if arr.size == 0:
        raise UndefinedMetricError("empty degree sample")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("degrees must be integers")
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"degrees must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.min() < 1:
        raise ValueError("degrees must be >= 1")
    return arr
