"""
Special functions used by the spectral gain.

Only the neighbourhood the post-filter needs is supported for Kummer's
function: a in [-1, 0], c = 1 (or any c > 0 with c - a > 0), x in
[-1e6, 0]. Small |x| goes through Kummer's transformation so the series has
positive terms only; large |x| uses the large-argument expansion.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import rgamma

from multisource_separator.exceptions import SpecialFunctionDomainError

ArrayLike = Union[float, np.ndarray]

SERIES_LIMIT = 40.0  # |x| at which we switch to the asymptotic expansion
X_MIN = -1e6
_SERIES_TERMS = 200
_ASYMPTOTIC_TERMS = 80


def gamma_fn(x: ArrayLike) -> ArrayLike:
    """
    Gamma function for positive real arguments.

    Raises:
        SpecialFunctionDomainError: If any x <= 0 or is not finite
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise SpecialFunctionDomainError(f"gamma_fn requires finite x > 0, got {x}")
    result = _gamma(arr)
    return float(result) if np.ndim(x) == 0 else result


def _check_kummer_domain(a: float, c: float, x: np.ndarray) -> None:
    if not (np.isfinite(a) and np.isfinite(c)):
        raise SpecialFunctionDomainError(f"kummer_m parameters must be finite (a={a}, c={c})")
    if c <= 0.0 and float(c).is_integer():
        raise SpecialFunctionDomainError(f"kummer_m: c must not be zero or a negative integer, got {c}")
    if c <= 0.0 or c - a <= 0.0:
        raise SpecialFunctionDomainError(
            f"kummer_m supports c > 0 and c - a > 0 only (a={a}, c={c})"
        )
    if np.any(~np.isfinite(x)) or np.any(x > 0.0) or np.any(x < X_MIN):
        raise SpecialFunctionDomainError(
            f"kummer_m requires x in [{X_MIN:g}, 0], got values in "
            f"[{np.nanmin(x):g}, {np.nanmax(x):g}]"
        )


def _series_transformed(a: float, c: float, x: np.ndarray) -> np.ndarray:
    """M(a;c;x) = e^x M(c-a;c;-x), the right side summed with positive terms."""
    b = c - a
    z = (-x).astype(np.longdouble)
    term = np.ones_like(z)
    total = np.ones_like(z)
    limit = _SERIES_TERMS + int(2.0 * float(z.max(initial=0.0)))
    for n in range(limit):
        term = term * (b + n) / (c + n) * z / (n + 1)
        total += term
        if np.all(term <= total * np.finfo(np.longdouble).eps):
            break
    return (np.exp(x.astype(np.longdouble)) * total).astype(np.float64)


def _asymptotic_series(p: float, q: float, w: np.ndarray) -> np.ndarray:
    """Sum_s (p)_s (q)_s / s! * w^-s, truncated at its smallest term."""
    term = np.ones_like(w)
    total = np.ones_like(w)
    active = np.ones(w.shape, dtype=bool)
    previous = np.full(w.shape, np.inf)
    for s in range(_ASYMPTOTIC_TERMS):
        term = term * (p + s) * (q + s) / ((s + 1) * w)
        magnitude = np.abs(term)
        # Stop where terms start growing again (optimal truncation).
        active &= magnitude < previous
        total = np.where(active, total + term, total)
        previous = np.where(active, magnitude, previous)
        if not np.any(active & (magnitude > np.abs(total) * 1e-17)):
            break
    return total


def _asymptotic(a: float, c: float, x: np.ndarray) -> np.ndarray:
    """Large negative x: algebraic branch plus the exponentially small one."""
    w = -x
    algebraic = (
        _gamma(c) * rgamma(c - a) * w ** (-a) * _asymptotic_series(a, a - c + 1.0, w)
    )
    # e^x x^(a-c) / Gamma(a) branch; |x|^(a-c) with the sign of (-1)^(a-c)
    # folded in is immaterial below e^-40.
    exponential = (
        _gamma(c) * rgamma(a) * np.exp(x) * w ** (a - c)
        * _asymptotic_series(1.0 - a, c - a, -w)
    )
    return algebraic + exponential * np.cos(np.pi * (a - c))


def kummer_m(a: float, c: float, x: ArrayLike) -> ArrayLike:
    """
    Kummer's confluent hypergeometric function M(a; c; x) for x <= 0.

    Args:
        a: First parameter
        c: Second parameter (not zero or a negative integer; c - a > 0)
        x: Argument(s) in [-1e6, 0]

    Returns:
        M(a; c; x), with the shape of x

    Raises:
        SpecialFunctionDomainError: On a parameter or argument outside the domain
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_kummer_domain(float(a), float(c), arr)

    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    near = -flat <= SERIES_LIMIT
    if np.any(near):
        out[near] = _series_transformed(float(a), float(c), flat[near])
    if np.any(~near):
        out[~near] = _asymptotic(float(a), float(c), flat[~near])
    out = out.reshape(arr.shape)
    return float(out) if np.ndim(x) == 0 else out


def kummer_series(a: float, c: float, x: ArrayLike) -> ArrayLike:
    """Transformed power series on its own, for any x in the domain (|x| up to ~700)."""
    arr = np.asarray(x, dtype=np.float64)
    _check_kummer_domain(float(a), float(c), arr)
    out = _series_transformed(float(a), float(c), arr.reshape(-1)).reshape(arr.shape)
    return float(out) if np.ndim(x) == 0 else out


def kummer_asymptotic(a: float, c: float, x: ArrayLike) -> ArrayLike:
    """Large-argument expansion on its own; accurate for |x| beyond ~20."""
    arr = np.asarray(x, dtype=np.float64)
    _check_kummer_domain(float(a), float(c), arr)
    if np.any(arr == 0.0):
        raise SpecialFunctionDomainError("kummer_asymptotic is undefined at x = 0")
    out = _asymptotic(float(a), float(c), arr.reshape(-1)).reshape(arr.shape)
    return float(out) if np.ndim(x) == 0 else out
