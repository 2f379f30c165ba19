"""Special functions for the super-Gaussian amplitude estimator.

Only what the gain needs: ``ln Gamma`` and Kummer's confluent hypergeometric
function ``M(a, 1; x)`` for ``x >= 0``, plus the log-ratio
``ln M(a1, 1; x) - ln M(a2, 1; x)``. The ratio is raised to ``1/beta`` with
``beta`` as small as 1e-3, so it is always evaluated in the log domain.

All functions accept scalars or numpy arrays and broadcast like ufuncs.
"""

import numpy as np

from .errors import RangeError

__all__ = ["log_gamma", "kummer_m", "log_kummer_ratio", "SERIES_MAX_X", "KUMMER_MAX_X"]

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

SERIES_MAX_X = 30.0
KUMMER_MAX_X = 700.0

_SERIES_TOL = 1e-17
_ASYMPTOTIC_TERMS = 12


def _lanczos_log_gamma(z):
    # valid for z >= 0.5
    zm1 = z - 1.0
    acc = np.full_like(zm1, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (zm1 + i)
    t = zm1 + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (zm1 + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(z):
    """Natural log of the gamma function for real ``z > 0``.

    Arguments below 0.5 are shifted up by one with ``ln G(z) = ln G(z+1) - ln z``.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z_arr)) or np.any(z_arr <= 0):
        raise ValueError("log_gamma requires finite z > 0")
    small = z_arr < 0.5
    zz = np.where(small, z_arr + 1.0, z_arr)
    out = _lanczos_log_gamma(zz)
    out = np.where(small, out - np.log(z_arr), out)
    return out[()] if out.ndim == 0 else out


def _series(a, x):
    """Sum of the defining series of M(a, 1; x); intended for moderate |x|.

    Terms alternate for negative x, so accuracy degrades as |x| grows there.
    """
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    a, x = np.broadcast_arrays(a, x)
    term = np.ones(a.shape)
    total = np.ones(a.shape)
    n = 0
    limit = 50 + int(np.ceil(4 * np.max(np.abs(x), initial=0.0)))
    while n < limit:
        term = term * (a + n) * x / ((n + 1.0) ** 2)
        total = total + term
        n += 1
        if n > np.max(np.abs(x), initial=0.0) and np.all(np.abs(term) <= _SERIES_TOL * np.abs(total)):
            break
    return total


def _scaled_series(a_list, x):
    """``exp(-x) * M(a, 1; x)`` for each ``a`` in ``a_list``, 0 <= x <= 700.

    ``exp(-x) M(a, 1; x) = M(1 - a, 1; -x)`` (Kummer's transformation). The
    right-hand series alternates and cancels catastrophically for large x,
    so the transformed value is accumulated from the positive terms of the
    left-hand series, started at ``exp(-x)`` instead of 1. The ``exp(x)``
    factor then never has to be formed.

    Converged entries are dropped from the working set as the loop runs.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    a_arr = [np.broadcast_to(np.asarray(a, dtype=np.float64), x.shape).ravel() for a in a_list]
    out = [np.empty_like(x) for _ in a_list]
    idx = np.arange(x.size)
    xs = x.copy()
    a_act = [a.copy() for a in a_arr]
    terms = [np.exp(-xs) for _ in a_list]
    totals = [t.copy() for t in terms]
    n = 0
    while idx.size:
        n += 1
        denom = float(n * n)
        for j in range(len(a_list)):
            terms[j] = terms[j] * (a_act[j] + (n - 1)) * xs / denom
            totals[j] = totals[j] + terms[j]
        if n % 16 == 0:
            done = n > xs
            for j in range(len(a_list)):
                done &= terms[j] <= _SERIES_TOL * totals[j]
            if np.any(done):
                for j in range(len(a_list)):
                    out[j][idx[done]] = totals[j][done]
                keep = ~done
                idx = idx[keep]
                xs = xs[keep]
                for j in range(len(a_list)):
                    a_act[j] = a_act[j][keep]
                    terms[j] = terms[j][keep]
                    totals[j] = totals[j][keep]
    return out


def kummer_m(a, x, b=1.0):
    """Kummer's function ``M(a, b; x)`` for ``a > 0``, ``b == 1``, ``0 <= x <= 700``.

    Power series for ``x <= 30``; above that ``exp(x) * M(1 - a, 1; -x)``.
    Negative ``x`` is accepted for moderate magnitude only (plain series).
    """
    if b != 1.0:
        raise ValueError("only b == 1 is supported")
    a_arr = np.asarray(a, dtype=np.float64)
    x_arr = np.asarray(x, dtype=np.float64)
    if not (np.all(np.isfinite(a_arr)) and np.all(np.isfinite(x_arr))):
        raise ValueError("kummer_m requires finite arguments")
    if np.any(x_arr > KUMMER_MAX_X):
        raise RangeError(f"kummer_m: x above {KUMMER_MAX_X} overflows")
    a_arr, x_arr = np.broadcast_arrays(a_arr, x_arr)
    out = np.empty(a_arr.shape)
    low = x_arr <= SERIES_MAX_X
    if np.any(low):
        out[low] = _series(a_arr[low], x_arr[low])
    high = ~low
    if np.any(high):
        (scaled,) = _scaled_series([a_arr[high]], x_arr[high])
        out[high] = np.exp(x_arr[high]) * scaled
    return out[()] if out.ndim == 0 else out


def _log_asymptotic(a, x):
    # ln M(a,1;x) - x  for large x:  (a-1) ln x - ln G(a) + ln sum_s ((1-a)_s)^2 / s! x^-s
    total = np.ones(np.broadcast(a, x).shape)
    term = np.ones_like(total)
    for s in range(_ASYMPTOTIC_TERMS):
        term = term * (s + 1.0 - a) ** 2 / ((s + 1.0) * x)
        total = total + term
    return (a - 1.0) * np.log(x) - log_gamma(a) + np.log(total)


def log_kummer_ratio(a1, a2, x):
    """``ln M(a1, 1; x) - ln M(a2, 1; x)`` for ``a1, a2 > 0`` and ``x >= 0``.

    The ``exp(x)`` growth of both functions is cancelled analytically, so no
    intermediate overflows. Past ``x = 700`` the leading-order asymptotic
    expansion is used; its truncation error there is below 1e-30.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(a1 <= 0) or np.any(a2 <= 0):
        raise ValueError("log_kummer_ratio requires a1, a2 > 0")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("log_kummer_ratio requires finite x >= 0")
    a1, a2, x = np.broadcast_arrays(a1, a2, x)
    out = np.zeros(x.shape)
    same = a1 == a2
    low = (x <= SERIES_MAX_X) & ~same
    mid = (x > SERIES_MAX_X) & (x <= KUMMER_MAX_X) & ~same
    high = (x > KUMMER_MAX_X) & ~same
    if np.any(low):
        out[low] = np.log(_series(a1[low], x[low])) - np.log(_series(a2[low], x[low]))
    if np.any(mid):
        s1, s2 = _scaled_series([a1[mid], a2[mid]], x[mid])
        out[mid] = np.log(s1) - np.log(s2)
    if np.any(high):
        out[high] = _log_asymptotic(a1[high], x[high]) - _log_asymptotic(a2[high], x[high])
    return out[()] if out.ndim == 0 else out
