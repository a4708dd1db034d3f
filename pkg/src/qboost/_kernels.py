"""JIT-compiled single-pass kernels for the fit and gain hot paths.

These mirror the vectorized numpy formulas in :mod:`recovery` and
:mod:`sampling` exactly (same clamps, same branch thresholds); tests
assert agreement to float precision.  numpy remains the fallback when
numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


LOG_SQRT_2PI = 0.9189385332046727
SQRT1_2 = 0.7071067811865476


@njit(cache=True)
def _log_ndtr(d: float) -> float:
    """log Phi(d); asymptotic branch below -36 where erfc underflows,
    log1p branch above 6 where Phi rounds to 1."""
    if d < -36.0:
        d2 = d * d
        series = 1.0 - 1.0 / d2 + 3.0 / (d2 * d2) - 15.0 / (d2 * d2 * d2)
        return -0.5 * d2 - math.log(-d) - LOG_SQRT_2PI + math.log(series)
    if d > 6.0:
        return math.log1p(-0.5 * math.erfc(d * SQRT1_2))
    return math.log(0.5 * math.erfc(-d * SQRT1_2))


@njit(cache=True)
def _mills(d: float) -> float:
    """phi(d) / Phi(d) with the matching asymptotic branch."""
    if d < -36.0:
        d2 = d * d
        series = 1.0 - 1.0 / d2 + 3.0 / (d2 * d2) - 15.0 / (d2 * d2 * d2)
        return -d / series
    return math.exp(-0.5 * d * d - LOG_SQRT_2PI - _log_ndtr(d))


@njit(cache=True)
def case3_value_grad(s, t, iu, ju, mij, mji, ridge, d_clamp):
    n = s.shape[0]
    grad = np.zeros(2 * n)
    sig2 = np.exp(2.0 * t)
    value = 0.0
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        c2 = sig2[i] + sig2[j]
        c = math.sqrt(c2)
        d = (s[i] - s[j]) / c
        if d > d_clamp:
            d = d_clamp
        elif d < -d_clamp:
            d = -d_clamp
        value += mij[k] * _log_ndtr(d) + mji[k] * _log_ndtr(-d)
        g = mij[k] * _mills(d) - mji[k] * _mills(-d)
        gs = g / c
        grad[i] += gs
        grad[j] -= gs
        coef = -(g * d) / c2
        grad[n + i] += coef * sig2[i]
        grad[n + j] += coef * sig2[j]
    if ridge > 0.0:
        for k in range(n):
            value -= ridge * t[k] * t[k]
            grad[n + k] -= 2.0 * ridge * t[k]
    return value, grad


@njit(cache=True)
def case3_hessian(s, t, iu, ju, mij, mji, ridge, d_clamp):
    n = s.shape[0]
    hess = np.zeros((2 * n, 2 * n))
    sig2 = np.exp(2.0 * t)
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        si2 = sig2[i]
        sj2 = sig2[j]
        si = math.sqrt(si2)
        sj = math.sqrt(sj2)
        c2 = si2 + sj2
        c = math.sqrt(c2)
        d = (s[i] - s[j]) / c
        if d > d_clamp:
            d = d_clamp
        elif d < -d_clamp:
            d = -d_clamp
        rp = _mills(d)
        rn = _mills(-d)
        g = mij[k] * rp - mji[k] * rn
        a = mij[k] * (-rp * (d + rp)) + mji[k] * (-rn * (-d + rn))
        # score block
        h_pair = a / c2
        hess[i, j] -= h_pair
        hess[j, i] -= h_pair
        hess[i, i] += h_pair
        hess[j, j] += h_pair
        # dispersion block (sigma), mapped to t = log sigma
        di = -d * si / c2
        dj = -d * sj / c2
        off = a * di * dj + g * (3.0 * d * si * sj / (c2 * c2))
        qii = a * di * di + g * (3.0 * d * si2 / (c2 * c2) - d / c2)
        qjj = a * dj * dj + g * (3.0 * d * sj2 / (c2 * c2) - d / c2)
        hess[n + i, n + j] += off * si * sj
        hess[n + j, n + i] += off * si * sj
        hess[n + i, n + i] += qii * si2 + g * di * si
        hess[n + j, n + j] += qjj * sj2 + g * dj * sj
        # cross block
        u = (a * d + g) / (c2 * c)
        hess[i, n + j] -= sj2 * u
        hess[j, n + i] += si2 * u
        hess[i, n + i] -= si2 * u
        hess[j, n + j] += sj2 * u
    for i in range(n):
        for j in range(n):
            hess[n + i, j] = hess[j, n + i]
    if ridge > 0.0:
        for k in range(n):
            hess[n + k, n + k] -= 2.0 * ridge
    return hess


@njit(cache=True)
def probit_value_grad(x, iu, ju, mij, mji, scale, d_clamp):
    n = x.shape[0]
    grad = np.zeros(n)
    value = 0.0
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        d = (x[i] - x[j]) / scale
        if d > d_clamp:
            d = d_clamp
        elif d < -d_clamp:
            d = -d_clamp
        value += mij[k] * _log_ndtr(d) + mji[k] * _log_ndtr(-d)
        g = (mij[k] * _mills(d) - mji[k] * _mills(-d)) / scale
        grad[i] += g
        grad[j] -= g
    return value, grad


@njit(cache=True)
def probit_hessian(x, iu, ju, mij, mji, scale, d_clamp):
    n = x.shape[0]
    hess = np.zeros((n, n))
    c2 = scale * scale
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        d = (x[i] - x[j]) / scale
        if d > d_clamp:
            d = d_clamp
        elif d < -d_clamp:
            d = -d_clamp
        rp = _mills(d)
        rn = _mills(-d)
        a = (mij[k] * (-rp * (d + rp)) + mji[k] * (-rn * (-d + rn))) / c2
        hess[i, j] -= a
        hess[j, i] -= a
        hess[i, i] += a
        hess[j, j] += a
    return hess


@njit(cache=True)
def bt_value_grad(x, iu, ju, mij, mji):
    n = x.shape[0]
    grad = np.zeros(n)
    value = 0.0
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        d = x[i] - x[j]
        # log(1 + exp(-d)) and logistic, stable on both sides
        if d > 0.0:
            lse_neg = math.log1p(math.exp(-d))
            lse_pos = d + lse_neg
            p = 1.0 / (1.0 + math.exp(-d))
        else:
            lse_pos = math.log1p(math.exp(d))
            lse_neg = -d + lse_pos
            ed = math.exp(d)
            p = ed / (1.0 + ed)
        value -= mij[k] * lse_neg + mji[k] * lse_pos
        g = mij[k] * (1.0 - p) - mji[k] * p
        grad[i] += g
        grad[j] -= g
    return value, grad


@njit(cache=True)
def bt_hessian(x, iu, ju, mij, mji):
    n = x.shape[0]
    hess = np.zeros((n, n))
    for k in range(iu.shape[0]):
        i = iu[k]
        j = ju[k]
        d = x[i] - x[j]
        if d > 0.0:
            p = 1.0 / (1.0 + math.exp(-d))
        else:
            ed = math.exp(d)
            p = ed / (1.0 + ed)
        a = -(mij[k] + mji[k]) * p * (1.0 - p)
        hess[i, j] -= a
        hess[j, i] -= a
        hess[i, i] += a
        hess[j, j] += a
    return hess


@njit(cache=True)
def eig_values(mean, std, scale, nodes, wbar, p_clip):
    count = mean.shape[0]
    order = nodes.shape[0]
    out = np.empty(count)
    sqrt2 = math.sqrt(2.0)
    for k in range(count):
        m = mean[k]
        v = sqrt2 * std[k]
        c = scale[k]
        e_p = 0.0
        e_q = 0.0
        e_plogp = 0.0
        e_qlogq = 0.0
        for a in range(order):
            x = (m + v * nodes[a]) / c
            p = 0.5 * math.erfc(-x * SQRT1_2)
            if p < p_clip:
                p = p_clip
            elif p > 1.0 - p_clip:
                p = 1.0 - p_clip
            q = 1.0 - p
            w = wbar[a]
            e_p += w * p
            e_q += w * q
            e_plogp += w * p * math.log(p)
            e_qlogq += w * q * math.log(q)
        u = e_plogp + e_qlogq - e_p * math.log(e_p) - e_q * math.log(e_q)
        out[k] = u if u > 0.0 else 0.0
    return out
