"""Vectorized NumPy implementations of the hot kernels.

Math-identical to ``_scalar`` (same series, same inversion), written with
array operations.  Selected by ``skeldp._backend`` when numba is disabled.
"""

import numpy as np
from scipy import special

from . import _scalar as sk

_PI2_8 = sk.PI2_8
_FOUR_OVER_PI = sk.FOUR_OVER_PI


def exit_survival_vec(t, switch_point=sk.SWITCH_POINT, max_terms=sk.SERIES_TERMS):
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    big = t >= switch_point
    if big.any():
        tb = t[big]
        v = np.zeros_like(tb)
        sign = 1.0
        for j in range(max_terms):
            a = 2.0 * j + 1.0
            term = np.exp(-a * a * _PI2_8 * tb) / a
            v += sign * term
            if term[0] < sk._TRUNC_EPS:  # tb sorted or not: term max at min t
                if np.max(term) < sk._TRUNC_EPS:
                    break
            sign = -sign
        out[big] = _FOUR_OVER_PI * v
    small = (~big) & (t > 0.0)
    if small.any():
        ts = t[small]
        rt = np.sqrt(2.0 * ts)
        v = 1.0 - special.erfc(1.0 / rt)
        sign = -1.0
        for n in range(1, max_terms):
            lo = (2.0 * n - 1.0) / rt
            hi = (2.0 * n + 1.0) / rt
            term = special.erfc(lo) - special.erfc(hi)
            v += sign * term
            if np.max(term) < sk._TRUNC_EPS:
                break
            sign = -sign
        out[small] = v
    return np.clip(out, 0.0, 1.0)


def exit_density_vec(t, switch_point=sk.SWITCH_POINT, max_terms=sk.SERIES_TERMS):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    big = t >= switch_point
    if big.any():
        tb = t[big]
        v = np.zeros_like(tb)
        sign = 1.0
        for j in range(max_terms):
            a = 2.0 * j + 1.0
            term = a * np.exp(-a * a * _PI2_8 * tb)
            v += sign * term
            if np.max(term) < sk._TRUNC_EPS:
                break
            sign = -sign
        out[big] = 0.5 * np.pi * v
    small = (~big) & (t > 0.0)
    if small.any():
        ts = t[small]
        rt = np.sqrt(ts)
        pdf = lambda x: np.exp(-0.5 * x * x) / sk.SQRT2PI  # noqa: E731
        v = pdf(1.0 / rt)
        sign = -1.0
        for n in range(1, max_terms):
            lo = 2.0 * n - 1.0
            hi = 2.0 * n + 1.0
            term = hi * pdf(hi / rt) - lo * pdf(lo / rt)
            v += sign * term
            if np.max(np.abs(term)) < sk._TRUNC_EPS:
                break
            sign = -sign
        out[small] = v / (ts * rt)
    return out


def exit_quantile_vec(u, u_table, t_table, tol=1e-12):
    """Bracketed-Newton inversion of the survival function, vectorized."""
    u = np.asarray(u, dtype=float)
    flat = u.ravel()
    t = np.empty_like(flat)

    low = flat <= 0.3
    t[low] = -np.log(np.maximum(flat[low], 1e-300) / _FOUR_OVER_PI) / _PI2_8
    high = flat >= 0.9
    if high.any():
        z = special.ndtri(0.5 * (1.0 - flat[high]))
        t[high] = 1.0 / (z * z)
    mid = ~(low | high)
    if mid.any():
        n = u_table.shape[0]
        pos = (flat[mid] - 0.3) / 0.6 * (n - 1)
        i = np.minimum(pos.astype(np.int64), n - 2)
        w = pos - i
        t[mid] = t_table[i] * (1.0 - w) + t_table[i + 1] * w

    # bracketed Newton on the unsettled subset only; settled entries freeze
    lo = np.zeros_like(t)
    hi = np.full_like(t, 64.0)
    prev_step = np.full_like(t, np.inf)
    settled = np.zeros(t.shape, dtype=bool)
    uflat = u.ravel()
    for _ in range(200):
        idx = np.flatnonzero(~settled)
        if idx.size == 0:
            break
        ti = t[idx]
        s = exit_survival_vec(ti)
        gt = s > uflat[idx]
        lo[idx] = np.where(gt, ti, lo[idx])
        hi[idx] = np.where(gt, hi[idx], ti)
        f = exit_density_vec(ti)
        step = np.where(f > 1e-30, (s - uflat[idx]) / np.maximum(f, 1e-30), np.nan)
        tn = ti + step
        bad = ~np.isfinite(tn) | (tn <= lo[idx]) | (tn >= hi[idx])
        tn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), tn)
        step = np.where(bad, tn - ti, step)
        done = (np.abs(step) < tol) & (np.abs(prev_step[idx]) < 16.0 * tol)
        done |= (hi[idx] - lo[idx]) < tol
        t[idx] = tn
        prev_step[idx] = step
        settled[idx] = done
    return t.reshape(u.shape)


def trunc_normal_from_uniform_vec(u, sd, bound):
    c = bound / sd
    plo = special.ndtr(-c)
    x = sd * special.ndtri(plo + u * (1.0 - 2.0 * plo))
    return np.clip(x, np.nextafter(-bound, 0.0), np.nextafter(bound, 0.0))


def skeleton_fill_vec(uniforms, epsilon, delta_out, incr_out, u_table, t_table):
    """Vectorized counterpart of ``_scalar.skeleton_fill`` (one path)."""
    n_steps, two_d = uniforms.shape
    d = two_d // 2
    taus = exit_quantile_vec(uniforms[:, :d], u_table, t_table)
    axis = taus.argmin(axis=1)
    dt = epsilon * epsilon * taus.min(axis=1)
    delta_out[:] = dt
    sign = np.where(uniforms[:, d] < 0.5, 1.0, -1.0)
    sd = np.sqrt(dt)
    # map the d-1 truncated-normal draws onto the non-exiting coordinates
    cols = np.arange(d)
    is_exit = cols[None, :] == axis[:, None]
    order = np.argsort(is_exit, axis=1, kind="stable")[:, : d - 1] if d > 1 else None
    incr_out[:] = 0.0
    if d > 1:
        z = trunc_normal_from_uniform_vec(
            uniforms[:, d + 1 :], sd[:, None], epsilon
        )
        rows = np.repeat(np.arange(n_steps), d - 1)
        incr_out[rows, order.ravel()] = z.ravel()
    incr_out[np.arange(n_steps), axis] = sign * epsilon
