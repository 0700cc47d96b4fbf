"""Backend dispatch for the hot kernels plus the shared quantile table.

The exit-time quantile solver is seeded with a small table of quantiles on
u in [0.3, 0.9] (outside that range analytic one-term inversions are good
starts).  The table is built once per process by plain bisection.
"""

import numpy as np

from . import _scalar, _vector
from ._backend import USE_NUMBA

_TABLE_SIZE = 1025
_tables = None


def _bisect_quantile(u):
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.full_like(u, 64.0)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        gt = _vector.exit_survival_vec(mid) > u
        lo = np.where(gt, mid, lo)
        hi = np.where(gt, hi, mid)
    return 0.5 * (lo + hi)


def quantile_tables():
    global _tables
    if _tables is None:
        u = np.linspace(0.3, 0.9, _TABLE_SIZE)
        _tables = (u, _bisect_quantile(u))
    return _tables


if USE_NUMBA:
    from numba import njit as _njit

    @_njit(cache=True)
    def _skeleton_batch_numba(U, epsilon, delta, incr, ut, tt):
        for i in range(U.shape[0]):
            _scalar.skeleton_fill(U[i], epsilon, delta[i], incr[i], ut, tt)

    @_njit(cache=True)
    def _quantile_batch_numba(u, out, ut, tt):
        for i in range(u.shape[0]):
            out[i] = _scalar.exit_quantile(u[i], ut, tt)


def exit_quantile(u):
    """Quantile of the unit exit time at survival level u (vector ok)."""
    ut, tt = quantile_tables()
    u = np.asarray(u, dtype=float)
    if USE_NUMBA:
        flat = np.ascontiguousarray(u.ravel())
        out = np.empty_like(flat)
        _quantile_batch_numba(flat, out, ut, tt)
        return out.reshape(u.shape) if u.shape else float(out[0])
    out = _vector.exit_quantile_vec(u, ut, tt)
    return out if u.shape else float(out)


def skeleton_batch(uniforms, epsilon):
    """(n_paths, n_steps, 2d) uniforms -> (delta, increments)."""
    n, m, two_d = uniforms.shape
    d = two_d // 2
    delta = np.empty((n, m))
    incr = np.empty((n, m, d))
    ut, tt = quantile_tables()
    if USE_NUMBA:
        _skeleton_batch_numba(uniforms, epsilon, delta, incr, ut, tt)
    else:
        _vector.skeleton_fill_vec(
            uniforms.reshape(n * m, two_d),
            epsilon,
            delta.reshape(n * m),
            incr.reshape(n * m, d),
            ut,
            tt,
        )
    return delta, incr
