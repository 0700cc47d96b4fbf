"""Fractional Brownian motion on the skeleton via Volterra kernels.

Standard fBM with Hurst index H admits B_H(t) = int_0^t z_H(t,s) dB(s) with
the Molchan-Golosov kernel z_H normalized so Var B_H(t) = t^{2H}.  For
H > 1/2 the kernel is

    z_H(t,s) = c_H (H-1/2) s^{1/2-H} int_s^t u^{H-1/2} (u-s)^{H-3/2} du,

for H < 1/2 it splits into a closed-form part K1 and an integral part K2:

    K1(t,s) = c_H (t/s)^{H-1/2} (t-s)^{H-1/2},
    K2(t,s) = c_H (1/2-H) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du,
    z_H = K1 + K2,

with c_H = sqrt(2H Gamma(3/2-H) / (Gamma(H+1/2) Gamma(2-2H))).

Integrating by parts turns the dB-integrals into Lebesgue integrals against
the path itself, which is what the skeleton substitute evaluates: with A the
piecewise-constant cumulative increment path (A(0) = 0),

    H > 1/2:  B^k_H(T_n) = sum_j A(T_j) [z_H(T_n,T_j) - z_H(T_n,T_{j+1})]
    H < 1/2:  B^k_H(T_n) = sum_j [A(T_n)-A(T_{j+1})]
                                 [K1(T_n,T_{j+1}) - K1(T_n,T_j)]
                         - sum_j A(T_j) [K2(T_n,T_{j+1}) - K2(T_n,T_j)].

Every per-step integral of the kernel derivative telescopes into kernel
differences, so each term needs only pointwise kernel values.  The j = 0
terms vanish (A(0) = 0, K1(t,0) = 0) and the final segment of the H < 1/2
first sum vanishes through its bracket, which removes every singular
evaluation exactly.

Kernel integrals are computed by fixed Gauss-Legendre panels after splitting
at min(2s, t): the u = s endpoint singularity is absorbed by the substitution
u = s + (m-s) v^{1/gamma}, the long smooth part is integrated in log u.
"""

import math

import numpy as np
from scipy.special import gamma as _gamma

from ._backend import USE_NUMBA, njit

__all__ = [
    "molchan_constant",
    "kernel_high",
    "kernel_low_k1",
    "kernel_low_k2",
    "discrete_fbm_path",
    "discrete_fbm_at_index",
]

_GL_NODES = 32
_glx, _glw = np.polynomial.legendre.leggauss(_GL_NODES)
GL_X01 = np.ascontiguousarray(0.5 * (_glx + 1.0))
GL_W01 = np.ascontiguousarray(0.5 * _glw)


def molchan_constant(H):
    """Kernel normalization giving Var B_H(t) = t^{2H}."""
    return math.sqrt(
        2.0 * H * _gamma(1.5 - H) / (_gamma(H + 0.5) * _gamma(2.0 - 2.0 * H))
    )


@njit
def _sing_panel(s, mid, gamma_exp, phi_exp, glx, glw):
    """int_s^mid u^phi_exp (u-s)^(gamma_exp-1) du via u = s+(mid-s)v^(1/gamma)."""
    width = mid - s
    if width <= 0.0:
        return 0.0
    inv_g = 1.0 / gamma_exp
    acc = 0.0
    for i in range(glx.shape[0]):
        u = s + width * glx[i] ** inv_g
        acc += glw[i] * u ** phi_exp
    return acc * width ** gamma_exp * inv_g


@njit
def _log_panel(s, lo, hi, gamma_exp, phi_exp, glx, glw):
    """int_lo^hi u^phi_exp (u-s)^(gamma_exp-1) du in log-u variables."""
    if hi <= lo:
        return 0.0
    a = math.log(lo)
    b = math.log(hi)
    acc = 0.0
    for i in range(glx.shape[0]):
        x = a + (b - a) * glx[i]
        u = math.exp(x)
        acc += glw[i] * u ** (phi_exp + 1.0) * (u - s) ** (gamma_exp - 1.0)
    return acc * (b - a)


@njit
def kernel_high(t, s, H, c_H, glx, glw):
    """z_H(t,s) for H > 1/2 and 0 < s < t (0 at s = t)."""
    if s >= t:
        return 0.0
    mid = 2.0 * s
    if mid > t:
        mid = t
    gamma_exp = H - 0.5
    phi_exp = H - 0.5
    val = _sing_panel(s, mid, gamma_exp, phi_exp, glx, glw)
    val += _log_panel(s, mid, t, gamma_exp, phi_exp, glx, glw)
    return c_H * (H - 0.5) * s ** (0.5 - H) * val


@njit
def kernel_low_k1(t, s, H, c_H):
    """K1(t,s) = c_H (t/s)^(H-1/2) (t-s)^(H-1/2); 0 at s = 0."""
    if s <= 0.0 or s >= t:
        return 0.0
    return c_H * (t / s) ** (H - 0.5) * (t - s) ** (H - 0.5)


@njit
def kernel_low_k2(t, s, H, c_H, glx, glw):
    """K2(t,s) for H < 1/2 and 0 < s < t (0 at s = t)."""
    if s >= t:
        return 0.0
    mid = 2.0 * s
    if mid > t:
        mid = t
    gamma_exp = H + 0.5
    phi_exp = H - 1.5
    val = _sing_panel(s, mid, gamma_exp, phi_exp, glx, glw)
    val += _log_panel(s, mid, t, gamma_exp, phi_exp, glx, glw)
    return c_H * (0.5 - H) * s ** (0.5 - H) * val


@njit
def _fbm_low_at(times, A, n, H, c_H, glx, glw):
    t = times[n]
    acc = 0.0
    An = A[n]
    k1_prev = 0.0  # K1(t, times[0]) = K1(t, 0) = 0
    for j in range(n - 1):
        k1_next = kernel_low_k1(t, times[j + 1], H, c_H)
        acc += (An - A[j + 1]) * (k1_next - k1_prev)
        k1_prev = k1_next
    k2_prev = kernel_low_k2(t, times[1], H, c_H, glx, glw) if n >= 2 else 0.0
    for j in range(1, n):
        if j + 1 < n:
            k2_next = kernel_low_k2(t, times[j + 1], H, c_H, glx, glw)
        else:
            k2_next = 0.0  # K2(t, t)
        acc -= A[j] * (k2_next - k2_prev)
        k2_prev = k2_next
    return acc


@njit
def _fbm_high_at(times, A, n, H, c_H, glx, glw):
    t = times[n]
    acc = 0.0
    if n < 2:
        return 0.0
    k_prev = kernel_high(t, times[1], H, c_H, glx, glw)
    for j in range(1, n):
        if j + 1 < n:
            k_next = kernel_high(t, times[j + 1], H, c_H, glx, glw)
        else:
            k_next = 0.0  # z_H(t, t)
        acc += A[j] * (k_prev - k_next)
        k_prev = k_next
    return acc


@njit
def _fbm_path_numba(times, A, H, c_H, glx, glw, out):
    low = H < 0.5
    for n in range(times.shape[0]):
        if n == 0:
            out[n] = 0.0
        elif low:
            out[n] = _fbm_low_at(times, A, n, H, c_H, glx, glw)
        else:
            out[n] = _fbm_high_at(times, A, n, H, c_H, glx, glw)


def _sing_panel_vec(s, mid, gamma_exp, phi_exp):
    width = mid - s
    inv_g = 1.0 / gamma_exp
    u = s[:, None] + width[:, None] * GL_X01[None, :] ** inv_g
    acc = (GL_W01[None, :] * u ** phi_exp).sum(axis=1)
    return acc * np.maximum(width, 0.0) ** gamma_exp * inv_g


def _log_panel_vec(s, lo, hi, gamma_exp, phi_exp):
    mask = hi > lo
    out = np.zeros_like(s)
    if not mask.any():
        return out
    a = np.log(lo[mask])
    b = np.log(hi[mask])
    x = a[:, None] + (b - a)[:, None] * GL_X01[None, :]
    u = np.exp(x)
    g = u ** (phi_exp + 1.0) * (u - s[mask, None]) ** (gamma_exp - 1.0)
    out[mask] = (GL_W01[None, :] * g).sum(axis=1) * (b - a)
    return out


def _kernel_high_vec(t, s, H, c_H):
    s = np.asarray(s, dtype=float)
    mid = np.minimum(2.0 * s, t)
    val = _sing_panel_vec(s, mid, H - 0.5, H - 0.5)
    val += _log_panel_vec(s, mid, np.full_like(s, t), H - 0.5, H - 0.5)
    return c_H * (H - 0.5) * s ** (0.5 - H) * val


def _kernel_low_k2_vec(t, s, H, c_H):
    s = np.asarray(s, dtype=float)
    mid = np.minimum(2.0 * s, t)
    val = _sing_panel_vec(s, mid, H + 0.5, H - 1.5)
    val += _log_panel_vec(s, mid, np.full_like(s, t), H + 0.5, H - 1.5)
    return c_H * (0.5 - H) * s ** (0.5 - H) * val


def _kernel_low_k1_vec(t, s, H, c_H):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    ok = (s > 0) & (s < t)
    out[ok] = c_H * (t / s[ok]) ** (H - 0.5) * (t - s[ok]) ** (H - 0.5)
    return out


def _fbm_at_numpy(times, A, n, H, c_H):
    t = times[n]
    if n < 1:
        return 0.0
    if H < 0.5:
        k1 = np.zeros(n + 1)
        k1[1:n] = _kernel_low_k1_vec(t, times[1:n], H, c_H)
        acc = float(((A[n] - A[1 : n + 1]) * np.diff(k1)).sum())
        if n >= 2:
            k2 = np.zeros(n + 1)
            k2[1:n] = _kernel_low_k2_vec(t, times[1:n], H, c_H)
            acc -= float((A[1:n] * np.diff(k2[1:])).sum())
        return acc
    if n < 2:
        return 0.0
    kh = np.zeros(n)
    kh[:-1] = _kernel_high_vec(t, times[1:n], H, c_H)
    return float((A[1:n] * -np.diff(kh)).sum())


def discrete_fbm_at_index(times, A, n, H, c_H=None):
    """B^k_H at skeleton index n for the cumulative path A (A[0] = 0)."""
    if c_H is None:
        c_H = molchan_constant(H)
    if USE_NUMBA:
        fn = _fbm_low_at if H < 0.5 else _fbm_high_at
        return fn(times, A, n, H, c_H, GL_X01, GL_W01) if n > 0 else 0.0
    return _fbm_at_numpy(times, A, n, H, c_H)


def discrete_fbm_path(times, A, H, c_H=None):
    """B^k_H at every skeleton index; O(m^2) kernel evaluations."""
    if c_H is None:
        c_H = molchan_constant(H)
    out = np.empty_like(times)
    if USE_NUMBA:
        _fbm_path_numba(times, A, H, c_H, GL_X01, GL_W01, out)
        return out
    for n in range(times.shape[0]):
        out[n] = _fbm_at_numpy(times, A, n, H, c_H)
    return out
