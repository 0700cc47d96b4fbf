"""Scalar math kernels (numba-compiled when the numba backend is active).

Everything here is plain scalar arithmetic so the same source compiles under
``numba.njit`` and runs uncompiled for one-off calls.  The batch NumPy
fallbacks live in ``_vector``; both implement the same formulas.

Contents: normal distribution helpers (AS241 inverse CDF), the two series
representations of the law of the first exit time of standard Brownian motion
from [-1, 1], the quantile solver used for exact exit-time sampling, and the
per-step skeleton transform.
"""

import math

from ._backend import njit

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
PI2_8 = math.pi * math.pi / 8.0
FOUR_OVER_PI = 4.0 / math.pi

# Default series parameters: both series reach <=1e-15 truncation error well
# inside 20 terms at the switch point 0.3 (spectral term j decays like
# exp(-(2j+1)^2 * pi^2 t / 8), reflection term n like exp(-(2n-1)^2 / (2t))).
SWITCH_POINT = 0.3
SERIES_TERMS = 40
_TRUNC_EPS = 1e-17


@njit
def ndtr(x):
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / SQRT2)


@njit
def norm_pdf(x):
    return math.exp(-0.5 * x * x) / SQRT2PI


@njit
def ndtri(p):
    """Inverse standard normal CDF, Wichura's AS241 (PPND16, ~1e-16 rel)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    if r <= 0.0:
        return -math.inf if q < 0.0 else math.inf
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit
def exit_survival(t, switch_point=SWITCH_POINT, max_terms=SERIES_TERMS):
    """P(tau > t) for tau = first time |W| hits 1, W standard 1-d BM.

    Large t: alternating spectral series (4/pi) sum (-1)^j/(2j+1)
    exp(-(2j+1)^2 pi^2 t / 8).  Small t: reflection series written with erfc
    differences so no cancellation against 1 occurs.
    """
    if t <= 0.0:
        return 1.0
    if t >= switch_point:
        s = 0.0
        sign = 1.0
        for j in range(max_terms):
            a = 2.0 * j + 1.0
            term = sign * math.exp(-a * a * PI2_8 * t) / a
            s += term
            if abs(term) < _TRUNC_EPS:
                break
            sign = -sign
        v = FOUR_OVER_PI * s
    else:
        rt = math.sqrt(2.0 * t)
        v = 1.0 - math.erfc(1.0 / rt)
        sign = -1.0
        for n in range(1, max_terms):
            lo = (2.0 * n - 1.0) / rt
            hi = (2.0 * n + 1.0) / rt
            term = sign * (math.erfc(lo) - math.erfc(hi))
            v += term
            if abs(term) < _TRUNC_EPS:
                break
            sign = -sign
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@njit
def exit_density(t, switch_point=SWITCH_POINT, max_terms=SERIES_TERMS):
    """Density of tau; bounded by 1 on [0, inf)."""
    if t <= 0.0:
        return 0.0
    if t >= switch_point:
        s = 0.0
        sign = 1.0
        for j in range(max_terms):
            a = 2.0 * j + 1.0
            term = sign * a * math.exp(-a * a * PI2_8 * t)
            s += term
            if abs(term) < _TRUNC_EPS:
                break
            sign = -sign
        return 0.5 * math.pi * s
    rt = math.sqrt(t)
    s = norm_pdf(1.0 / rt)
    sign = -1.0
    for n in range(1, max_terms):
        lo = 2.0 * n - 1.0
        hi = 2.0 * n + 1.0
        term = sign * (hi * norm_pdf(hi / rt) - lo * norm_pdf(lo / rt))
        s += term
        if abs(term) < _TRUNC_EPS:
            break
        sign = -sign
    return s / (t * rt)


@njit
def exit_quantile(u, u_table, t_table, tol=1e-12):
    """Solve P(tau > t) = u for t, to absolute tolerance ``tol``.

    Bracketed Newton on the survival function: an analytic tail guess (one
    spectral term for small u, one reflection term for u near 1) or a
    precomputed quantile table supplies the start; bisection takes over
    whenever a Newton step leaves the bracket.
    """
    if u <= 0.0:
        return 64.0
    if u >= 1.0:
        return 0.0
    if u <= 0.3:
        t = -math.log(u / FOUR_OVER_PI) / PI2_8
    elif u >= 0.9:
        # one-term reflection: u = 1 - erfc(1/sqrt(2t)) = 1 - 2*Phi(-1/sqrt(t))
        z = ndtri(0.5 * (1.0 - u))
        t = 1.0 / (z * z)
    else:
        # table lookup over the uniform grid on [0.3, 0.9]
        n = u_table.shape[0]
        pos = (u - 0.3) / 0.6 * (n - 1)
        i = int(pos)
        if i >= n - 1:
            i = n - 2
        w = pos - i
        t = t_table[i] * (1.0 - w) + t_table[i + 1] * w
    lo = 0.0
    hi = 64.0
    prev_step = math.inf
    for _ in range(200):
        s = exit_survival(t)
        if s > u:  # survival too high -> quantile lies to the right
            lo = t
        else:
            hi = t
        f = exit_density(t)
        if f > 1e-30:
            step = (s - u) / f
            tn = t + step
        else:
            step = math.inf
            tn = 0.5 * (lo + hi)
        if tn <= lo or tn >= hi:
            tn = 0.5 * (lo + hi)
            step = tn - t
        # two consecutive sub-tolerance Newton steps certify |t - t*| < tol
        # (the iteration is a contraction near the simple root)
        if abs(step) < tol and abs(prev_step) < 16.0 * tol:
            return tn
        if (hi - lo) < tol:
            return 0.5 * (lo + hi)
        prev_step = step
        t = tn
    return t


@njit
def trunc_normal_from_uniform(u, sd, bound):
    """Inverse-CDF draw from N(0, sd^2) conditioned on (-bound, bound)."""
    c = bound / sd
    plo = ndtr(-c)
    x = sd * ndtri(plo + u * (1.0 - 2.0 * plo))
    if x <= -bound:
        x = math.nextafter(-bound, 0.0)
    elif x >= bound:
        x = math.nextafter(bound, 0.0)
    return x


@njit
def skeleton_fill(uniforms, epsilon, delta_out, incr_out, u_table, t_table):
    """Transform uniforms into skeleton waiting times and increments.

    ``uniforms`` has shape (n_steps, 2d): d exit-time draws, one sign draw,
    d-1 truncated-normal draws per step.  The waiting time is the minimum of
    the d coordinate exit times (ties -> lowest index); the minimizing
    coordinate jumps +-epsilon with probability 1/2; every other coordinate
    is truncated-normal with variance equal to the waiting time, bounded by
    epsilon.
    """
    n_steps = delta_out.shape[0]
    d = incr_out.shape[1]
    eps2 = epsilon * epsilon
    for j in range(n_steps):
        tmin = exit_quantile(uniforms[j, 0], u_table, t_table)
        axis = 0
        for c in range(1, d):
            tc = exit_quantile(uniforms[j, c], u_table, t_table)
            if tc < tmin:
                tmin = tc
                axis = c
        dt = eps2 * tmin
        delta_out[j] = dt
        sign = 1.0 if uniforms[j, d] < 0.5 else -1.0
        sd = math.sqrt(dt)
        nxt = d + 1
        for c in range(d):
            if c == axis:
                incr_out[j, c] = sign * epsilon
            else:
                incr_out[j, c] = trunc_normal_from_uniform(
                    uniforms[j, nxt], sd, epsilon
                )
                nxt += 1


@njit
def exit_quantile_batch(u, out, u_table, t_table):
    for i in range(u.shape[0]):
        out[i] = exit_quantile(u[i], u_table, t_table)
