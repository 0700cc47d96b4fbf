"""Building-block laws of the Brownian skeleton.

The unit object is tau = inf{t > 0 : |W(t)| = 1} for a standard 1-d Brownian
motion W.  Everything else is scaling: a coordinate of a d-dimensional
Brownian motion leaves a centered sup-norm box of radius eps in time eps^2 *
tau, the waiting time between skeleton moves is eps^2 * min of d independent
copies, and the non-exiting coordinates are substituted by a truncated normal
over (-eps, eps).

Two alternating series cover the law of tau: a spectral series accurate for
large t and a reflection (method-of-images) series for small t; both are
evaluated to <= 1e-12 absolute error.  ``nu_density_d2`` evaluates the
one-step transition kernel of the d=2 skeleton in closed form up to a single
adaptive quadrature in the waiting time.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import quad

from . import _kernels, _scalar, _vector

__all__ = [
    "ExitTimeDist",
    "exit_time_survival",
    "exit_time_density",
    "sample_exit_time",
    "sample_nonexit_coordinate",
    "min_exit_density",
    "nu_density_d2",
    "estimate_chi",
    "chi_quadrature",
    "ChiFixture",
    "chi_fixture",
    "CHI_FIXTURE_ENV",
]

CHI_FIXTURE_ENV = "CHI_FIXTURE_PATH"
_DATA_FIXTURE = os.path.join(os.path.dirname(__file__), "data", "chi_fixtures.txt")


@dataclass(frozen=True)
class ExitTimeDist:
    """Law of the first exit time of standard BM from [-1, 1].

    ``series_terms`` caps both alternating series; ``switch_point`` is the
    time at which evaluation switches from the reflection series to the
    spectral series.  The defaults keep the truncation error far below the
    1e-12 evaluation tolerance (both series need < 10 terms at 0.3).
    """

    series_terms: int = _scalar.SERIES_TERMS
    switch_point: float = _scalar.SWITCH_POINT

    def __post_init__(self):
        if self.series_terms < 1:
            raise ValueError("series_terms must be positive")
        if self.switch_point <= 0:
            raise ValueError("switch_point must be positive")

    def survival(self, t):
        """P(tau > t); total on t >= 0, clipped to [0, 1]."""
        if np.isscalar(t):
            return _scalar.exit_survival(float(t), self.switch_point, self.series_terms)
        return _vector.exit_survival_vec(t, self.switch_point, self.series_terms)

    def cdf(self, t):
        return 1.0 - self.survival(t)

    def density(self, t):
        if np.isscalar(t):
            return _scalar.exit_density(float(t), self.switch_point, self.series_terms)
        return _vector.exit_density_vec(t, self.switch_point, self.series_terms)

    def quantile(self, u):
        """t with P(tau > t) = u, absolute error <= 1e-12."""
        return _kernels.exit_quantile(u)

    def sample(self, rng, n=None):
        """Exact i.i.d. samples of tau by inverse CDF."""
        u = rng.random() if n is None else rng.random(n)
        return self.quantile(u)


_DEFAULT = ExitTimeDist()


def exit_time_survival(t):
    """P(tau > t) at the default series settings (abs error <= 1e-12)."""
    return _DEFAULT.survival(t)


def exit_time_density(t):
    return _DEFAULT.density(t)


def sample_exit_time(rng, n=None):
    """Unit-scale exit-time draws; rescale by eps^2 for skeleton waiting times."""
    return _DEFAULT.sample(rng, n)


def sample_nonexit_coordinate(variance, bound, rng, n=None):
    """Draw from N(0, variance) conditioned on (-bound, bound).

    Used for the coordinates that did not trigger the skeleton move; one
    uniform is consumed per draw (inverse CDF), so sample counts are
    reproducible at a fixed stream.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    if bound <= 0:
        raise ValueError("bound must be positive")
    u = rng.random() if n is None else rng.random(n)
    sd = math.sqrt(variance)
    plo = special.ndtr(-bound / sd)
    x = sd * special.ndtri(plo + u * (1.0 - 2.0 * plo))
    return np.clip(x, np.nextafter(-bound, 0.0), np.nextafter(bound, 0.0))


def min_exit_density(t, d):
    """Density of min(tau_1, ..., tau_d), unit scale."""
    t = np.asarray(t, dtype=float)
    f = _vector.exit_density_vec(t)
    s = _vector.exit_survival_vec(t)
    return d * f * s ** (d - 1)


def _trunc_cdf_unit(z, s):
    """CDF at z in (-1,1) of N(0, s) truncated to (-1, 1)."""
    rs = math.sqrt(s)
    lo = special.ndtr(-1.0 / rs)
    return (special.ndtr(z / rs) - lo) / (1.0 - 2.0 * lo)


def nu_density_d2(interval, exit_sign, exit_axis, other_range, epsilon_k):
    """Mass of one skeleton step of the d=2 skeleton on a product rectangle.

    Event: waiting time in ``interval`` = (a, b), the move happening on
    ``exit_axis`` (1 or 2) with sign ``exit_sign``, and the non-exiting
    coordinate landing in ``other_range`` = (y, ybar) strictly inside
    (-epsilon_k, epsilon_k).

    The waiting time follows eps^2 * min(tau_1, tau_2); axis and sign are
    uniform and independent of it; given the waiting time t the other
    coordinate is truncated-normal with variance t on (-eps, eps).  The mass
    is a single time integral (the coordinate integral is a difference of
    normal CDFs) evaluated by adaptive quadrature to <= 1e-6 relative error.
    """
    a, b = interval
    y, ybar = other_range
    eps = float(epsilon_k)
    if eps <= 0:
        raise ValueError("epsilon_k must be positive")
    if not (0 <= a < b):
        raise ValueError("interval must satisfy 0 <= a < b")
    if not (-eps < y < ybar < eps):
        raise ValueError("other_range must satisfy -eps < y < ybar < eps")
    if exit_sign not in (-1, 1):
        raise ValueError("exit_sign must be +-1")
    if exit_axis not in (1, 2):
        raise ValueError("exit_axis must be 1 or 2")

    zlo = y / eps
    zhi = ybar / eps
    slo = a / eps ** 2
    shi = b / eps ** 2 if np.isfinite(b) else np.inf

    def integrand(s):
        w = _trunc_cdf_unit(zhi, s) - _trunc_cdf_unit(zlo, s)
        return 2.0 * _scalar.exit_density(s) * _scalar.exit_survival(s) * w

    val, _ = quad(integrand, slo, min(shi, 80.0), epsabs=1e-12, epsrel=1e-9, limit=300)
    if np.isfinite(shi) and shi > 80.0:
        tail, _ = quad(integrand, 80.0, shi, epsabs=1e-14, epsrel=1e-9, limit=100)
        val += tail
    return 0.25 * val  # uniform over 2 axes x 2 signs


def estimate_chi(d, n_samples, rng):
    """Monte Carlo estimate of E[min(tau_1, ..., tau_d)] with standard error.

    Sampling is chunked so 1e7-sample runs stay inside a small memory
    footprint.  The estimate always lands in [1/(2d), 1] up to noise.
    """
    d = int(d)
    n_samples = int(n_samples)
    if d < 1:
        raise ValueError("d must be >= 1")
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    chunk = 1_000_000
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        taus = _kernels.exit_quantile(rng.random((n, d)))
        m = taus.min(axis=1) if d > 1 else taus.reshape(n)
        total += m.sum()
        total_sq += (m * m).sum()
        done += n
    mean = total / n_samples
    var = (total_sq - n_samples * mean * mean) / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)


def chi_quadrature(d, upper=80.0):
    """E[min tau] = int_0^inf P(tau > t)^d dt by quadrature (cross-check)."""
    val, _ = quad(
        lambda t: _scalar.exit_survival(t) ** d, 0.0, upper, epsabs=1e-12, limit=400
    )
    return val


@dataclass(frozen=True)
class ChiFixture:
    d: int
    estimate: float
    std_err: float
    n_samples: int


def _fixture_path(path=None):
    if path is not None:
        return path
    return os.environ.get(CHI_FIXTURE_ENV, _DATA_FIXTURE)


def load_chi_fixtures(path=None):
    out = {}
    with open(_fixture_path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            d, est, se, n = line.split()
            out[int(d)] = ChiFixture(int(d), float(est), float(se), int(n))
    return out


def chi_fixture(d, path=None):
    """Frozen chi_d calibration value (d=1 is the analytic 1.0)."""
    fixtures = load_chi_fixtures(path)
    if d not in fixtures:
        raise KeyError(f"no chi fixture for d={d} in {_fixture_path(path)}")
    return fixtures[d]
