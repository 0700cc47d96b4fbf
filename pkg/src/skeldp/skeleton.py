"""Simulation of the hitting-time skeleton of d-dimensional Brownian motion.

A skeleton path is the sequence of waiting times between successive
+-epsilon_k moves of the Brownian motion in sup-norm together with the
increment vector at each move: the moving coordinate jumps exactly
+-epsilon_k, the remaining coordinates are truncated-normal substitutes
strictly inside (-epsilon_k, epsilon_k).  All downstream state dynamics are
driven by these two arrays; the Brownian path between moves is never needed.

Randomness is drawn from counter-based Philox streams: path i of a batch uses
the stream keyed by (seed, i), so parallel and serial generation agree.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distributions import chi_fixture

__all__ = [
    "stream",
    "e_steps",
    "SkeletonConfig",
    "SkeletonPath",
    "StepPath",
    "simulate_skeleton",
    "simulate_skeleton_batch",
    "reconstruct_Ak",
    "horizon_gap_stats",
    "gap_decay_slope",
    "write_skeleton_dump",
    "read_skeleton_dump",
]

_DUMP_MAGIC = 0x534B4C44  # "SKLD"


def stream(seed, *key):
    """Philox generator for stream ``key`` of a seeded experiment.

    Counter-based and splittable: ``stream(seed, i)`` for path i is
    statistically independent of every other path stream and does not depend
    on generation order.
    """
    ss = np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=ss))


def e_steps(t, epsilon_k, chi_d):
    """Number of dynamic-programming periods covering horizon t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0
    return int(math.ceil(t / (epsilon_k * epsilon_k * chi_d)))


@dataclass(frozen=True)
class SkeletonConfig:
    """Parameters of one skeleton ensemble."""

    dimension: int
    epsilon_k: float
    horizon: float
    chi_d: float
    seed: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.epsilon_k <= 0:
            raise ValueError("epsilon_k must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not (1.0 / (2 * self.dimension) <= self.chi_d <= 1.0):
            raise ValueError("chi_d outside [1/(2d), 1]")

    @classmethod
    def for_level(cls, k, dimension, horizon, seed, chi_d=None):
        """epsilon_k = 2^-k with chi_d from the frozen fixture table."""
        if chi_d is None:
            chi_d = chi_fixture(dimension).estimate
        return cls(dimension, 2.0 ** -k, horizon, chi_d, seed)

    @property
    def n_periods(self):
        return e_steps(self.horizon, self.epsilon_k, self.chi_d)


@dataclass(frozen=True)
class SkeletonPath:
    """One realization: waiting times (m,) and increments (m, d)."""

    epsilon_k: float
    delta_times: np.ndarray
    increments: np.ndarray
    cumulative_times: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.delta_times.ndim != 1 or self.increments.ndim != 2:
            raise ValueError("delta_times must be (m,), increments (m, d)")
        if self.delta_times.shape[0] != self.increments.shape[0]:
            raise ValueError("length mismatch between waiting times and increments")
        cum = np.empty(self.delta_times.shape[0] + 1)
        cum[0] = 0.0
        np.cumsum(self.delta_times, out=cum[1:])
        object.__setattr__(self, "cumulative_times", cum)

    @property
    def n_steps(self):
        return self.delta_times.shape[0]

    @property
    def dimension(self):
        return self.increments.shape[1]


def simulate_skeleton(config, n_steps, rng):
    """Generate one skeleton path of ``n_steps`` moves from ``rng``.

    Consumes exactly 2 * d uniforms per step (d exit-time draws, one sign
    draw, d - 1 truncated-normal draws), so a fixed stream reproduces the
    path bit for bit.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    d = config.dimension
    uniforms = rng.random((1, n_steps, 2 * d))
    delta, incr = _kernels.skeleton_batch(uniforms, config.epsilon_k)
    return SkeletonPath(config.epsilon_k, delta[0], incr[0])


def simulate_skeleton_batch(config, n_steps, n_paths, seed=None, path_offset=0):
    """Batch arrays (delta (n, m), increments (n, m, d)); path i uses
    ``stream(seed, path_offset + i)``."""
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be >= 1")
    if seed is None:
        seed = config.seed
    d = config.dimension
    uniforms = np.empty((n_paths, n_steps, 2 * d))
    for i in range(n_paths):
        uniforms[i] = stream(seed, path_offset + i).random((n_steps, 2 * d))
    return _kernels.skeleton_batch(uniforms, config.epsilon_k)


@dataclass(frozen=True)
class StepPath:
    """Right-continuous step function on [0, T_m]."""

    times: np.ndarray  # (m+1,), times[0] = 0
    values: np.ndarray  # (m+1, d), values[j] = value at times[j]

    def at(self, t):
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(idx, 0)]

    def at_many(self, ts):
        idx = np.searchsorted(self.times, np.asarray(ts), side="right") - 1
        return self.values[np.maximum(idx, 0)]


def reconstruct_Ak(path):
    """Cumulative increment process A^k as a step function (starts at 0)."""
    m, d = path.increments.shape
    vals = np.zeros((m + 1, d))
    np.cumsum(path.increments, axis=0, out=vals[1:])
    return StepPath(path.cumulative_times, vals)


def horizon_gap_stats(config, t, p, n_paths, seed=None, chunk=512):
    """Monte Carlo estimate of E|t - T_{e(k,t)}|^p.

    Only waiting times are needed, so paths are processed in chunks without
    materializing increments (exit-time draws consume the first d uniforms of
    each step, matching ``simulate_skeleton``'s layout).
    """
    if not (0 <= t <= config.horizon):
        raise ValueError("t must lie in [0, horizon]")
    if p < 1:
        raise ValueError("p must be >= 1")
    if t == 0:
        return 0.0, 0.0  # zero steps, gap identically zero
    if seed is None:
        seed = config.seed
    m = e_steps(t, config.epsilon_k, config.chi_d)
    d = config.dimension
    eps2 = config.epsilon_k ** 2
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        n = min(chunk, n_paths - done)
        u = np.empty((n, m, d))
        for i in range(n):
            u[i] = stream(seed, done + i).random((m, 2 * d))[:, :d]
        taus = _kernels.exit_quantile(u.reshape(-1)).reshape(n, m, d)
        tm = eps2 * taus.min(axis=2).sum(axis=1)
        g = np.abs(t - tm) ** p
        total += g.sum()
        total_sq += (g * g).sum()
        done += n
    mean = total / n_paths
    var = (total_sq - n_paths * mean * mean) / max(n_paths - 1, 1)
    return mean, math.sqrt(max(var, 0.0) / n_paths)


def gap_decay_slope(dimension, t, p, k_values, n_paths, seed, chi_d=None):
    """Fit log E|t - T_{e(k,t)}|^p against log epsilon_k over ``k_values``.

    Returns (slope, gaps): the theoretical slope is 2p.
    """
    gaps = []
    for k in k_values:
        cfg = SkeletonConfig.for_level(k, dimension, t, seed + k, chi_d=chi_d)
        mean, _ = horizon_gap_stats(cfg, t, p, n_paths)
        gaps.append(mean)
    eps = np.array([2.0 ** -k for k in k_values])
    slope = np.polyfit(np.log(eps), np.log(np.asarray(gaps)), 1)[0]
    return slope, np.asarray(gaps)


def write_skeleton_dump(filename, epsilon_k, delta, incr):
    """Binary batch dump: int64 d, float64 epsilon_k, int64 n_steps, int64
    n_paths header, then per path the waiting times followed by the row-major
    increments, all little-endian float64."""
    n_paths, n_steps, d = incr.shape
    with open(filename, "wb") as fh:
        np.array([d], dtype="<i8").tofile(fh)
        np.array([epsilon_k], dtype="<f8").tofile(fh)
        np.array([n_steps, n_paths], dtype="<i8").tofile(fh)
        for i in range(n_paths):
            delta[i].astype("<f8").tofile(fh)
            np.ascontiguousarray(incr[i], dtype="<f8").tofile(fh)


def read_skeleton_dump(filename):
    with open(filename, "rb") as fh:
        d = int(np.fromfile(fh, dtype="<i8", count=1)[0])
        eps = float(np.fromfile(fh, dtype="<f8", count=1)[0])
        n_steps, n_paths = (int(x) for x in np.fromfile(fh, dtype="<i8", count=2))
        delta = np.empty((n_paths, n_steps))
        incr = np.empty((n_paths, n_steps, d))
        for i in range(n_paths):
            delta[i] = np.fromfile(fh, dtype="<f8", count=n_steps)
            incr[i] = np.fromfile(fh, dtype="<f8", count=n_steps * d).reshape(
                n_steps, d
            )
    return eps, delta, incr
