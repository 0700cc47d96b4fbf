"""Controlled state dynamics evolved on the skeleton's random partition.

Three model families share one stepping contract: the state at step q is a
function of the skeleton data and the actions with index < q only.

* path-dependent SDEs: Euler steps X_q = X_{q-1} + drift * dt + diffusion @ eta
  with coefficients receiving the whole state prefix;
* drift-controlled dynamics driven by fractional Brownian motion, with the
  fBM increments taken from the discrete Volterra operator in ``fbm``;
* rough stochastic volatility: an Ornstein-Uhlenbeck log-volatility driven by
  fBM (H < 1/2) built from the two skeleton axes, and a price driven by the
  first axis only.

Paths are frozen after the dynamic-programming step count: ``StatePath``
clamps step lookups to its stop index.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import fbm
from .skeleton import SkeletonConfig, e_steps, simulate_skeleton_batch

__all__ = [
    "ActionSpace",
    "StatePath",
    "SdeCoefficients",
    "euler_pd_sde",
    "FbmSpec",
    "fbm_high",
    "fbm_low",
    "fbm_drift_sde",
    "RoughVolSpec",
    "rough_vol_paths",
    "ControlledStructure",
    "EulerStructure",
    "FbmDriftStructure",
    "RoughVolStructure",
    "linear_coefficients",
    "geometric_coefficients",
    "ou_coefficients",
    "SignWalkStructure",
    "STRUCTURE_REGISTRY",
    "build_structure",
    "gbm_strong_error",
    "gbm_strong_error_slope",
    "fbm_fidelity_samples",
]


@dataclass(frozen=True)
class ActionSpace:
    """Box of admissible actions with its optimization grid.

    The grid is the cartesian product of per-axis linspaces, enumerated in
    ascending lexicographic order (first component most significant), which
    is the order used for tie-breaking in policy extraction.
    """

    r: int
    a_bar: float
    grid_points_per_axis: int = 2
    custom_grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("action dimension r must be >= 1")
        if self.a_bar <= 0:
            raise ValueError("a_bar must be positive")
        if self.custom_grid is None and self.grid_points_per_axis < 2:
            raise ValueError("grid_points_per_axis must be >= 2")
        if self.custom_grid is not None:
            g = np.atleast_2d(np.asarray(self.custom_grid, dtype=float))
            if g.shape[1] != self.r:
                raise ValueError("custom_grid must have r columns")
            if np.max(np.abs(g)) > self.a_bar + 1e-12:
                raise ValueError("custom_grid leaves the action box")
            order = np.lexsort(g.T[::-1])
            object.__setattr__(self, "custom_grid", g[order])

    def grid(self):
        if self.custom_grid is not None:
            return self.custom_grid
        axis = np.linspace(-self.a_bar, self.a_bar, self.grid_points_per_axis)
        pts = np.array(list(itertools.product(axis, repeat=self.r)))
        return pts

    def contains(self, a):
        return bool(np.max(np.abs(np.asarray(a))) <= self.a_bar + 1e-12)


@dataclass(frozen=True)
class StatePath:
    """Stepwise-constant state path, frozen after ``stop_index`` steps."""

    times: np.ndarray  # (stop_index + 1,)
    values: np.ndarray  # (stop_index + 1, n_state)
    stop_index: int

    def at_step(self, j):
        return self.values[min(j, self.stop_index)]

    @property
    def terminal(self):
        return self.values[self.stop_index]


def _normalize_actions(actions, n_steps, r=None):
    a = np.asarray(actions, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] < n_steps:
        raise ValueError(f"need at least {n_steps} actions, got {a.shape[0]}")
    if r is not None and a.shape[1] != r:
        raise ValueError(f"actions must have {r} components")
    return a[:n_steps]


@dataclass(frozen=True)
class SdeCoefficients:
    """Batch drift/diffusion callables plus the initial state.

    ``drift(j, t, states, actions) -> (n, S)`` and
    ``diffusion(j, t, states, actions) -> (n, S, d)`` receive the step index,
    the current partition times ``t`` (n,), the state prefix ``states``
    (n, j+1, S) and the step actions (n, r).  Lipschitz regularity in the
    path and the action is the caller's contract; it is not checked.
    """

    drift: Callable
    diffusion: Callable
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, float)))


def _euler_batch(coeffs, delta, incr, actions, n_steps):
    n, m, d = incr.shape
    if n_steps > m or actions.shape[1] < n_steps:
        raise ValueError("skeleton/actions shorter than the requested step count")
    S = coeffs.x0.shape[0]
    values = np.empty((n, n_steps + 1, S))
    values[:, 0] = coeffs.x0
    t = np.zeros(n)
    for j in range(n_steps):
        prefix = values[:, : j + 1]
        a = actions[:, j]
        dt = delta[:, j]
        drift = np.asarray(coeffs.drift(j, t, prefix, a), float).reshape(n, S)
        diff = np.asarray(coeffs.diffusion(j, t, prefix, a), float).reshape(n, S, d)
        values[:, j + 1] = (
            values[:, j]
            + drift * dt[:, None]
            + np.einsum("nsd,nd->ns", diff, incr[:, j])
        )
        t = t + dt
    return values


def euler_pd_sde(coeffs, skeleton_path, actions, n_steps=None):
    """Euler scheme on the random partition for one skeleton path.

    The state is advanced for ``n_steps`` steps (default: as many actions as
    supplied, capped by the skeleton length) and frozen afterwards.
    """
    m = skeleton_path.n_steps
    a = np.asarray(actions, dtype=float)
    if n_steps is None:
        n_steps = min(m, a.shape[0])
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    a = _normalize_actions(a, n_steps)
    values = _euler_batch(
        coeffs,
        skeleton_path.delta_times[None, :],
        skeleton_path.increments[None, :, :],
        a[None, :, :],
        n_steps,
    )[0]
    times = skeleton_path.cumulative_times[: n_steps + 1]
    return StatePath(times, values, n_steps)


# ---------------------------------------------------------------------------
# fractional Brownian structures


@dataclass(frozen=True)
class FbmSpec:
    """Hurst index, diffusion constant, and optional kernel normalization."""

    H: float
    sigma: float = 1.0
    molchan_constant: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.H < 1.0) or self.H == 0.5:
            raise ValueError("H must lie in (0,1) with H != 1/2")
        if self.molchan_constant is None:
            object.__setattr__(
                self, "molchan_constant", fbm.molchan_constant(self.H)
            )

    @property
    def is_rough(self):
        return self.H < 0.5


def _fbm_values(skeleton_path, spec):
    times = skeleton_path.cumulative_times
    A = np.zeros_like(times)
    np.cumsum(skeleton_path.increments[:, 0], out=A[1:])
    out = fbm.discrete_fbm_path(times, A, spec.H, spec.molchan_constant)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("fBM kernel integral produced non-finite values")
    return out


def fbm_high(skeleton_path, spec):
    """Discrete fBM path for H > 1/2, one value per skeleton time."""
    if not spec.H > 0.5:
        raise ValueError("fbm_high requires H > 1/2")
    return _fbm_values(skeleton_path, spec)


def fbm_low(skeleton_path, spec):
    """Discrete fBM path for 0 < H < 1/2, one value per skeleton time."""
    if not spec.H < 0.5:
        raise ValueError("fbm_low requires H < 1/2")
    return _fbm_values(skeleton_path, spec)


def fbm_drift_sde(drift, spec, skeleton_path, actions, x0=0.0, n_steps=None):
    """Scalar drift-controlled state driven by sigma * discrete fBM increments."""
    m = skeleton_path.n_steps
    a = np.asarray(actions, dtype=float)
    if n_steps is None:
        n_steps = min(m, a.shape[0])
    a = _normalize_actions(a, n_steps)
    bh = _fbm_values(skeleton_path, spec)
    dbh = np.diff(bh)
    values = np.empty((n_steps + 1, 1))
    values[0, 0] = x0
    t = 0.0
    for j in range(n_steps):
        dt = skeleton_path.delta_times[j]
        dr = np.asarray(
            drift(j, np.array([t]), values[None, : j + 1], a[None, j]), float
        ).reshape(1)
        values[j + 1, 0] = values[j, 0] + dr[0] * dt + spec.sigma * dbh[j]
        t += dt
    return StatePath(skeleton_path.cumulative_times[: n_steps + 1], values, n_steps)


@dataclass(frozen=True)
class RoughVolSpec:
    """Rough log-volatility OU spec plus price coefficients.

    ``mu(actions) -> (n,)`` is the controlled relative drift and
    ``vartheta(z, actions) -> (n,)`` the controlled volatility loading
    (bounded, by contract).  The volatility driver is an fBM with H < 1/2
    correlated with the price axis through rho.
    """

    H: float
    nu: float
    beta: float
    z0: float
    rho: float
    mu: Callable
    vartheta: Callable
    mean_level: float = 0.0
    x0: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.H < 0.5):
            raise ValueError("rough volatility requires 0 < H < 1/2")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (-1, 1)")
        if self.nu < 0 or self.beta < 0:
            raise ValueError("nu and beta must be nonnegative")


def _rough_z_values(spec, times, incr):
    """OU log-volatility at skeleton times from the two increment axes."""
    drv = np.zeros_like(times)
    if incr.shape[0]:
        rho_bar = math.sqrt(1.0 - spec.rho ** 2)
        np.cumsum(spec.rho * incr[:, 0] + rho_bar * incr[:, 1], out=drv[1:])
    w = fbm.discrete_fbm_path(times, drv, spec.H)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("fBM kernel integral produced non-finite values")
    # Z(t) = m + e^{-bt}(z0 - m) + nu*(W(t) - b e^{-bt} int_0^t W(u) e^{bu} du),
    # the integral being an exact sum over the partition (W is stepwise).
    b = spec.beta
    dts = np.diff(times)
    integ = np.zeros_like(times)
    np.cumsum(w[:-1] * np.exp(b * times[:-1]) * dts, out=integ[1:])
    decay = np.exp(-b * times)
    z = spec.mean_level + decay * (spec.z0 - spec.mean_level)
    z = z + spec.nu * (w - b * decay * integ)
    return z, w


def rough_vol_paths(spec, skeleton_path, actions, n_steps=None):
    """(price StatePath, log-volatility values) on a d = 2 skeleton."""
    if skeleton_path.dimension != 2:
        raise ValueError("rough volatility needs a 2-dimensional skeleton")
    m = skeleton_path.n_steps
    a = np.asarray(actions, dtype=float)
    if n_steps is None:
        n_steps = min(m, a.shape[0])
    a = _normalize_actions(a, n_steps)
    times = skeleton_path.cumulative_times
    z, _ = _rough_z_values(spec, times, skeleton_path.increments)
    values = np.empty((n_steps + 1, 1))
    values[0, 0] = spec.x0
    for j in range(n_steps):
        x = values[j, 0]
        mu_j = float(np.asarray(spec.mu(a[None, j])).reshape(1)[0])
        th_j = float(
            np.asarray(spec.vartheta(np.array([z[j]]), a[None, j])).reshape(1)[0]
        )
        values[j + 1, 0] = x + x * mu_j * skeleton_path.delta_times[j] + x * th_j * (
            skeleton_path.increments[j, 0]
        )
    return (
        StatePath(times[: n_steps + 1], values, n_steps),
        z[: n_steps + 1],
    )


# ---------------------------------------------------------------------------
# stepping protocol used by the dynamic-programming solver


class ControlledStructure:
    """Batch stepping interface consumed by ``dp.backward_solve``.

    ``prepare`` is called once per skeleton batch and may return an auxiliary
    per-step array (n, m+1) that is appended to the regression state (used
    for the rough-vol Z).  ``step`` must depend on actions with index < j
    only through the supplied prefix, never on the future.
    """

    state_dim = 1
    action_dim = 1

    def initial_state(self):
        raise NotImplementedError

    def prepare(self, delta, incr):
        return None

    def step(self, j, t, states, actions, dt, eta, aux):
        raise NotImplementedError

    def evolve(self, delta, incr, actions, n_steps=None):
        n, m, d = incr.shape
        if n_steps is None:
            n_steps = min(m, actions.shape[1])
        aux = self.prepare(delta, incr)
        values = np.empty((n, n_steps + 1, self.state_dim))
        values[:, 0] = self.initial_state()
        t = np.zeros(n)
        for j in range(n_steps):
            values[:, j + 1] = self.step(
                j, t, values[:, : j + 1], actions[:, j], delta[:, j], incr[:, j], aux
            )
            t = t + delta[:, j]
        return values, aux


class EulerStructure(ControlledStructure):
    def __init__(self, coeffs, d, action_dim=1):
        self.coeffs = coeffs
        self.state_dim = coeffs.x0.shape[0]
        self.d = d
        self.action_dim = action_dim

    def initial_state(self):
        return self.coeffs.x0

    def step(self, j, t, states, actions, dt, eta, aux):
        n = states.shape[0]
        drift = np.asarray(self.coeffs.drift(j, t, states, actions), float)
        diff = np.asarray(self.coeffs.diffusion(j, t, states, actions), float)
        return (
            states[:, -1]
            + drift.reshape(n, self.state_dim) * dt[:, None]
            + np.einsum("nsd,nd->ns", diff.reshape(n, self.state_dim, self.d), eta)
        )


class FbmDriftStructure(ControlledStructure):
    """Scalar state with controlled drift and additive discrete-fBM noise."""

    def __init__(self, drift, spec, x0=0.0):
        self.drift = drift
        self.spec = spec
        self.x0 = float(x0)
        self.state_dim = 1

    def initial_state(self):
        return np.array([self.x0])

    def prepare(self, delta, incr):
        n, m, _ = incr.shape
        dbh = np.empty((n, m))
        for i in range(n):
            times = np.concatenate([[0.0], np.cumsum(delta[i])])
            A = np.concatenate([[0.0], np.cumsum(incr[i, :, 0])])
            bh = fbm.discrete_fbm_path(
                times, A, self.spec.H, self.spec.molchan_constant
            )
            dbh[i] = np.diff(bh)
        if not np.all(np.isfinite(dbh)):
            raise FloatingPointError("fBM kernel integral produced non-finite values")
        return dbh

    def step(self, j, t, states, actions, dt, eta, aux):
        n = states.shape[0]
        drift = np.asarray(self.drift(j, t, states, actions), float).reshape(n, 1)
        return states[:, -1] + drift * dt[:, None] + self.spec.sigma * aux[:, j, None]


class RoughVolStructure(ControlledStructure):
    """Controlled rough-vol price; aux carries the Z path for regressions."""

    def __init__(self, spec):
        self.spec = spec
        self.state_dim = 1

    def initial_state(self):
        return np.array([self.spec.x0])

    def prepare(self, delta, incr):
        n, m, d = incr.shape
        if d != 2 and m > 0:
            raise ValueError("rough volatility needs a 2-dimensional skeleton")
        z = np.empty((n, m + 1))
        for i in range(n):
            times = np.concatenate([[0.0], np.cumsum(delta[i])])
            z[i], _ = _rough_z_values(self.spec, times, incr[i])
        return z

    def step(self, j, t, states, actions, dt, eta, aux):
        x = states[:, -1, 0]
        mu_j = np.asarray(self.spec.mu(actions), float).reshape(-1)
        th_j = np.asarray(self.spec.vartheta(aux[:, j], actions), float).reshape(-1)
        return (x + x * mu_j * dt + x * th_j * eta[:, 0])[:, None]


class SignWalkStructure(ControlledStructure):
    """Synthetic tree model: the state moves by
    action * (drift_gain + noise_gain * sign of the first increment axis).
    The outcome tree is finite and the optimal value exactly enumerable, so
    it serves as the dynamic-programming oracle fixture; zero noise_gain
    gives fully deterministic one-step problems."""

    def __init__(self, x0=0.0, drift_gain=0.0, noise_gain=1.0):
        self.x0 = float(x0)
        self.drift_gain = float(drift_gain)
        self.noise_gain = float(noise_gain)
        self.state_dim = 1

    def initial_state(self):
        return np.array([self.x0])

    def step(self, j, t, states, actions, dt, eta, aux):
        move = self.drift_gain + self.noise_gain * np.sign(eta[:, :1])
        return states[:, -1] + actions[:, :1] * move


# ---------------------------------------------------------------------------
# built-in coefficient registry (CLI model configuration)


def linear_coefficients(x0, drift_const=0.0, action_gain=1.0, sigma=1.0, d=1):
    """dX = (drift_const + action_gain . a) dt + sigma dA."""

    def drift(j, t, states, actions):
        n = states.shape[0]
        return np.full((n, 1), drift_const) + action_gain * actions[:, :1]

    def diffusion(j, t, states, actions):
        n = states.shape[0]
        out = np.zeros((n, 1, d))
        out[:, 0, 0] = sigma
        return out

    return SdeCoefficients(drift, diffusion, np.atleast_1d(x0))


def geometric_coefficients(x0, mu_gain=0.0, sigma=0.2, d=1):
    """dX = X (mu_gain . a) dt + sigma X dA (Black-Scholes for zero gain)."""

    def drift(j, t, states, actions):
        return states[:, -1, :1] * mu_gain * actions[:, :1]

    def diffusion(j, t, states, actions):
        n = states.shape[0]
        out = np.zeros((n, 1, d))
        out[:, 0, 0] = sigma * states[:, -1, 0]
        return out

    return SdeCoefficients(drift, diffusion, np.atleast_1d(x0))


def ou_coefficients(x0, rate=1.0, level=0.0, sigma=1.0, action_gain=0.0, d=1):
    """dX = (rate (level - X) + action_gain . a) dt + sigma dA."""

    def drift(j, t, states, actions):
        pull = rate * (level - states[:, -1, :1])
        return pull + action_gain * actions[:, :1]

    def diffusion(j, t, states, actions):
        n = states.shape[0]
        out = np.zeros((n, 1, d))
        out[:, 0, 0] = sigma
        return out

    return SdeCoefficients(drift, diffusion, np.atleast_1d(x0))


def _build_euler(params):
    kind = params.get("coefficients", "linear")
    d = int(params.get("d", 1))
    builders = {
        "linear": linear_coefficients,
        "geometric": geometric_coefficients,
        "ou": ou_coefficients,
    }
    if kind not in builders:
        raise KeyError(f"unknown coefficient set '{kind}'")
    kwargs = {
        k: v
        for k, v in params.items()
        if k not in ("coefficients", "kind", "d")
    }
    coeffs = builders[kind](d=d, **kwargs)
    return EulerStructure(coeffs, d)


def _build_signwalk(params):
    return SignWalkStructure(
        x0=float(params.get("x0", 0.0)),
        drift_gain=float(params.get("drift_gain", 0.0)),
        noise_gain=float(params.get("noise_gain", 1.0)),
    )


def _build_fbm_drift(params):
    spec = FbmSpec(H=float(params["H"]), sigma=float(params.get("sigma", 1.0)))
    gain = float(params.get("action_gain", 1.0))
    pull = float(params.get("rate", 0.0))

    def drift(j, t, states, actions):
        return -pull * states[:, -1, :1] + gain * actions[:, :1]

    return FbmDriftStructure(drift, spec, x0=float(params.get("x0", 0.0)))


def _build_rough_vol(params):
    mu_gain = float(params.get("mu_gain", 0.0))
    theta0 = float(params.get("vartheta_scale", 0.2))

    def mu(actions):
        return mu_gain * actions[:, 0]

    def vartheta(z, actions):
        # bounded loading: exp(z) clipped, scaled by the first action coord
        return theta0 * np.minimum(np.exp(z), 4.0) * actions[:, 0]

    spec = RoughVolSpec(
        H=float(params["H"]),
        nu=float(params.get("nu", 1.0)),
        beta=float(params.get("beta", 1.0)),
        z0=float(params.get("z0", 0.0)),
        rho=float(params.get("rho", 0.0)),
        mu=mu,
        vartheta=vartheta,
        x0=float(params.get("x0", 1.0)),
    )
    return RoughVolStructure(spec)


STRUCTURE_REGISTRY = {
    "euler": _build_euler,
    "sign-walk": _build_signwalk,
    "fbm-drift": _build_fbm_drift,
    "rough-vol": _build_rough_vol,
}


def build_structure(name, params):
    if name not in STRUCTURE_REGISTRY:
        raise KeyError(
            f"unknown structure '{name}'; available: {sorted(STRUCTURE_REGISTRY)}"
        )
    return STRUCTURE_REGISTRY[name](dict(params))


# ---------------------------------------------------------------------------
# rate experiments


def gbm_strong_error(k, n_paths, sigma=0.2, horizon=1.0, seed=0, x0=1.0):
    """E sup_n |Euler GBM - exact GBM| on the d=1 skeleton at level k.

    The exact geometric Brownian path is evaluated at the skeleton times from
    the Brownian values the skeleton itself carries (the cumulative increment
    path equals the Brownian motion sampled at the hitting times), so both
    paths live on the same probability space.
    """
    cfg = SkeletonConfig(1, 2.0 ** -k, horizon, 1.0, seed)
    m = e_steps(horizon, cfg.epsilon_k, 1.0)
    delta, incr = simulate_skeleton_batch(cfg, m, n_paths)
    steps = incr[:, :, 0]
    euler = x0 * np.cumprod(1.0 + sigma * steps, axis=1)
    times = np.cumsum(delta, axis=1)
    brownian = np.cumsum(steps, axis=1)
    exact = x0 * np.exp(sigma * brownian - 0.5 * sigma * sigma * times)
    err = np.abs(euler - exact).max(axis=1)
    return float(err.mean()), float(err.std(ddof=1) / math.sqrt(n_paths))


def gbm_strong_error_slope(k_values, n_paths, sigma=0.2, horizon=1.0, seed=0):
    """Fitted slope of log E sup-error against log epsilon_k."""
    errs = []
    for k in k_values:
        mean, _ = gbm_strong_error(k, n_paths, sigma, horizon, seed + k)
        errs.append(mean)
    eps = np.array([2.0 ** -k for k in k_values])
    slope = float(np.polyfit(np.log(eps), np.log(np.asarray(errs)), 1)[0])
    return slope, np.asarray(errs)


def fbm_fidelity_samples(H, k, eval_times, n_paths, seed, margin=1.35):
    """Samples of the discrete fBM at the last skeleton time <= each t.

    Returns an (n_paths, len(eval_times)) matrix for variance/covariance
    checks against the fBM oracle t^{2H} and
    (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.
    """
    t_max = max(eval_times)
    cfg = SkeletonConfig(1, 2.0 ** -k, t_max, 1.0, seed)
    m = int(margin * e_steps(t_max, cfg.epsilon_k, 1.0)) + 8
    delta, incr = simulate_skeleton_batch(cfg, m, n_paths)
    c_H = fbm.molchan_constant(H)
    out = np.empty((n_paths, len(eval_times)))
    for i in range(n_paths):
        times = np.concatenate([[0.0], np.cumsum(delta[i])])
        if times[-1] <= t_max:
            raise RuntimeError("skeleton horizon margin too small; raise margin")
        A = np.concatenate([[0.0], np.cumsum(incr[i, :, 0])])
        for j, t in enumerate(eval_times):
            n = int(np.searchsorted(times, t, side="right")) - 1
            out[i, j] = fbm.discrete_fbm_at_index(times, A, n, H, c_H)
    return out
