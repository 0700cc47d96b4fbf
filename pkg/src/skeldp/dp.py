"""Backward dynamic programming by regression Monte Carlo.

The solver simulates skeleton paths under uniformly explored grid actions,
then sweeps backward: at each step the next-step value is regressed on
history features separately for every grid action (the state-action value
surface), the fitted surfaces are maximized over the grid, and the maximum
becomes the regression target of the previous step.  The step-0 optimum is
the value estimate; policies select the grid argmax with a per-step tie
tolerance of epsilon / n_steps, breaking ties toward the lexicographically
largest action.

Value estimates from the backward pass are in-sample (standard regression
Monte Carlo); ``evaluate_policy`` re-simulates fresh paths and is the
unbiased counterpart.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .skeleton import simulate_skeleton_batch, stream

__all__ = [
    "RegressionError",
    "History",
    "ValueEstimate",
    "RegressionSpec",
    "StepValueFunction",
    "ValueFunctions",
    "Policy",
    "FEATURE_REGISTRY",
    "backward_solve",
    "extract_epsilon_policy",
    "evaluate_policy",
    "save_policy",
    "load_policy",
    "export_value_functions_csv",
]

_EXPLORATION_STREAM = 2 ** 63 - 1  # reserved stream key, never a path index


class RegressionError(RuntimeError):
    """Normal equations stayed singular after ridge escalation."""


@dataclass(frozen=True)
class History:
    """Interleaved (action, waiting time, increment) records."""

    records: Tuple[Tuple[np.ndarray, float, np.ndarray], ...]

    def __post_init__(self):
        for a, dt, eta in self.records:
            if dt <= 0:
                raise ValueError("waiting times must be positive")
        object.__setattr__(
            self,
            "records",
            tuple(
                (np.atleast_1d(np.asarray(a, float)), float(dt), np.atleast_1d(np.asarray(e, float)))
                for a, dt, e in self.records
            ),
        )

    def __len__(self):
        return len(self.records)

    def arrays(self):
        """(actions (j, r), delta (j,), incr (j, d)) for structure replay."""
        if not self.records:
            return np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1))
        a = np.stack([r[0] for r in self.records])
        dt = np.array([r[1] for r in self.records])
        eta = np.stack([r[2] for r in self.records])
        return a, dt, eta


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    std_err: float
    n_paths: int

    def __post_init__(self):
        if self.std_err < 0:
            raise ValueError("std_err must be nonnegative")


def quadratic_state_time_features(t, state, prev_action):
    """Full degree <= 2 polynomial in (state components, time)."""
    base = np.column_stack([state, t])
    n, p = base.shape
    cols = [np.ones(n)]
    cols.extend(base[:, i] for i in range(p))
    for i in range(p):
        for j in range(i, p):
            cols.append(base[:, i] * base[:, j])
    return np.column_stack(cols)


def quadratic_state_features(t, state, prev_action):
    """Degree <= 2 polynomial in the state components only."""
    n, p = state.shape
    cols = [np.ones(n)]
    cols.extend(state[:, i] for i in range(p))
    for i in range(p):
        for j in range(i, p):
            cols.append(state[:, i] * state[:, j])
    return np.column_stack(cols)


def linear_state_features(t, state, prev_action):
    return np.column_stack([np.ones(state.shape[0]), state])


FEATURE_REGISTRY = {
    "quad-state-time": quadratic_state_time_features,
    "quad-state": quadratic_state_features,
    "linear-state": linear_state_features,
}


@dataclass(frozen=True)
class RegressionSpec:
    """Regression Monte Carlo settings.

    ``feature_map`` is a registry name or a callable
    (t (n,), state (n, S), prev_action (n, r)) -> (n, F); the state passed in
    is the structure state with any auxiliary column (e.g. rough-vol Z)
    appended.
    """

    feature_map: object = "quad-state-time"
    ridge_lambda: float = 0.0
    n_paths: int = 10_000

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def feature_name(self):
        return self.feature_map if isinstance(self.feature_map, str) else getattr(
            self.feature_map, "__name__", "<custom>"
        )

    def features(self, t, state, prev_action):
        fm = (
            FEATURE_REGISTRY[self.feature_map]
            if isinstance(self.feature_map, str)
            else self.feature_map
        )
        F = np.asarray(fm(t, state, prev_action), float)
        if not np.all(np.isfinite(F)):
            raise RegressionError("non-finite feature values")
        return F


def _fit_one(F, y, ridge_lambda):
    """Least squares with ridge escalation on numerically singular designs."""
    lam = ridge_lambda
    for attempt in range(4):
        if lam == 0.0:
            beta, *_ = np.linalg.lstsq(F, y, rcond=None)
        else:
            G = F.T @ F + lam * np.eye(F.shape[1])
            try:
                beta = np.linalg.solve(G, F.T @ y)
            except np.linalg.LinAlgError:
                beta = None
        if beta is not None and np.all(np.isfinite(beta)):
            return beta
        lam = 1e-8 if lam == 0.0 else lam * 10.0
    raise RegressionError("regression stayed singular after ridge escalation")


@dataclass(frozen=True)
class StepValueFunction:
    """Fitted state-action value surface of one step: one coefficient row per
    grid action."""

    step: int
    coeffs: np.ndarray  # (G, F)


@dataclass(frozen=True)
class ValueFunctions:
    grid: np.ndarray  # (G, r)
    steps: Tuple[StepValueFunction, ...]  # ordered by step 0..m-1
    feature_map: object
    ridge_lambda: float

    @property
    def n_steps(self):
        return len(self.steps)


@dataclass(frozen=True)
class Policy:
    """Per-step action rules over the grid with an epsilon tie budget.

    Either regression-based (``value_functions`` set) or an analytic rule
    callable (j, t, state, prev_action) -> (n, r).  The per-step tolerance is
    exactly epsilon_budget / n_steps; actions whose fitted score is within it
    of the maximum count as ties and the lexicographically largest grid point
    wins.
    """

    n_steps: int
    epsilon_budget: float = 0.0
    value_functions: Optional[ValueFunctions] = None
    rule: Optional[Callable] = None

    def __post_init__(self):
        if (self.value_functions is None) == (self.rule is None):
            raise ValueError("exactly one of value_functions / rule required")
        if self.epsilon_budget < 0:
            raise ValueError("epsilon_budget must be nonnegative")

    @property
    def eta(self):
        """Per-step tie tolerance epsilon / n_steps (0 when n_steps = 0)."""
        return self.epsilon_budget / self.n_steps if self.n_steps else 0.0

    def _spec(self):
        return RegressionSpec(
            feature_map=self.value_functions.feature_map,
            ridge_lambda=self.value_functions.ridge_lambda,
        )

    def action_indices(self, j, t, state, prev_action):
        vf = self.value_functions
        if vf is None:
            raise ValueError("analytic-rule policies have no grid indices")
        F = self._spec().features(t, state, prev_action)
        scores = F @ vf.steps[j].coeffs.T  # (n, G)
        best = scores.max(axis=1, keepdims=True)
        eligible = scores >= best - self.eta
        # grid rows are lexicographically ascending: last eligible idx wins
        G = scores.shape[1]
        return G - 1 - np.argmax(eligible[:, ::-1], axis=1)

    def actions(self, j, t, state, prev_action):
        if self.rule is not None:
            a = np.asarray(self.rule(j, t, state, prev_action), float)
            return a if a.ndim == 2 else a[:, None]
        idx = self.action_indices(j, t, state, prev_action)
        return self.value_functions.grid[idx]

    def action_from_history(self, structure, history, dimension=1):
        """Replay a history through the structure and apply rule len(history).

        The rule reads nothing beyond the replayed prefix, so two histories
        agreeing up to j produce identical actions.
        """
        j = len(history)
        if j >= self.n_steps and self.n_steps:
            raise ValueError("history longer than the policy horizon")
        r = (
            self.value_functions.grid.shape[1]
            if self.value_functions is not None
            else 1
        )
        a, dt, eta = history.arrays()
        if j == 0:
            state = structure.initial_state()[None, :]
            aux = structure.prepare(np.zeros((1, 0)), np.zeros((1, 0, dimension)))
            t = np.zeros(1)
        else:
            values, aux = structure.evolve(dt[None, :], eta[None, :, :], a[None, :, :])
            state = values[:, -1]
            t = np.array([dt.sum()])
        if aux is not None and aux.size:
            state = np.column_stack([state, aux[:, j]])
        prev = a[-1][None, :] if j else np.zeros((1, r))
        return self.actions(j, t, state, prev)[0]


def _reg_state(values, aux, j):
    state = values[:, j]
    if aux is not None:
        state = np.column_stack([state, aux[:, j]])
    return state


def _check_payoff(y):
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise FloatingPointError(
            f"non-finite payoff on simulated path index {int(bad[0])}"
        )


def backward_solve(
    structure, payoff, action_space, regression, config, seed=None, sampler=None
):
    """Regression Monte Carlo backward induction.

    Returns (value estimate at step 0, greedy policy, fitted value surfaces).
    ``payoff(times (n, m+1), values (n, m+1, S)) -> (n,)`` is evaluated on
    the full simulated state path.  Exploration actions are uniform over the
    action grid (path skeletons use streams (seed, i), exploration a
    reserved stream).  ``sampler(n_paths, seed, path_offset) -> (delta,
    incr)`` overrides the default joint-skeleton path generator.
    """
    if seed is None:
        seed = config.seed
    m = config.n_periods
    if m < 1:
        raise ValueError("horizon yields zero dynamic-programming periods")
    n = regression.n_paths
    grid = action_space.grid()
    G = grid.shape[0]

    if sampler is None:
        delta, incr = simulate_skeleton_batch(config, m, n, seed=seed)
    else:
        delta, incr = sampler(n, seed, 0)
        delta = delta if delta.ndim == 2 else delta.mean(axis=2)
    expl = stream(seed, _EXPLORATION_STREAM)
    gidx = expl.integers(0, G, size=(n, m))
    actions = grid[gidx]

    values, aux = structure.evolve(delta, incr, actions, n_steps=m)
    times = np.zeros((n, m + 1))
    np.cumsum(delta, axis=1, out=times[:, 1:])
    y = np.asarray(payoff(times, values), float)
    _check_payoff(y)

    r = grid.shape[1]
    surfaces = [None] * m
    v0_stats = None
    for j in range(m - 1, -1, -1):
        prev = actions[:, j - 1] if j > 0 else np.zeros((n, r))
        F = regression.features(times[:, j], _reg_state(values, aux, j), prev)
        coeffs = np.empty((G, F.shape[1]))
        for g in range(G):
            mask = gidx[:, j] == g
            if not mask.any():
                raise RegressionError(
                    f"no exploration sample for grid action {g} at step {j}; "
                    "increase n_paths"
                )
            coeffs[g] = _fit_one(F[mask], y[mask], regression.ridge_lambda)
        scores = F @ coeffs.T
        surfaces[j] = StepValueFunction(j, coeffs)
        if j == 0:
            gbest = int(scores.mean(axis=0).argmax())
            sub = y[gidx[:, 0] == gbest]
            v0_stats = (
                float(scores.max(axis=1).mean()),
                float(sub.std(ddof=1) / math.sqrt(sub.size)),
            )
        y = scores.max(axis=1)

    vf = ValueFunctions(
        grid=grid,
        steps=tuple(surfaces),
        feature_map=regression.feature_map,
        ridge_lambda=regression.ridge_lambda,
    )
    policy = extract_epsilon_policy(vf, 0.0)
    v0 = ValueEstimate(v0_stats[0], v0_stats[1], n)
    return v0, policy, vf


def extract_epsilon_policy(value_functions, epsilon):
    """Greedy-within-epsilon policy: per-step tolerance epsilon / n_steps,
    lexicographically largest action among ties."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return Policy(
        n_steps=value_functions.n_steps,
        epsilon_budget=float(epsilon),
        value_functions=value_functions,
    )


def evaluate_policy(policy, structure, payoff, n_paths, config, seed, sampler=None):
    """Out-of-sample value of a policy on fresh skeleton paths."""
    m = config.n_periods
    if policy.n_steps != m:
        raise ValueError("policy step count does not match the configuration")
    if sampler is None:
        delta, incr = simulate_skeleton_batch(config, m, n_paths, seed=seed)
    else:
        delta, incr = sampler(n_paths, seed, 0)
        delta = delta if delta.ndim == 2 else delta.mean(axis=2)
    aux = structure.prepare(delta, incr)
    n = n_paths
    r = policy.value_functions.grid.shape[1] if policy.value_functions is not None else structure.action_dim
    values = np.empty((n, m + 1, structure.state_dim))
    values[:, 0] = structure.initial_state()
    actions = np.zeros((n, m, r))
    t = np.zeros(n)
    for j in range(m):
        state = values[:, j]
        if aux is not None:
            state = np.column_stack([state, aux[:, j]])
        prev = actions[:, j - 1] if j > 0 else np.zeros((n, r))
        actions[:, j] = policy.actions(j, t, state, prev)
        values[:, j + 1] = structure.step(
            j, t, values[:, : j + 1], actions[:, j], delta[:, j], incr[:, j], aux
        )
        t = t + delta[:, j]
    times = np.zeros((n, m + 1))
    np.cumsum(delta, axis=1, out=times[:, 1:])
    y = np.asarray(payoff(times, values), float)
    _check_payoff(y)
    return ValueEstimate(
        float(y.mean()), float(y.std(ddof=1) / math.sqrt(n)), n
    )


# ---------------------------------------------------------------------------
# serialization

_POLICY_HEADER = "skeldp-policy v1"


def save_policy(filename, policy):
    """Versioned text dump (registry feature maps only)."""
    vf = policy.value_functions
    if vf is None:
        raise ValueError("analytic-rule policies are not serializable")
    if not isinstance(vf.feature_map, str):
        raise ValueError("only registry feature maps serialize; name the map")
    grid = vf.grid
    with open(filename, "w") as fh:
        fh.write(_POLICY_HEADER + "\n")
        fh.write(f"feature {vf.feature_map}\n")
        fh.write(f"ridge {vf.ridge_lambda!r}\n")
        fh.write(f"epsilon {policy.epsilon_budget!r}\n")
        fh.write(f"n_steps {policy.n_steps}\n")
        fh.write(f"grid {grid.shape[0]} {grid.shape[1]}\n")
        for row in grid:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for svf in vf.steps:
            fh.write(f"step {svf.step} {svf.coeffs.shape[0]} {svf.coeffs.shape[1]}\n")
            for row in svf.coeffs:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_policy(filename):
    with open(filename) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if lines[0] != _POLICY_HEADER:
        raise ValueError(f"not a skeldp policy file: {lines[0]!r}")
    feature = lines[1].split(None, 1)[1]
    ridge = float(lines[2].split()[1])
    epsilon = float(lines[3].split()[1])
    n_steps = int(lines[4].split()[1])
    G, r = (int(x) for x in lines[5].split()[1:])
    pos = 6
    grid = np.array(
        [[float(x) for x in lines[pos + i].split()] for i in range(G)]
    ).reshape(G, r)
    pos += G
    steps = []
    for _ in range(n_steps):
        _, step_j, g_count, f_count = lines[pos].split()
        g_count, f_count = int(g_count), int(f_count)
        pos += 1
        coeffs = np.array(
            [[float(x) for x in lines[pos + i].split()] for i in range(g_count)]
        ).reshape(g_count, f_count)
        pos += g_count
        steps.append(StepValueFunction(int(step_j), coeffs))
    steps.sort(key=lambda s: s.step)
    vf = ValueFunctions(grid, tuple(steps), feature, ridge)
    return Policy(n_steps=n_steps, epsilon_budget=epsilon, value_functions=vf)


def export_value_functions_csv(filename, value_functions):
    """One row per (step, grid action): action components then coefficients."""
    grid = value_functions.grid
    with open(filename, "w") as fh:
        r = grid.shape[1]
        F = value_functions.steps[0].coeffs.shape[1]
        header = ["step"] + [f"a{i}" for i in range(r)] + [f"c{i}" for i in range(F)]
        fh.write(",".join(header) + "\n")
        for svf in value_functions.steps:
            for g, row in enumerate(svf.coeffs):
                cells = [str(svf.step)] + [repr(float(x)) for x in grid[g]] + [
                    repr(float(x)) for x in row
                ]
                fh.write(",".join(cells) + "\n")
