import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(13579)


def enumerate_two_step_tree(drift_gain, noise_gain, grid, payoff_fn, x0=0.0):
    """Exhaustive optimum of the two-step sign-walk tree.

    Walk: X_{j+1} = X_j + a_j (drift_gain + noise_gain s_{j+1}),
    s in {-1, +1} with probability 1/2.  Returns
    max_a0 E_s1 [ max_a1 E_s2 payoff(x0, X1, X2) ].
    """
    best0 = -np.inf
    for a0 in grid:
        outer = 0.0
        for s1 in (-1.0, 1.0):
            x1 = x0 + a0 * (drift_gain + noise_gain * s1)
            best1 = -np.inf
            for a1 in grid:
                inner = 0.0
                for s2 in (-1.0, 1.0):
                    x2 = x1 + a1 * (drift_gain + noise_gain * s2)
                    inner += 0.5 * payoff_fn(x0, x1, x2)
                best1 = max(best1, inner)
            outer += 0.5 * best1
        best0 = max(best0, outer)
    return best0


def tree_payoff(w_mid=0.3, w_end=1.0, quad=0.5):
    """Quadratic payoff on the (X1, X2) tree, matching the CLI registry's
    mid-terminal-quad entry."""

    def scalar(x0, x1, x2):
        return w_mid * x1 + w_end * x2 - quad * x2 * x2

    def batch(times, values):
        return (
            w_mid * values[:, 1, 0]
            + w_end * values[:, -1, 0]
            - quad * values[:, -1, 0] ** 2
        )

    return scalar, batch
