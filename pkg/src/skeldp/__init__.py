"""skeldp: stochastic control on the hitting-time skeleton of Brownian motion.

Simulates the discrete skeleton of a d-dimensional Brownian motion (waiting
times between +-epsilon moves in sup-norm plus the increment vectors), evolves
controlled state dynamics on that random partition (path-dependent SDEs,
fractional-Brownian drivers, rough stochastic volatility), and solves the
finite-horizon control problem by regression Monte Carlo backward induction
with epsilon-optimal policy extraction.  The quadratic-hedging benchmark for
an exchange option (with Margrabe's formula as ground truth) exercises the
full pipeline.
"""

from ._backend import backend_name
from .version import __version__

__all__ = ["backend_name", "__version__"]
