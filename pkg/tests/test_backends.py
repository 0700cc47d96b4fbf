"""The numba kernels and the pure-NumPy fallbacks must agree numerically
(same series, same inversion, same uniform-consumption layout)."""

import numpy as np

from skeldp import _kernels, _scalar, _vector
from skeldp._backend import backend_name


def test_backend_name_reports():
    assert backend_name() in ("numba", "numpy")


def test_quantile_paths_agree():
    ut, tt = _kernels.quantile_tables()
    rng = np.random.default_rng(1)
    u = rng.random(4000)
    vec = _vector.exit_quantile_vec(u, ut, tt)
    scal = np.array([_scalar.exit_quantile(x, ut, tt) for x in u])
    assert np.max(np.abs(vec - scal)) < 5e-12


def test_skeleton_fill_paths_agree():
    ut, tt = _kernels.quantile_tables()
    rng = np.random.default_rng(2)
    for d in (1, 2, 3):
        U = rng.random((500, 2 * d))
        eps = 0.25
        d1 = np.empty(500)
        i1 = np.empty((500, d))
        _scalar.skeleton_fill(U, eps, d1, i1, ut, tt)
        d2 = np.empty(500)
        i2 = np.empty((500, d))
        _vector.skeleton_fill_vec(U, eps, d2, i2, ut, tt)
        assert np.max(np.abs(d1 - d2)) < 1e-13
        assert np.max(np.abs(i1 - i2)) < 1e-12


def test_truncated_normal_transforms_agree():
    rng = np.random.default_rng(3)
    u = rng.random(2000)
    sd, bound = 0.11, 0.25
    vec = _vector.trunc_normal_from_uniform_vec(u, sd, bound)
    scal = np.array([_scalar.trunc_normal_from_uniform(x, sd, bound) for x in u])
    assert np.max(np.abs(vec - scal)) < 1e-13
