import math

import numpy as np
import pytest
from scipy.integrate import quad

from skeldp import fbm, structures as st
from skeldp.skeleton import SkeletonConfig, reconstruct_Ak, simulate_skeleton, stream


def _path(d=1, k=2, n=40, seed=9):
    cfg = SkeletonConfig.for_level(k, d, 1.0, seed, chi_d=1.0 if d == 1 else None)
    return simulate_skeleton(cfg, n, stream(seed, 0))


# ---------------------------------------------------------------- kernels


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_kernel_variance_identity(H):
    cH = fbm.molchan_constant(H)
    t = 0.8
    if H > 0.5:
        z = lambda s: fbm.kernel_high(t, s, H, cH, fbm.GL_X01, fbm.GL_W01)
    else:
        z = lambda s: fbm.kernel_low_k1(t, s, H, cH) + fbm.kernel_low_k2(
            t, s, H, cH, fbm.GL_X01, fbm.GL_W01
        )
    val, _ = quad(lambda s: z(s) ** 2, 0, t, points=[0, t], limit=400)
    assert val == pytest.approx(t ** (2 * H), rel=1e-6)


@pytest.mark.parametrize("H,s,t", [(0.7, 1e-4, 1.0), (0.7, 0.45, 0.5), (0.9, 0.01, 2.0)])
def test_kernel_high_vs_adaptive_quadrature(H, s, t):
    cH = fbm.molchan_constant(H)
    ref, _ = quad(
        lambda u: u ** (H - 0.5) * (u - s) ** (H - 1.5), s, t, points=[s], limit=400
    )
    ref *= cH * (H - 0.5) * s ** (0.5 - H)
    ours = fbm.kernel_high(t, s, H, cH, fbm.GL_X01, fbm.GL_W01)
    assert ours == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("H,s,t", [(0.3, 1e-4, 1.0), (0.3, 0.45, 0.5), (0.1, 0.01, 2.0)])
def test_kernel_low_vs_adaptive_quadrature(H, s, t):
    cH = fbm.molchan_constant(H)
    ref, _ = quad(
        lambda u: u ** (H - 1.5) * (u - s) ** (H - 0.5), s, t, points=[s], limit=400
    )
    ref *= cH * (0.5 - H) * s ** (0.5 - H)
    ours = fbm.kernel_low_k2(t, s, H, cH, fbm.GL_X01, fbm.GL_W01)
    assert ours == pytest.approx(ref, rel=1e-8)


def test_fbm_backend_paths_agree():
    path = _path(n=50)
    times = path.cumulative_times
    A = np.concatenate([[0.0], np.cumsum(path.increments[:, 0])])
    for H in (0.3, 0.7):
        cH = fbm.molchan_constant(H)
        full = fbm.discrete_fbm_path(times, A, H, cH)
        ref = np.array(
            [fbm._fbm_at_numpy(times, A, n, H, cH) for n in range(times.size)]
        )
        assert np.max(np.abs(full - ref)) < 1e-12
        at = fbm.discrete_fbm_at_index(times, A, 30, H, cH)
        assert at == pytest.approx(full[30], abs=1e-12)


# ---------------------------------------------------------------- ActionSpace


def test_action_grid_lexicographic():
    asp = st.ActionSpace(r=2, a_bar=1.0, grid_points_per_axis=3)
    g = asp.grid()
    assert g.shape == (9, 2)
    assert np.array_equal(g[0], [-1.0, -1.0])
    assert np.array_equal(g[-1], [1.0, 1.0])
    # ascending lexicographic: first component most significant
    order = np.lexsort(g.T[::-1])
    assert np.array_equal(order, np.arange(9))
    assert asp.contains([0.5, -1.0])
    assert not asp.contains([1.5, 0.0])


def test_action_space_custom_grid_sorted():
    asp = st.ActionSpace(r=1, a_bar=1.0, custom_grid=[[0.5], [-1.0], [1.0]])
    assert np.array_equal(asp.grid().ravel(), [-1.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        st.ActionSpace(r=1, a_bar=0.4, custom_grid=[[0.5]])


# ---------------------------------------------------------------- Euler


def test_euler_zero_coefficients_constant():
    path = _path(d=2, n=30)
    coeffs = st.SdeCoefficients(
        drift=lambda j, t, s, a: np.zeros((s.shape[0], 1)),
        diffusion=lambda j, t, s, a: np.zeros((s.shape[0], 1, 2)),
        x0=[3.25],
    )
    actions = np.zeros((30, 1))
    sp = st.euler_pd_sde(coeffs, path, actions)
    assert np.all(sp.values == 3.25)


def test_euler_identity_diffusion_telescopes():
    path = _path(d=2, n=25)
    coeffs = st.SdeCoefficients(
        drift=lambda j, t, s, a: np.zeros((s.shape[0], 2)),
        diffusion=lambda j, t, s, a: np.broadcast_to(
            np.eye(2), (s.shape[0], 2, 2)
        ).copy(),
        x0=[1.0, -2.0],
    )
    sp = st.euler_pd_sde(coeffs, path, np.zeros((25, 1)))
    step = reconstruct_Ak(path)
    assert np.allclose(sp.values, step.values + np.array([1.0, -2.0]))


def test_euler_length_mismatch_rejected():
    path = _path(n=10)
    coeffs = st.linear_coefficients(0.0)
    with pytest.raises(ValueError):
        st.euler_pd_sde(coeffs, path, np.zeros((4, 1)), n_steps=8)


def test_state_path_stop_freeze():
    path = _path(n=20)
    coeffs = st.linear_coefficients(0.0, sigma=1.0)
    sp = st.euler_pd_sde(coeffs, path, np.zeros((20, 1)), n_steps=12)
    assert sp.stop_index == 12
    assert np.array_equal(sp.at_step(12), sp.at_step(25))
    assert np.array_equal(sp.terminal, sp.values[12])


@pytest.mark.parametrize("builder", ["euler", "fbm", "roughvol"])
def test_non_anticipativity(builder):
    n_steps = 8
    if builder == "euler":
        structure = st.EulerStructure(
            st.SdeCoefficients(
                drift=lambda j, t, s, a: a[:, :1] * s[:, -1, :1],
                diffusion=lambda j, t, s, a: (1 + a[:, :1, None] ** 2)
                * np.ones((s.shape[0], 1, 1)),
                x0=[1.0],
            ),
            d=1,
        )
        d = 1
    elif builder == "fbm":
        structure = st.FbmDriftStructure(
            drift=lambda j, t, s, a: a[:, :1] - s[:, -1, :1], spec=st.FbmSpec(H=0.3)
        )
        d = 1
    else:
        structure = st.RoughVolStructure(
            st.RoughVolSpec(
                H=0.3,
                nu=0.5,
                beta=1.0,
                z0=0.1,
                rho=-0.5,
                mu=lambda a: 0.1 * a[:, 0],
                vartheta=lambda z, a: 0.2 * np.tanh(z) + 0.1 * a[:, 0],
            )
        )
        d = 2
    cfg = SkeletonConfig(d, 0.25, 1.0, 1.0 if d == 1 else 0.58, seed=3)
    from skeldp.skeleton import simulate_skeleton_batch

    delta, incr = simulate_skeleton_batch(cfg, n_steps, 16)
    rng = np.random.default_rng(0)
    base_actions = rng.uniform(-1, 1, (16, n_steps, 1))
    v0, _ = structure.evolve(delta, incr, base_actions)
    for trial in range(100):
        j = int(rng.integers(0, n_steps))
        pert = base_actions.copy()
        pert[:, j] += rng.uniform(0.01, 0.5)
        v1, _ = structure.evolve(delta, incr, pert)
        assert np.array_equal(v0[:, : j + 1], v1[:, : j + 1]), (builder, j)
        assert not np.allclose(v0[:, j + 1], v1[:, j + 1])


# ---------------------------------------------------------------- fBM paths


def test_fbm_zero_increments_zero_path():
    from skeldp.skeleton import SkeletonPath

    path = SkeletonPath(0.25, np.full(12, 0.01), np.zeros((12, 1)))
    for H in (0.3, 0.7):
        spec = st.FbmSpec(H=H)
        vals = (st.fbm_low if H < 0.5 else st.fbm_high)(path, spec)
        assert np.array_equal(vals, np.zeros(13))


def test_fbm_linearity_exact():
    path = _path(n=30, seed=21)
    doubled = type(path)(
        path.epsilon_k * 2, path.delta_times.copy(), 2.0 * path.increments
    )
    for H, op in ((0.3, st.fbm_low), (0.7, st.fbm_high)):
        spec = st.FbmSpec(H=H)
        a = op(path, spec)
        b = op(doubled, spec)
        assert np.allclose(2.0 * a, b, rtol=1e-12, atol=1e-14)


def test_fbm_wrong_regime_rejected():
    path = _path(n=5)
    with pytest.raises(ValueError):
        st.fbm_high(path, st.FbmSpec(H=0.3))
    with pytest.raises(ValueError):
        st.fbm_low(path, st.FbmSpec(H=0.7))
    with pytest.raises(ValueError):
        st.FbmSpec(H=0.5)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_fbm_marginals_quick(H):
    # coarse/quick version of the fidelity gate (full run in acceptance)
    samples = st.fbm_fidelity_samples(H, k=4, eval_times=(0.3, 0.5, 0.7),
                                      n_paths=1200, seed=5)
    var = samples[:, 1].var()
    assert var == pytest.approx(0.5 ** (2 * H), rel=0.2)
    cov = np.cov(samples[:, 0], samples[:, 2])[0, 1]
    target = 0.5 * (0.3 ** (2 * H) + 0.7 ** (2 * H) - 0.4 ** (2 * H))
    assert cov == pytest.approx(target, rel=0.25)


def test_fbm_drift_sde_reductions():
    path = _path(n=25, seed=33)
    spec = st.FbmSpec(H=0.3, sigma=1.0)
    bh = st.fbm_low(path, spec)
    sp = st.fbm_drift_sde(
        lambda j, t, s, a: np.zeros((s.shape[0], 1)), spec, path,
        np.zeros((25, 1)), x0=0.5
    )
    assert np.allclose(sp.values[:, 0], 0.5 + bh)

    spec0 = st.FbmSpec(H=0.3, sigma=0.0)
    sp2 = st.fbm_drift_sde(
        lambda j, t, s, a: np.full((s.shape[0], 1), 2.0), spec0, path,
        np.zeros((25, 1)), x0=1.0
    )
    assert np.allclose(sp2.values[:, 0], 1.0 + 2.0 * path.cumulative_times[:26])


def test_fbm_ou_terminal_mean():
    # dX = -X dt + dB_H: E X(T) = x0 exp(-T) regardless of the noise
    H, x0, T = 0.7, 2.0, 1.0
    cfg = SkeletonConfig(1, 2.0 ** -3, T, 1.0, seed=8)
    from skeldp.skeleton import e_steps, simulate_skeleton_batch

    m = e_steps(T, cfg.epsilon_k, 1.0)
    delta, incr = simulate_skeleton_batch(cfg, m, 3000)
    structure = st.FbmDriftStructure(
        drift=lambda j, t, s, a: -s[:, -1, :1], spec=st.FbmSpec(H=H), x0=x0
    )
    values, _ = structure.evolve(delta, incr, np.zeros((3000, m, 1)))
    # discrete-time decay: prod (1 - dt_j) instead of exp(-T)
    target = (1.0 - delta).prod(axis=1).mean() * x0
    term = values[:, -1, 0]
    se = term.std(ddof=1) / math.sqrt(term.size)
    assert abs(term.mean() - target) < 3 * se
    assert abs(target - x0 * math.exp(-T)) < 0.05


# ---------------------------------------------------------------- rough vol


def _rough_spec(**kw):
    base = dict(
        H=0.3,
        nu=0.5,
        beta=1.2,
        z0=0.2,
        rho=0.4,
        mu=lambda a: 0.0 * a[:, 0],
        vartheta=lambda z, a: 0.0 * a[:, 0],
    )
    base.update(kw)
    return st.RoughVolSpec(**base)


def test_rough_vol_zero_nu_is_deterministic_decay():
    path = _path(d=2, n=20, seed=44)
    spec = _rough_spec(nu=0.0)
    _, z = st.rough_vol_paths(spec, path, np.zeros((20, 1)))
    assert np.allclose(z, 0.2 * np.exp(-1.2 * path.cumulative_times[:21]))


def test_rough_vol_zero_coefficients_constant_price():
    path = _path(d=2, n=20, seed=45)
    spec = _rough_spec(x0=42.0)
    sp, _ = st.rough_vol_paths(spec, path, np.zeros((20, 1)))
    assert np.all(sp.values == 42.0)


def test_rough_vol_reduces_to_fbm_low_on_axis2():
    path = _path(d=2, n=20, seed=46)
    spec = _rough_spec(beta=0.0, nu=1.0, rho=0.0, z0=0.3)
    _, z = st.rough_vol_paths(spec, path, np.zeros((20, 1)))
    axis2 = type(path)(
        path.epsilon_k, path.delta_times.copy(), path.increments[:, 1:2].copy()
    )
    bh = st.fbm_low(axis2, st.FbmSpec(H=0.3))
    assert np.allclose(z, 0.3 + bh)


def test_rough_vol_requires_two_axes():
    path = _path(d=1, n=10)
    with pytest.raises(ValueError):
        st.rough_vol_paths(_rough_spec(), path, np.zeros((10, 1)))


# ---------------------------------------------------------------- experiments


def test_gbm_strong_error_slope():
    slope, errs = st.gbm_strong_error_slope((2, 3, 4, 5), 1200, seed=14)
    assert slope >= 0.63
    assert np.all(np.diff(errs) < 0)


def test_structure_registry():
    s = st.build_structure("sign-walk", {"x0": 1.0, "drift_gain": 0.5})
    assert isinstance(s, st.SignWalkStructure)
    s = st.build_structure("euler", {"coefficients": "geometric", "x0": 2.0})
    assert isinstance(s, st.EulerStructure)
    s = st.build_structure("fbm-drift", {"H": 0.3})
    assert isinstance(s, st.FbmDriftStructure)
    s = st.build_structure("rough-vol", {"H": 0.3})
    assert isinstance(s, st.RoughVolStructure)
    with pytest.raises(KeyError):
        st.build_structure("nope", {})
