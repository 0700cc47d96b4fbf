"""Batch command-line front end.

Subcommands::

    estimate-chi     Monte Carlo calibration of chi_d with standard error
    sample-skeleton  simulate skeleton batches and dump them in binary form
    solve            generic regression-MC dynamic programming on a model
    hedge            the exchange-option quadratic hedging benchmark table
    rates            decay-rate experiments (mesh gap, Euler strong error,
                     fBM marginal fidelity)

Configuration comes from an optional JSON file (``--config``) overridden by
flags.  Outputs are a CSV plus a JSON metadata sidecar, both carrying the
full configuration echo and package version and no timestamps: a fixed seed
reproduces byte-identical files.  Path-level randomness uses counter-based
streams keyed by (seed, path index), so results are independent of worker
count; ``--workers`` is accepted and validated for interface compatibility.
"""

import argparse
import json
import sys

from . import dp, hedging, structures
from ._backend import backend_name
from .distributions import chi_fixture, estimate_chi
from .skeleton import (
    SkeletonConfig,
    gap_decay_slope,
    simulate_skeleton_batch,
    stream,
    write_skeleton_dump,
)
from .version import __version__

__all__ = ["main", "build_parser"]


def _meta(config):
    return {
        "artifact": "skeldp",
        "version": __version__,
        "backend": backend_name(),
        "config": config,
    }


def _write_csv(path, rows, config):
    meta = _meta(config)
    with open(path, "w") as fh:
        fh.write(f"# skeldp v{__version__} backend={meta['backend']}\n")
        fh.write("# config " + json.dumps(config, sort_keys=True) + "\n")
        if rows:
            cols = list(rows[0].keys())
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _load_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        cfg[key.replace("_", "-")] = value
    return cfg


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise SystemExit(f"error: missing required config field '{key}'")
    return default


def _positive(cfg, key, default=None, kind=float):
    v = kind(_get(cfg, key, default, required=default is None))
    if v <= 0:
        raise SystemExit(f"error: config field '{key}' must be positive, got {v}")
    return v


# ---------------------------------------------------------------------------


def _cmd_estimate_chi(args):
    cfg = _load_config(args)
    d = int(_positive(cfg, "d", 2, int))
    n = int(_positive(cfg, "n", 1_000_000, int))
    seed = int(_get(cfg, "seed", 0))
    if args.dry_run:
        print(f"estimate-chi: d={d} n={n} (one stream, chunked 1e6)")
        return 0
    rng = stream(seed)
    est, se = estimate_chi(d, n, rng)
    rows = [{"d": d, "estimate": est, "std_err": se, "n_samples": n}]
    out = _get(cfg, "out", "chi.csv")
    _write_csv(out, rows, cfg)
    print(f"chi_{d} = {float(est)!r} +- {float(se)!r} (n={n}) -> {out}")
    return 0


def _cmd_sample_skeleton(args):
    cfg = _load_config(args)
    d = int(_positive(cfg, "d", 1, int))
    k = int(_positive(cfg, "k", 2, int))
    n_paths = int(_positive(cfg, "n-paths", 100, int))
    seed = int(_get(cfg, "seed", 0))
    horizon = _positive(cfg, "T", 1.0)
    chi = cfg.get("chi")
    chi = float(chi) if chi is not None else chi_fixture(d).estimate
    config = SkeletonConfig(d, 2.0 ** -k, horizon, chi, seed)
    n_steps = int(_get(cfg, "n-steps", config.n_periods))
    if args.dry_run:
        print(
            f"sample-skeleton: d={d} k={k} e(k,T)={config.n_periods} "
            f"n_steps={n_steps} n_paths={n_paths} "
            f"(~{n_paths * n_steps * 2 * d} uniforms)"
        )
        return 0
    delta, incr = simulate_skeleton_batch(config, n_steps, n_paths)
    out = _get(cfg, "out", "skeleton.bin")
    write_skeleton_dump(out, config.epsilon_k, delta, incr)
    with open(out + ".meta.json", "w") as fh:
        json.dump(_meta(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {n_paths} paths x {n_steps} steps (d={d}) -> {out}")
    return 0


_PAYOFFS = {
    "terminal": lambda p: lambda t, v: v[:, -1, 0],
    "terminal-quad": lambda p: lambda t, v: (
        float(p.get("c1", 1.0)) * v[:, -1, 0]
        - float(p.get("c2", 0.0)) * v[:, -1, 0] ** 2
    ),
    "mid-terminal-quad": lambda p: lambda t, v: (
        float(p.get("w_mid", 0.0)) * v[:, int(p.get("mid", 1)), 0]
        + float(p.get("w_end", 1.0)) * v[:, -1, 0]
        - float(p.get("quad", 0.0)) * v[:, -1, 0] ** 2
    ),
}


def _cmd_solve(args):
    cfg = _load_config(args)
    seed = int(_get(cfg, "seed", 0))
    d = int(_positive(cfg, "d", 1, int))
    k = int(_positive(cfg, "k", 2, int))
    horizon = _positive(cfg, "T", 1.0)
    chi = cfg.get("chi")
    chi = float(chi) if chi is not None else chi_fixture(d).estimate

    model = dict(cfg.get("model", {}))
    if "model-name" in cfg:
        model["name"] = cfg["model-name"]
    if "model-json" in cfg:
        model.update(json.loads(cfg["model-json"]))
    payoff_cfg = dict(cfg.get("payoff", {}))
    if "payoff-name" in cfg:
        payoff_cfg["name"] = cfg["payoff-name"]
    if "payoff-json" in cfg:
        payoff_cfg.update(json.loads(cfg["payoff-json"]))
    model_name = model.pop("name", "euler")
    payoff_name = payoff_cfg.pop("name", "terminal")
    if payoff_name not in _PAYOFFS:
        raise SystemExit(
            f"error: unknown payoff '{payoff_name}'; available {sorted(_PAYOFFS)}"
        )

    asp_cfg = dict(cfg.get("action-space", {}))
    action_space = structures.ActionSpace(
        r=int(cfg.get("r", asp_cfg.get("r", 1))),
        a_bar=float(cfg.get("a-bar", asp_cfg.get("a_bar", 1.0))),
        grid_points_per_axis=int(cfg.get("grid", asp_cfg.get("grid_points_per_axis", 2))),
    )
    reg_cfg = dict(cfg.get("regression", {}))
    regression = dp.RegressionSpec(
        feature_map=str(cfg.get("features", reg_cfg.get("features", "quad-state-time"))),
        ridge_lambda=float(cfg.get("ridge", reg_cfg.get("ridge", 0.0))),
        n_paths=int(cfg.get("n-paths", reg_cfg.get("n_paths", 10_000))),
    )
    epsilon = float(_get(cfg, "epsilon", 0.0))
    n_eval = int(_get(cfg, "n-eval", regression.n_paths))

    config = SkeletonConfig(d, 2.0 ** -k, horizon, chi, seed)
    if args.dry_run:
        grid = action_space.grid()
        print(
            f"solve: model={model_name} payoff={payoff_name} d={d} k={k} "
            f"e(k,T)={config.n_periods} grid={grid.shape[0]} actions "
            f"n_paths={regression.n_paths} n_eval={n_eval} "
            f"(~{regression.n_paths * config.n_periods} regression rows, "
            f"eta={epsilon}/{config.n_periods})"
        )
        return 0

    structure = structures.build_structure(model_name, model)
    payoff = _PAYOFFS[payoff_name](payoff_cfg)
    v0, _, vf = dp.backward_solve(
        structure, payoff, action_space, regression, config, seed=seed
    )
    policy = dp.extract_epsilon_policy(vf, epsilon)
    est = dp.evaluate_policy(policy, structure, payoff, n_eval, config, seed=seed + 1)
    rows = [
        {
            "model": model_name,
            "payoff": payoff_name,
            "k": k,
            "d": d,
            "n_steps": config.n_periods,
            "v0_in_sample": v0.mean,
            "v0_std_err": v0.std_err,
            "policy_value": est.mean,
            "policy_std_err": est.std_err,
            "epsilon": epsilon,
            "eta": policy.eta,
            "n_paths": regression.n_paths,
            "n_eval": n_eval,
        }
    ]
    out = _get(cfg, "out", "solve.csv")
    _write_csv(out, rows, cfg)
    if cfg.get("policy-out"):
        dp.save_policy(cfg["policy-out"], policy)
    if cfg.get("vf-out"):
        dp.export_value_functions_csv(cfg["vf-out"], vf)
    print(
        f"V0={v0.mean!r} (+-{v0.std_err!r} in-sample), "
        f"policy value={est.mean!r} +- {est.std_err!r} -> {out}"
    )
    return 0


def _cmd_hedge(args):
    cfg = _load_config(args)
    seed = int(_get(cfg, "seed", 0))
    ks = _get(cfg, "ks", None)
    if ks is None:
        ks = [int(_positive(cfg, "k", 1, int))]
    elif isinstance(ks, str):
        ks = [int(x) for x in ks.split(",") if x]
    n_mc = int(_positive(cfg, "n-mc", 30_000, int))
    spec = hedging.HedgeSpec(
        s1_0=_positive(cfg, "s1", 49.0),
        s2_0=_positive(cfg, "s2", 52.0),
        sigma1=float(_get(cfg, "sigma1", 0.2)),
        sigma2=float(_get(cfg, "sigma2", 0.3)),
        horizon=_positive(cfg, "T", 1.0),
        k=ks[0],
        n_mc=n_mc,
    )
    if args.dry_run:
        for k in ks:
            sp = hedging.HedgeSpec(
                spec.s1_0, spec.s2_0, spec.sigma1, spec.sigma2, spec.horizon, k, n_mc
            )
            print(
                f"hedge: k={k} e(k,T)={sp.n_steps} n_mc={n_mc} "
                f"(train+eval = {2 * n_mc} paths, "
                f"{2 * n_mc * sp.n_steps} steps/asset)"
            )
        return 0
    rows = hedging.benchmark_rows(ks, seed, n_mc=n_mc, spec=spec)
    out = _get(cfg, "out", "hedge.csv")
    _write_csv(out, rows, cfg)
    for r in rows:
        print(
            f"k={r['k']}: c={float(r['result'])!r} +- {float(r['std_err'])!r} "
            f"mse={float(r['mse'])!r} |c - margrabe|={float(r['difference'])!r}"
        )
    print(f"-> {out}")
    return 0


def _cmd_rates(args):
    cfg = _load_config(args)
    seed = int(_get(cfg, "seed", 0))
    kind = str(_get(cfg, "kind", "mesh"))
    ks = _get(cfg, "ks", "2,3,4,5")
    if isinstance(ks, str):
        ks = [int(x) for x in ks.split(",") if x]
    n_paths = int(_positive(cfg, "n-paths", 2000, int))
    d = int(_positive(cfg, "d", 1, int))
    horizon = _positive(cfg, "T", 1.0)
    if args.dry_run:
        print(f"rates: kind={kind} ks={ks} d={d} n_paths={n_paths}")
        return 0
    out = _get(cfg, "out", f"rates-{kind}.csv")
    if kind == "mesh":
        p = float(_get(cfg, "p", 1.0))
        slope, gaps = gap_decay_slope(d, horizon, p, ks, n_paths, seed)
        rows = [
            {"k": k, "epsilon": 2.0 ** -k, "mean_gap_p": g, "slope": slope}
            for k, g in zip(ks, gaps)
        ]
    elif kind == "euler":
        sigma = float(_get(cfg, "sigma", 0.2))
        slope, errs = structures.gbm_strong_error_slope(
            ks, n_paths, sigma=sigma, horizon=horizon, seed=seed
        )
        rows = [
            {"k": k, "epsilon": 2.0 ** -k, "sup_error": e, "slope": slope}
            for k, e in zip(ks, errs)
        ]
    elif kind == "fbm":
        H = float(_get(cfg, "H", 0.3))
        t_eval = _get(cfg, "t-eval", "0.3,0.5,0.7")
        if isinstance(t_eval, str):
            t_eval = [float(x) for x in t_eval.split(",") if x]
        k = ks[-1]
        samples = structures.fbm_fidelity_samples(H, k, t_eval, n_paths, seed)
        rows = []
        for j, t in enumerate(t_eval):
            rows.append(
                {
                    "k": k,
                    "H": H,
                    "t": t,
                    "var": float(samples[:, j].var()),
                    "target_var": t ** (2 * H),
                }
            )
    else:
        raise SystemExit(f"error: unknown rates kind '{kind}'")
    _write_csv(out, rows, cfg)
    for row in rows:
        print(",".join(f"{k}={_fmt(v)}" for k, v in row.items()))
    print(f"-> {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skeldp",
        description="stochastic control on the Brownian hitting-time skeleton",
    )
    parser.add_argument("--version", action="version", version=f"skeldp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="base seed (default 0)")
        p.add_argument("--out", help="output CSV/binary path")
        p.add_argument("--dry-run", action="store_true",
                       help="validate config, print derived sizes, do not simulate")
        p.add_argument("--workers", type=int, default=1,
                       help="worker count; results are worker-count independent "
                            "(counter-based per-path streams)")

    p = sub.add_parser("estimate-chi", help="Monte Carlo calibration of chi_d")
    common(p)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int, help="sample count (>= 1e4)")
    p.set_defaults(func=_cmd_estimate_chi)

    p = sub.add_parser("sample-skeleton", help="simulate and dump skeleton batches")
    common(p)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--chi", type=float)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--n-paths", type=int)
    p.set_defaults(func=_cmd_sample_skeleton)

    p = sub.add_parser("solve", help="generic dynamic-programming solve")
    common(p)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--chi", type=float, help="override the chi_d fixture")
    p.add_argument("--model-name")
    p.add_argument("--model-json", help="JSON dict of model parameters")
    p.add_argument("--payoff-name")
    p.add_argument("--payoff-json", help="JSON dict of payoff parameters")
    p.add_argument("--r", type=int)
    p.add_argument("--a-bar", type=float)
    p.add_argument("--grid", type=int, help="grid points per action axis")
    p.add_argument("--features")
    p.add_argument("--ridge", type=float)
    p.add_argument("--n-paths", type=int)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--epsilon", type=float, help="policy suboptimality budget")
    p.add_argument("--policy-out", help="write the extracted policy here")
    p.add_argument("--vf-out", help="write value-function coefficients CSV here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("hedge", help="exchange-option hedging benchmark")
    common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--ks", help="comma-separated k list, e.g. 1,2,3")
    p.add_argument("--n-mc", type=int)
    p.add_argument("--s1", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--T", type=float)
    p.set_defaults(func=_cmd_hedge)

    p = sub.add_parser("rates", help="decay-rate experiments")
    common(p)
    p.add_argument("--kind", choices=("mesh", "euler", "fbm"))
    p.add_argument("--ks", help="comma-separated k list")
    p.add_argument("--d", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--p", type=float, help="moment order for mesh gaps")
    p.add_argument("--sigma", type=float, help="volatility for the Euler run")
    p.add_argument("--H", type=float, help="Hurst index for the fbm run")
    p.add_argument("--t-eval", help="comma-separated evaluation times")
    p.add_argument("--n-paths", type=int)
    p.set_defaults(func=_cmd_rates)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ValueError, KeyError, FloatingPointError, OSError) as exc:
        print(f"error: {exc} (seed={getattr(args, 'seed', None)})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
