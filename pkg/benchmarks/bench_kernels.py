#!/usr/bin/env python3
"""Benchmark the hot kernels under both backends.

Runs each kernel with the numba path and the pure-NumPy fallback in
subprocesses (the backend is chosen at import time from SKELDP_NO_NUMBA) and
prints a timing table plus the max numeric deviation between the two paths.

    python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import time

_WORKER = """
import json, os, sys, time
import numpy as np
from skeldp import _kernels
from skeldp._backend import backend_name
from skeldp.skeleton import SkeletonConfig, simulate_skeleton_batch
from skeldp import fbm

quick = bool(int(sys.argv[1]))
scale = 0.1 if quick else 1.0
out = {"backend": backend_name()}

rng = np.random.default_rng(7)

n = int(2_000_000 * scale)
u = rng.random(n)
_kernels.exit_quantile(u[:64])  # warm up / jit
t0 = time.perf_counter()
q = _kernels.exit_quantile(u)
out["exit_quantile"] = {"n": n, "sec": time.perf_counter() - t0,
                        "checksum": float(q.sum())}

n_paths, m = int(20_000 * scale), 64
U = rng.random((n_paths, m, 4))
_kernels.skeleton_batch(U[:8], 0.125)
t0 = time.perf_counter()
delta, incr = _kernels.skeleton_batch(U, 0.125)
out["skeleton_d2"] = {"steps": n_paths * m, "sec": time.perf_counter() - t0,
                      "checksum": float(delta.sum() + incr.sum())}

cfg = SkeletonConfig(1, 2.0 ** -4, 1.0, 1.0, 3)
n_fbm = int(200 * scale) or 20
delta, incr = simulate_skeleton_batch(cfg, 256, n_fbm)
t0 = time.perf_counter()
acc = 0.0
for i in range(n_fbm):
    times = np.concatenate([[0.0], np.cumsum(delta[i])])
    A = np.concatenate([[0.0], np.cumsum(incr[i, :, 0])])
    acc += fbm.discrete_fbm_at_index(times, A, 256, 0.3)
out["fbm_eval"] = {"paths": n_fbm, "sec": time.perf_counter() - t0,
                   "checksum": float(acc)}

print(json.dumps(out))
"""


def run_backend(disable_numba, quick):
    env = dict(os.environ)
    if disable_numba:
        env["SKELDP_NO_NUMBA"] = "1"
    else:
        env.pop("SKELDP_NO_NUMBA", None)
    res = subprocess.run(
        [sys.executable, "-c", _WORKER, str(int(quick))],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="10x smaller sizes")
    args = ap.parse_args()

    t0 = time.perf_counter()
    numba = run_backend(False, args.quick)
    numpy_ = run_backend(True, args.quick)
    assert numba["backend"] == "numba", "numba backend unavailable"
    assert numpy_["backend"] == "numpy"

    print(f"{'kernel':<16}{'size':>12}{'numba':>12}{'numpy':>12}{'speedup':>10}"
          f"{'|delta|':>12}")
    for key, size_field in (
        ("exit_quantile", "n"),
        ("skeleton_d2", "steps"),
        ("fbm_eval", "paths"),
    ):
        a, b = numba[key], numpy_[key]
        dev = abs(a["checksum"] - b["checksum"]) / max(abs(b["checksum"]), 1.0)
        print(
            f"{key:<16}{a[size_field]:>12}{a['sec']:>12.3f}{b['sec']:>12.3f}"
            f"{b['sec'] / a['sec']:>9.1f}x{dev:>12.2e}"
        )
    print(f"total wall time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
