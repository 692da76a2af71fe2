"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The first numba call (compilation) is excluded from the timings.
"""

import argparse
import json
import time

import numpy as np

from tlbo import kernels
from tlbo._accel import HAVE_NUMBA
from tlbo.benchmarks import CartpoleParams, CartpoleSettings, lqr_gain


def _cases(rng):
    n, m = 200, 300
    xn1, xn2 = rng.random((n, 3)), rng.random((m, 3))
    xc1 = rng.integers(0, 3, (n, 2)).astype(float)
    xc2 = rng.integers(0, 3, (m, 2)).astype(float)
    inv_ls, inv_hls = np.array([2.0, 1.0, 0.5]), np.array([1.0, 0.3])

    preds, y = rng.normal(size=(40, 9)), rng.normal(size=40)
    idx = rng.integers(0, 40, size=(1000, 40))

    a = rng.normal(size=(50, 9))
    ya = a @ rng.random(9) + 0.1 * rng.normal(size=50)
    bidx = rng.integers(0, 50, size=(200, 50))

    p = CartpoleParams(0.3, 0.1, 0.5, 5e-4, 5e-3)
    gain, _ = lqr_gain(p, (0.0, 3.0))
    x0 = np.array([0.0, 0.1, 0.0, 0.0])
    st = CartpoleSettings()

    return {
        "cross_cov 200x300": lambda mod: getattr(kernels, f"cross_cov_{mod}")(
            xn1, xc1, xn2, xc2, inv_ls, inv_hls, 1.5),
        "ranking_losses 1000 boot": lambda mod: getattr(kernels, f"ranking_losses_{mod}")(preds, y, idx),
        "cd_solve lasso 50x9": lambda mod: getattr(kernels, f"cd_solve_{mod}")(a, ya, 0.01, True, True, 1000, 1e-9),
        "bootstrap_cd 200 boot": lambda mod: getattr(kernels, f"bootstrap_cd_{mod}")(
            a, ya, bidx, 0.01, True, False, 1000, 1e-9),
        "cartpole_rollout 1000 steps": lambda mod: getattr(kernels, f"cartpole_rollout_{mod}")(
            p.as_array(), gain, x0, st.dt, st.n_steps, st.blowup),
        "gower_matrix 200x300": lambda mod: getattr(kernels, f"gower_matrix_{mod}")(xn1, xc1, xn2, xc2),
    }


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return 1

    results = []
    print(f"{'kernel':32s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speedup':>9s}")
    for name, call in _cases(np.random.default_rng(0)).items():
        call("nb")  # compile
        t_np = _best_of(lambda: call("np"), args.repeat)
        t_nb = _best_of(lambda: call("nb"), args.repeat)
        results.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb})
        print(f"{name:32s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
