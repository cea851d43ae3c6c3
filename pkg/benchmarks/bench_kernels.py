"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--switches 200] [--batch 100]
"""

import argparse
import time

import numpy as np

from switchcert import _kernels
from switchcert.config import bundled_config
from switchcert.signals import _columns, _cumulative, generate


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--horizon", type=float, default=300.0, help="signal horizon for the window kernels")
    ap.add_argument("--batch", type=int, default=100, help="trajectories per RK4 call")
    ap.add_argument("--steps", type=int, default=2500)
    args = ap.parse_args()

    cfg = bundled_config("sec4")
    model, budget = cfg.build_model(), cfg.build_budget()
    sig = generate(model, budget, args.horizon, 0, cfg.build_policy())
    cols = _columns(model, budget)
    C = _cumulative(cols, sig.indices)
    n = C.shape[0] - 1

    fam = cfg.build_family()
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-5, 5, (args.batch, 2))
    modes = rng.integers(0, 4, args.steps)
    steps = np.full(args.steps, 0.01)
    v = rng.uniform(-0.5, 0.5, (args.batch, args.steps))

    cases = {
        "window_violations": lambda f: f(C, cols.rho, cols.off, cols.kind),
        "last_window_violation": lambda f: [f(C[: b + 1], b, cols.rho, cols.off, cols.kind) for b in range(n + 1)],
        "rk4_sinus": lambda f: f(x0, fam.A, fam.B, fam.C, modes, steps, v),
    }
    print(f"backend in use: {_kernels.BACKEND}; signal with {n} switches; RK4 {args.batch} x {args.steps} steps")
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, call in cases.items():
        impls = _kernels.implementations(name)
        t = {k: best_of(lambda f=f: call(f), args.repeat) for k, f in impls.items()}
        nb = t.get("numba")
        row = f"{name:<24}{t['numpy'] * 1e3:>12.3f}"
        row += f"{nb * 1e3:>12.3f}{t['numpy'] / nb:>9.1f}x" if nb else f"{'n/a':>12}{'':>10}"
        print(row)


if __name__ == "__main__":
    main()
