"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--steps N] [--paths P]``.
Each kernel is timed on the oscillator model; results must match, and the
Euler-Maruyama paths must match bit for bit.
"""
import argparse
import timeit

import numpy as np

from covbridge import SimConfig, TimeGrid, _kernels_py, ou_example, solve_pipeline

try:
    from covbridge import _kernels
except ImportError:
    _kernels = None


def cases(steps, paths):
    pl = solve_pipeline(ou_example(), TimeGrid(1.0, steps))
    n = pl.spec.n
    hf = pl.sched.grid.h / 2.0
    tq = pl.sched.grid.refined(4)
    Aq = pl.spec.A.at(tq)
    Bq = pl.spec.B.at(tq)
    BBq = np.einsum("kij,klj->kil", Bq, Bq)
    tn = pl.sched.grid.nodes
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(paths, n)) * np.sqrt(0.5)
    dW = rng.normal(size=(paths, steps, pl.spec.m)) * np.sqrt(pl.sched.grid.h)
    store = np.arange(0, steps + 1, 10)
    return {
        "linear_rk4": lambda k: k.linear_rk4(Aq, np.eye(n), hf),
        "lyap_rk4": lambda k: k.lyap_rk4(Aq, BBq, np.eye(n), hf),
        "gram_backward": lambda k: k.gram_backward(Aq, BBq, hf),
        "em_paths": lambda k: k.em_paths(pl.spec.A.at(tn), pl.spec.B.at(tn), pl.sched.K,
                                         x0, dW, pl.sched.grid.h, store),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    print(f"steps={args.steps} paths={args.paths} (best of {args.repeat})")
    print(f"{'kernel':<14} {'cython [s]':>11} {'python [s]':>11} {'speedup':>8}  match")
    for name, run in cases(args.steps, args.paths).items():
        a, b = run(_kernels), run(_kernels_py)
        if name == "em_paths":
            same = all(np.array_equal(x, y) for x, y in zip(a, b))
        else:
            a, b = np.asarray(a), np.asarray(b)
            same = np.allclose(a, b, rtol=1e-12, atol=1e-14)
        tc = best_of(lambda: run(_kernels), args.repeat)
        tp = best_of(lambda: run(_kernels_py), args.repeat)
        print(f"{name:<14} {tc:>11.4f} {tp:>11.4f} {tp / tc:>7.1f}x  {'yes' if same else 'NO'}")

    # end to end: Monte Carlo including random number generation
    pl = solve_pipeline(ou_example(), TimeGrid(1.0, args.steps))
    cfg = SimConfig(n_paths=args.paths, seed=1, store_every=10)
    from covbridge import kernels, mc
    for label, impl in (("cython", _kernels), ("python", _kernels_py)):
        saved = kernels.em_paths
        kernels.em_paths = impl.em_paths
        try:
            t = best_of(lambda: mc.simulate_paths(pl.spec, pl.sched, cfg), args.repeat)
        finally:
            kernels.em_paths = saved
        print(f"simulate_paths ({label}): {t:.3f} s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
