"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--slots N] [--users N]

Times the slot-simulation loop and one Bellman sweep on each available
backend, checks that the backends agree, and prints a small table.
"""
import argparse
import time

import numpy as np

from artifact import kernels
from artifact.config import SystemConfig
from artifact.simulator import simulate
from artifact.solver import build_mdp, solve


def _best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--slots", type=int, default=20_000)
    ap.add_argument("--users", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = SystemConfig(n_users=args.users)
    mdp = build_mdp(cfg)
    sol = solve(cfg, mdp=mdp)
    t = mdp.transitions
    sweep_args = (np.ascontiguousarray(mdp.utilities), t.indptr.astype(np.int32),
                  t.indices.astype(np.int32), np.ascontiguousarray(t.data),
                  np.ascontiguousarray(sol.value_function.values), cfg.discount)

    backends = kernels.available_backends()
    results = {}
    print(f"{'backend':<8} {'kernel':<16} {'time (s)':>10} {'per unit':>14}")
    for name, impl in backends.items():
        # the Python loop is slow, so it gets fewer slots
        n = args.slots if name != "python" else max(1, args.slots // 20)
        dt, (_, tr) = _best_of(lambda: simulate("dp", cfg, sol.value_function, n_slots=n, mdp=mdp,
                                                trace=True, backend=impl), args.repeat)
        print(f"{name:<8} {'simulate_chunk':<16} {dt:>10.4f} {1e6 * dt / n:>11.2f} us/slot")
        ds, out = _best_of(lambda: impl.bellman_sweep(*sweep_args), args.repeat)
        print(f"{name:<8} {'bellman_sweep':<16} {ds:>10.4f} {1e3 * ds:>11.2f} ms/sweep")
        results[name] = (dt / n, tr, out)

    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        n = py[1].end_energy.size
        same_sim = np.array_equal(py[1].end_energy, cy[1].end_energy[:n])
        same_sweep = np.array_equal(py[2][1], cy[2][1]) and np.allclose(py[2][0], cy[2][0], rtol=1e-14)
        print(f"\nspeedup (simulate): {py[0] / cy[0]:.0f}x")
        print(f"trajectories identical: {same_sim}; sweeps agree: {same_sweep}")


if __name__ == "__main__":
    main()
