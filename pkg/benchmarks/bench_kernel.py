"""Time the compiled and numpy integration kernels on the Example 5.1 graph.

    python3 benchmarks/bench_kernel.py --paths 200 --t-end 20

Reports nanoseconds per path-step and checks that both backends produce the
same terminal states up to rounding.
"""

import argparse
import time

import numpy as np

from stoch_consensus.dynamics import BACKEND, SimulationParams, simulate_ensemble
from stoch_consensus.graph import Digraph, NoiseProfile


def timed(graph, noise, params, backend, repeats):
    best, states = float("inf"), None
    for _ in range(repeats):
        start = time.perf_counter()
        states = simulate_ensemble(graph, noise, params, workers=1, backend=backend).states
        best = min(best, time.perf_counter() - start)
    return best, states


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--t-end", type=float, default=20.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    g = Digraph.from_edges(4, [(3, 1), (1, 2), (1, 3), (2, 3), (3, 4)])
    noise = NoiseProfile.uniform([g], 1.0)
    params = SimulationParams(args.dt, args.t_end, args.paths, 42, 0.05, np.array([1.0, 20, 50, -5]),
                              record_every=max(1, round(1.0 / args.dt)))
    work = args.paths * params.n_steps

    backends = ["python"] + (["compiled"] if BACKEND == "compiled" else [])
    results = {}
    for name in backends:
        secs, states = timed(g, noise, params, name, args.repeats)
        results[name] = (secs, states)
        print(f"{name:>9}: {secs:8.3f} s  {1e9 * secs / work:8.1f} ns/path-step")

    if len(results) == 2:
        (t_py, s_py), (t_c, s_c) = results["python"], results["compiled"]
        diff = np.max(np.abs(s_py - s_c) / np.maximum(1.0, np.abs(s_py)))
        print(f"  speedup: {t_py / t_c:.1f}x   max relative difference: {diff:.1e}")
    else:
        print("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
