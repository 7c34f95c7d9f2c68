"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--horizon S]

Times three workloads with each backend: a single BVP solve on the reference
feeder (shooting hot loop), a one-minute frequency/droop run (engine tick
loop without voltage evaluation) and a short closed-loop scenario run.
"""

import argparse
import time
from dataclasses import replace

from v2gcosim import _pykernels, kernels
from v2gcosim.engine import run
from v2gcosim.grid import load_injections
from v2gcosim.scenario import load_scenario
from v2gcosim.voltage import solve_bvp

NAMES = ("shoot", "shoot_profile", "rk4_freq", "droop", "advance")


def use(mod):
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--horizon", type=float, default=60.0, help="closed-loop run length [s]")
    args = ap.parse_args()

    try:
        from v2gcosim import _ckernels
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")

    sc = load_scenario("paper_sec5.scn")
    inj = load_injections(sc.loads, sc.base)
    ticks_only = replace(sc, horizon=60.0, bound_update_period=60.0, voltage_eval_period=60.0)
    closed = replace(sc, horizon=args.horizon, bound_update_period=args.horizon)
    work = {
        "bvp solve (4.63 km, 1 m step)": lambda: solve_bvp(sc.feeder, inj),
        "tick loop (6000 ticks, 8 stations)": lambda: run(ticks_only),
        f"closed loop ({args.horizon:g} s, 1 s voltage)": lambda: run(closed),
    }
    print(f"{'workload':40s} {'cython':>10s} {'python':>10s} {'speedup':>8s}")
    for name, fn in work.items():
        use(_ckernels)
        fast = best_of(fn, args.repeat)
        use(_pykernels)
        slow = best_of(fn, args.repeat)
        print(f"{name:40s} {fast * 1e3:8.2f}ms {slow * 1e3:8.1f}ms {slow / fast:7.1f}x")
    use(_ckernels)


if __name__ == "__main__":
    main()
