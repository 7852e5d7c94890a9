"""Wall-time scaling of interval robustness for G[0,H] and U[0,H] over a single atom.

Prints best-of-``repeat`` seconds per horizon and the ratio to the previous row.
"""
import argparse
import time

import numpy as np

from stlu import Always, Atom, Flowpipe, Interval, SignalEnv, Until, robustness

FORMULAS = {
    "G": lambda h: Always(Interval(0, h), Atom("x", 1.0, 0.0, 0.95)),
    "U": lambda h: Until(Interval(0, h), Atom("x", 1.0, 5.0, 0.95), Atom("x", 1.0, -5.0, 0.95)),
}


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizons", default="1000,10000,100000,1000000")
    ap.add_argument("--repeat", type=int, default=9)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print("formula,horizon,seconds,ratio")
    for name, make in FORMULAS.items():
        prev = None
        for h in map(int, args.horizons.split(",")):
            mid = rng.normal(0, 10, h + 1)
            half = rng.uniform(0, 5, h + 1)
            env = SignalEnv([Flowpipe(mid - half, mid + half, 0.95, "x")])
            phi = make(h)
            secs = best_time(lambda: robustness(phi, env), args.repeat)
            ratio = f"{secs / prev:.1f}" if prev else ""
            print(f"{name},{h},{secs:.6g},{ratio}")
            prev = secs


if __name__ == "__main__":
    main()
