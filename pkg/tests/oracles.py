"""Independent reference implementations used only by the tests.

Everything here is deliberately naive: plain Python floats, explicit loops,
no caching and no numpy kernels.
"""

from __future__ import annotations

import math
import random

from stlu.logic import INF, Always, And, Atom, Eventually, Interval, Not, Or, Until
from stlu.signal import Flowpipe


def lookahead(phi) -> int:
    """Steps past t that evaluating ``phi`` touches, unbounded intervals cut at lo."""
    if isinstance(phi, Atom):
        return 0
    if isinstance(phi, Not):
        return lookahead(phi.arg)
    if isinstance(phi, (And, Or)):
        return max(lookahead(phi.left), lookahead(phi.right))
    iv = phi.interval
    reach = iv.hi if iv.hi != INF else iv.lo
    if isinstance(phi, Until):
        return reach + max(lookahead(phi.left), lookahead(phi.right))
    return reach + lookahead(phi.arg)


def _window(iv, t, n, inner):
    last = t + iv.hi if iv.hi != INF else n - 1 - inner
    return list(range(t + iv.lo, last + 1))


# --- classic single-trace robustness ----------------------------------------

def stl_robustness(phi, signals: dict, t: int) -> float:
    """Textbook recursive robustness of one trace per channel."""
    n = min(len(v) for v in signals.values())
    if isinstance(phi, Atom):
        return phi.a * signals[phi.channel][t] + phi.b
    if isinstance(phi, Not):
        return -stl_robustness(phi.arg, signals, t)
    if isinstance(phi, And):
        return min(stl_robustness(phi.left, signals, t), stl_robustness(phi.right, signals, t))
    if isinstance(phi, Or):
        return max(stl_robustness(phi.left, signals, t), stl_robustness(phi.right, signals, t))
    if isinstance(phi, Always):
        return min(stl_robustness(phi.arg, signals, u) for u in _window(phi.interval, t, n, lookahead(phi.arg)))
    if isinstance(phi, Eventually):
        return max(stl_robustness(phi.arg, signals, u) for u in _window(phi.interval, t, n, lookahead(phi.arg)))
    inner = max(lookahead(phi.left), lookahead(phi.right))
    best = -math.inf
    for u in _window(phi.interval, t, n, inner):
        left = min(stl_robustness(phi.left, signals, v) for v in range(t, u + 1))
        best = max(best, min(stl_robustness(phi.right, signals, u), left))
    return best


# --- interval monitor with the nested-loop Until -----------------------------

def interval_robustness(phi, pipes: dict, t: int) -> tuple[float, float]:
    """Interval robustness, Until evaluated by re-scanning [t, t'] for every t'.

    ``pipes`` maps channel -> (lower list, upper list).
    """
    n = min(len(lo) for lo, _ in pipes.values())
    if isinstance(phi, Atom):
        lo, hi = pipes[phi.channel]
        a, b = phi.a * lo[t] + phi.b, phi.a * hi[t] + phi.b
        return min(a, b), max(a, b)
    if isinstance(phi, Not):
        lo, hi = interval_robustness(phi.arg, pipes, t)
        return -hi, -lo
    if isinstance(phi, And):
        l1, h1 = interval_robustness(phi.left, pipes, t)
        l2, h2 = interval_robustness(phi.right, pipes, t)
        return min(l1, l2), min(h1, h2)
    if isinstance(phi, Or):
        return interval_robustness(Not(And(Not(phi.left), Not(phi.right))), pipes, t)
    if isinstance(phi, (Always, Eventually)):
        fold = min if isinstance(phi, Always) else max
        vals = [interval_robustness(phi.arg, pipes, u) for u in _window(phi.interval, t, n, lookahead(phi.arg))]
        return fold(v[0] for v in vals), fold(v[1] for v in vals)
    inner = max(lookahead(phi.left), lookahead(phi.right))
    rho = (-math.inf, -math.inf)
    for u in _window(phi.interval, t, n, inner):
        r2 = interval_robustness(phi.right, pipes, u)
        acc = r2
        for v in range(t, u + 1):
            r1 = interval_robustness(phi.left, pipes, v)
            acc = (min(acc[0], r1[0]), min(acc[1], r1[1]))
        rho = (max(rho[0], acc[0]), max(rho[1], acc[1]))
    return rho


# --- normal quantile ---------------------------------------------------------

def normal_quantile(p: float) -> float:
    """Bisection on the erf-based CDF; slow but independent of any rational fit."""
    if p > 0.5:
        # the upper tail bisects its complement, which 1 - p represents exactly
        return -normal_quantile(1.0 - p)
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2.0)) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- random generators -------------------------------------------------------

def random_interval(rng: random.Random, max_hi: int = 4, unbounded: bool = True) -> Interval:
    lo = rng.randint(0, 2)
    if unbounded and rng.random() < 0.15:
        return Interval(lo, INF)
    return Interval(lo, lo + rng.randint(0, max_hi))


def random_atom(rng: random.Random, channels=("x",), epsilon=0.9, increasing_only=False) -> Atom:
    a = rng.choice([0.5, 1.0, 2.0] if increasing_only else [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    return Atom(rng.choice(channels), a, rng.uniform(-5.0, 5.0), epsilon)


def random_formula(
    rng: random.Random,
    depth: int,
    channels=("x",),
    negation=True,
    increasing_only=False,
    max_hi: int = 4,
):
    """Random formula with every operator reachable; ``depth`` counts operator levels."""
    if depth <= 0 or rng.random() < 0.2:
        return random_atom(rng, channels, increasing_only=increasing_only)
    ops = ["and", "or", "always", "eventually", "until"] + (["not"] if negation else [])
    op = rng.choice(ops)
    sub = lambda: random_formula(rng, depth - 1, channels, negation, increasing_only, max_hi)
    if op == "not":
        return Not(sub())
    if op == "and":
        return And(sub(), sub())
    if op == "or":
        return Or(sub(), sub())
    iv = random_interval(rng, max_hi)
    if op == "always":
        return Always(iv, sub())
    if op == "eventually":
        return Eventually(iv, sub())
    return Until(iv, sub(), sub())


def random_flowpipe(rng: random.Random, n: int, channel="x", epsilon=0.9, scale=5.0) -> Flowpipe:
    mid = [rng.gauss(0.0, scale) for _ in range(n)]
    half = [rng.uniform(0.0, scale) for _ in range(n)]
    return Flowpipe([m - h for m, h in zip(mid, half)], [m + h for m, h in zip(mid, half)], epsilon, channel)
