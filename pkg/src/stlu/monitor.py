"""Quantitative and boolean STL-U monitoring over flowpipes.

The quantitative monitor works on whole arrays: each subformula is evaluated
once over the contiguous range of steps its parent needs, and cached for the
duration of a single call.  Interval bounds travel as two arrays (lower,
upper) with arbitrary leading batch dimensions, which lets many degenerate
flowpipes (single traces) be scored in one pass.

Unbounded intervals ``[lo, inf]`` are clipped so that the subformula under
the operator still has its own lookahead inside the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ContractError, HorizonError, SignalLookupError
from .logic import (
    INF,
    Always,
    And,
    Atom,
    Eventually,
    Formula,
    Not,
    Or,
    Until,
    desugar,
    signal_keys,
)
from .signal import Flowpipe, Trace, trace_as_flowpipe


@dataclass(frozen=True)
class RobustInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ContractError("robustness bounds must not be NaN")
        if self.lower > self.upper:
            raise ContractError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __iter__(self):
        yield self.lower
        yield self.upper


@dataclass(frozen=True)
class Verdict:
    strong: bool
    weak: bool


def neg_star(v: RobustInterval) -> RobustInterval:
    return RobustInterval(-v.upper, -v.lower)


def min_star(*vs: RobustInterval) -> RobustInterval:
    if not vs:
        raise ContractError("min_star needs at least one interval")
    return RobustInterval(min(v.lower for v in vs), min(v.upper for v in vs))


def max_star(*vs: RobustInterval) -> RobustInterval:
    if not vs:
        raise ContractError("max_star needs at least one interval")
    return RobustInterval(max(v.lower for v in vs), max(v.upper for v in vs))


def verdict_from_robustness(rho: RobustInterval) -> Verdict:
    """Read strong/weak satisfaction off the interval signs."""
    return Verdict(rho.lower > 0, rho.upper > 0)


def _key(channel: str, epsilon: float) -> tuple[str, float]:
    return channel, round(float(epsilon), 12)


class SignalEnv:
    """Flowpipes indexed by (channel, epsilon).

    A degenerate flowpipe (epsilon 1.0, built from a single trace) answers
    lookups for its channel at every confidence level.
    """

    def __init__(self, flowpipes: Iterable[Flowpipe] = ()):
        self._pipes: dict[tuple[str, float], Flowpipe] = {}
        for fp in flowpipes:
            self.add(fp)

    @classmethod
    def from_trace(cls, trace: Trace) -> SignalEnv:
        return cls([trace_as_flowpipe(trace)])

    def add(self, fp: Flowpipe) -> None:
        durations = {p.step_duration for p in self._pipes.values()}
        if durations and fp.step_duration not in durations:
            raise ContractError("all flowpipes in an environment must share step_duration")
        self._pipes[_key(fp.channel, fp.epsilon)] = fp

    def lookup(self, channel: str, epsilon: float) -> Flowpipe:
        fp = self._pipes.get(_key(channel, epsilon))
        if fp is None:
            fp = self._pipes.get(_key(channel, 1.0))
        if fp is None:
            raise SignalLookupError(f"no flowpipe for channel {channel!r} at confidence {epsilon}")
        return fp

    def missing(self, phi: Formula) -> list[tuple[str, float]]:
        out = []
        for channel, eps in sorted(signal_keys(phi)):
            try:
                self.lookup(channel, eps)
            except SignalLookupError:
                out.append((channel, eps))
        return out

    def __len__(self):
        return len(self._pipes)

    def __iter__(self):
        return iter(self._pipes.values())


# --- lookahead bookkeeping --------------------------------------------------

def _need(phi: Formula, memo: dict) -> int:
    """Finite lookahead after clipping unbounded intervals at their start."""
    hit = memo.get(id(phi))
    if hit is not None:
        return hit
    if isinstance(phi, Atom):
        out = 0
    elif isinstance(phi, Not):
        out = _need(phi.arg, memo)
    elif isinstance(phi, (And, Or)):
        out = max(_need(phi.left, memo), _need(phi.right, memo))
    else:
        iv = phi.interval
        reach = iv.hi if iv.bounded else iv.lo
        if isinstance(phi, Until):
            out = reach + max(_need(phi.left, memo), _need(phi.right, memo))
        else:
            out = reach + _need(phi.arg, memo)
    memo[id(phi)] = out
    return out


def effective_horizon(phi: Formula) -> int:
    """Minimum signal length minus one needed to evaluate ``phi`` at t = 0."""
    return _need(phi, {})


# --- array kernels ----------------------------------------------------------

def _sliding(x: np.ndarray, w: int, op) -> np.ndarray:
    """``op``-reduction over every length-``w`` window of the last axis.

    Van Herk / Gil-Werman block scheme: linear in the signal length regardless
    of ``w``.  Only selects existing values, so results are exact.
    """
    if w == 1:
        return x
    n = x.shape[-1]
    m = n - w + 1
    if m <= w:
        # every window shares x[m-1:w]; only the m-1 edge steps differ
        out = np.broadcast_to(op.reduce(x[..., m - 1 : w], axis=-1, keepdims=True), x.shape[:-1] + (m,)).copy()
        if m > 1:
            op(out[..., :-1], _suffix(x[..., : m - 1], op), out=out[..., :-1])
            op(out[..., 1:], op.accumulate(x[..., w:], axis=-1), out=out[..., 1:])
        return out
    pad = (-n) % w
    fill = np.inf if op is np.minimum else -np.inf
    if pad:
        x = np.concatenate([x, np.full(x.shape[:-1] + (pad,), fill)], axis=-1)
    blocks = x.reshape(x.shape[:-1] + (-1, w))
    prefix = op.accumulate(blocks, axis=-1).reshape(x.shape)
    suffix = op.accumulate(blocks[..., ::-1], axis=-1)[..., ::-1].reshape(x.shape)
    return op(suffix[..., :m], prefix[..., w - 1 : w - 1 + m])


def _suffix(x: np.ndarray, op) -> np.ndarray:
    return op.accumulate(x[..., ::-1], axis=-1)[..., ::-1]


def _tail_fold(x: np.ndarray, k: int, op) -> np.ndarray:
    """``op`` over ``x[i:]`` for the first ``k`` start positions."""
    fill = np.inf if op is np.minimum else -np.inf
    tail = op.reduce(x[..., k:], axis=-1, keepdims=True, initial=fill)
    return op(_suffix(x[..., :k], op), tail)


class _Evaluator:
    def __init__(self, bounds: Mapping, n: int):
        # bounds: (channel, eps) -> (lower, upper) arrays, last axis = time
        self.bounds = bounds
        self.n = n
        self.need: dict = {}
        self.cache: dict = {}

    def lookup(self, atom: Atom):
        got = self.bounds.get(_key(atom.channel, atom.epsilon))
        if got is None:
            got = self.bounds.get(_key(atom.channel, 1.0))
        if got is None:
            raise SignalLookupError(f"no flowpipe for channel {atom.channel!r} at confidence {atom.epsilon}")
        return got

    def eval(self, phi: Formula, t0: int, t1: int):
        hit = self.cache.get(id(phi))
        c0, c1 = t0, t1
        if hit is not None:
            c0, c1, lo, hi = hit
            if not (c0 <= t0 and t1 <= c1):
                c0, c1 = min(t0, c0), max(t1, c1)
                hit = None
        if hit is None:
            lo, hi = self._compute(phi, c0, c1)
            self.cache[id(phi)] = (c0, c1, lo, hi)
        return lo[..., t0 - c0 : t1 - c0 + 1], hi[..., t0 - c0 : t1 - c0 + 1]

    def _end(self, phi: Formula) -> int:
        """Last step at which ``phi`` can still be evaluated."""
        return self.n - 1 - _need(phi, self.need)

    def _compute(self, phi: Formula, t0: int, t1: int):
        if isinstance(phi, Atom):
            xl, xu = self.lookup(phi)
            fa = np.multiply(xl[..., t0 : t1 + 1], phi.a)
            fa += phi.b
            fb = np.multiply(xu[..., t0 : t1 + 1], phi.a)
            fb += phi.b
            # affine in x with xl <= xu, so the sign of a orders the endpoints
            return (fa, fb) if phi.a >= 0 else (fb, fa)
        if isinstance(phi, Not):
            lo, hi = self.eval(phi.arg, t0, t1)
            return -hi, -lo
        if isinstance(phi, And):
            l1, h1 = self.eval(phi.left, t0, t1)
            l2, h2 = self.eval(phi.right, t0, t1)
            return np.minimum(l1, l2), np.minimum(h1, h2)
        if isinstance(phi, Or):
            # literal !(!a & !b)
            l1, h1 = self.eval(phi.left, t0, t1)
            l2, h2 = self.eval(phi.right, t0, t1)
            nl, nh = np.minimum(-h1, -h2), np.minimum(-l1, -l2)
            return -nh, -nl
        if isinstance(phi, (Always, Eventually)):
            op = np.minimum if isinstance(phi, Always) else np.maximum
            iv = phi.interval
            if iv.bounded:
                lo, hi = self.eval(phi.arg, t0 + iv.lo, t1 + iv.hi)
                w = iv.hi - iv.lo + 1
                return _sliding(lo, w, op), _sliding(hi, w, op)
            end = self._end(phi.arg)
            lo, hi = self.eval(phi.arg, t0 + iv.lo, end)
            k = t1 - t0 + 1
            return _tail_fold(lo, k, op), _tail_fold(hi, k, op)
        return self._until(phi, t0, t1)

    def _until(self, phi: Until, t0: int, t1: int):
        iv = phi.interval
        if iv.bounded:
            last = t1 + iv.hi
        else:
            last = self.n - 1 - max(_need(phi.left, self.need), _need(phi.right, self.need))
        l1, h1 = self.eval(phi.left, t0, last)
        l2, h2 = self.eval(phi.right, t0 + iv.lo, last)
        out_lo, out_hi = [], []
        for t in range(t0, t1 + 1):
            stop = (t + iv.hi if iv.bounded else last) + 1
            # running min of the left operand over [t, t'] for every t'
            p_lo = np.minimum.accumulate(l1[..., t - t0 : stop - t0], axis=-1)[..., iv.lo :]
            p_hi = np.minimum.accumulate(h1[..., t - t0 : stop - t0], axis=-1)[..., iv.lo :]
            a, b = t - t0, stop - t0 - iv.lo
            out_lo.append(np.minimum(p_lo, l2[..., a:b], out=p_lo).max(axis=-1))
            out_hi.append(np.minimum(p_hi, h2[..., a:b], out=p_hi).max(axis=-1))
        return np.stack(out_lo, axis=-1), np.stack(out_hi, axis=-1)


def _check_span(phi: Formula, n: int, t: int) -> None:
    if not isinstance(t, (int, np.integer)) or t < 0:
        raise ContractError(f"evaluation step must be a non-negative integer, got {t!r}")
    need = effective_horizon(phi)
    if t + need > n - 1:
        raise HorizonError(
            f"signal has {n} steps but evaluating at t={t} needs {t + need + 1}"
        )


def _env_bounds(phi: Formula, env: SignalEnv):
    bounds, n = {}, None
    for channel, eps in signal_keys(phi):
        fp = env.lookup(channel, eps)
        bounds[_key(channel, eps)] = (fp.lower, fp.upper)
        n = len(fp) if n is None else min(n, len(fp))
    return bounds, n


def robustness(phi: Formula, env: SignalEnv, t: int = 0) -> RobustInterval:
    """Robustness degree interval of ``phi`` over the flowpipes in ``env`` at step ``t``."""
    bounds, n = _env_bounds(phi, env)
    _check_span(phi, n, t)
    lo, hi = _Evaluator(bounds, n).eval(phi, t, t)
    return RobustInterval(float(lo[..., 0]), float(hi[..., 0]))


def robustness_signal(phi: Formula, env: SignalEnv, t0: int = 0, t1: int | None = None):
    """Lower/upper robustness arrays for every step in ``[t0, t1]``.

    ``t1`` defaults to the last step at which ``phi`` can be evaluated.
    """
    bounds, n = _env_bounds(phi, env)
    if t1 is None:
        t1 = n - 1 - effective_horizon(phi)
    _check_span(phi, n, t0)
    _check_span(phi, n, t1)
    if t1 < t0:
        raise ContractError("empty evaluation range")
    lo, hi = _Evaluator(bounds, n).eval(phi, t0, t1)
    return np.array(lo), np.array(hi)


def trace_robustness(phi: Formula, trace: Trace, t: int = 0) -> float:
    """Classic robustness of a single trace, via its zero-width flowpipe."""
    rho = robustness(phi, SignalEnv.from_trace(trace), t)
    return rho.lower


def trace_robustness_many(phi: Formula, values, channel: str, t: int = 0) -> np.ndarray:
    """Classic robustness for every row of an (M, T) array of traces of one channel."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ContractError("expected an (M, T) array of traces")
    keys = signal_keys(phi)
    if any(ch != channel for ch, _ in keys):
        raise SignalLookupError(f"formula reads channels other than {channel!r}")
    bounds = {_key(channel, 1.0): (values, values)}
    n = values.shape[-1]
    _check_span(phi, n, t)
    lo, _ = _Evaluator(bounds, n).eval(phi, t, t)
    return lo[..., 0].copy()


# --- boolean strong/weak semantics -----------------------------------------

class _BooleanMonitor:
    """Recursive strong/weak satisfaction, written over flags only."""

    def __init__(self, env: SignalEnv, n: int):
        self.env = env
        self.n = n
        self.need: dict = {}
        self.memo: dict = {}

    def window(self, iv, t: int, end: int) -> range:
        hi = t + iv.hi if iv.hi != INF else end
        return range(t + iv.lo, hi + 1)

    def sat(self, phi: Formula, t: int) -> tuple[bool, bool]:
        key = (id(phi), t)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._sat(phi, t)
        return hit

    def _sat(self, phi: Formula, t: int) -> tuple[bool, bool]:
        if isinstance(phi, Atom):
            fp = self.env.lookup(phi.channel, phi.epsilon)
            at_lo = phi.a * float(fp.lower[t]) + phi.b > 0
            at_hi = phi.a * float(fp.upper[t]) + phi.b > 0
            # affine f is positive on the whole interval iff at both ends
            return at_lo and at_hi, at_lo or at_hi
        if isinstance(phi, Not):
            s, w = self.sat(phi.arg, t)
            return not w, not s
        if isinstance(phi, And):
            s1, w1 = self.sat(phi.left, t)
            s2, w2 = self.sat(phi.right, t)
            return s1 and s2, w1 and w2
        if isinstance(phi, (Always, Eventually)):
            end = self.n - 1 - _need(phi.arg, self.need)
            flags = [self.sat(phi.arg, u) for u in self.window(phi.interval, t, end)]
            fold = all if isinstance(phi, Always) else any
            return fold(s for s, _ in flags), fold(w for _, w in flags)
        end = self.n - 1 - max(_need(phi.left, self.need), _need(phi.right, self.need))
        strong = weak = False
        left_s = left_w = True
        u_first = t + phi.interval.lo
        for u in range(t, self.window(phi.interval, t, end).stop):
            s1, w1 = self.sat(phi.left, u)
            left_s, left_w = left_s and s1, left_w and w1
            if u >= u_first:
                s2, w2 = self.sat(phi.right, u)
                strong = strong or (s2 and left_s)
                weak = weak or (w2 and left_w)
        return strong, weak


def verdict(phi: Formula, env: SignalEnv, t: int = 0) -> Verdict:
    """Strong/weak satisfaction computed independently of the robustness arithmetic."""
    _, n = _env_bounds(phi, env)
    _check_span(phi, n, t)
    # Or nodes are expanded up front; the memo is keyed on node identity
    strong, weak = _BooleanMonitor(env, n).sat(desugar(phi), t)
    return Verdict(strong, weak)
