"""Robustness-guided calibration loss, configuration ranking and F1 of satisfaction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .logic import Formula
from .monitor import SignalEnv, robustness, trace_robustness
from .signal import Flowpipe, Trace


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.5
    epsilon: float = 0.95

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ContractError(f"beta must lie in [0, 1], got {self.beta}")
        if not (0.0 < self.epsilon < 1.0):
            raise ContractError(f"epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class CandidateConfig:
    """A labelled prediction configuration with one flowpipe per validation sample."""

    label: str
    flowpipes: tuple

    def __post_init__(self):
        object.__setattr__(self, "flowpipes", tuple(self.flowpipes))


@dataclass(frozen=True)
class RankedConfig:
    label: str
    mean_loss: float
    f1: float


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def f1(self) -> float:
        denom = self.tp + 0.5 * (self.fp + self.fn)
        return self.tp / denom if denom else 0.0


def _rename(trace: Trace, flowpipe: Flowpipe) -> Trace:
    # the target is scored on the same channel as the prediction
    if trace.channel == flowpipe.channel:
        return trace
    return Trace(trace.values, flowpipe.channel, trace.step_duration)


def target_satisfies(phi: Formula, target: Trace) -> bool:
    """Single-trace reading of strong satisfaction: strictly positive robustness."""
    return trace_robustness(phi, target, 0) > 0


def eta_r(flowpipe: Flowpipe, target: Trace, phi: Formula) -> float:
    """Robustness term: worst case if the target satisfies ``phi``, else minus best case."""
    rho = robustness(phi, SignalEnv([flowpipe]), 0)
    if target_satisfies(phi, _rename(target, flowpipe)):
        return rho.lower
    return -rho.upper


def eta_d(flowpipe: Flowpipe, target: Trace) -> float:
    """Total distance by which the target leaves the flowpipe."""
    n = len(target)
    if n > len(flowpipe):
        raise ContractError(f"target has {n} steps but the flowpipe only {len(flowpipe)}")
    x = target.values
    below = np.maximum(flowpipe.lower[:n] - x, 0.0)
    above = np.maximum(x - flowpipe.upper[:n], 0.0)
    return math.fsum((below + above).tolist())


def loss_qt(flowpipe: Flowpipe, target: Trace, phi: Formula, cfg: LossConfig = LossConfig()) -> float:
    return -cfg.beta * eta_r(flowpipe, target, phi) + (1.0 - cfg.beta) * eta_d(flowpipe, target)


def confusion(pairs: Sequence[tuple[Trace, Flowpipe]], phi: Formula) -> Confusion:
    out = Confusion()
    for target, fp in pairs:
        sat = target_satisfies(phi, _rename(target, fp))
        predicted = robustness(phi, SignalEnv([fp]), 0).lower > 0
        if sat and predicted:
            out.tp += 1
        elif predicted:
            out.fp += 1
        elif sat:
            out.fn += 1
        else:
            out.tn += 1
    return out


def f1_satisfaction(pairs: Sequence[tuple[Trace, Flowpipe]], phi: Formula) -> float:
    """F1 of requirement satisfaction; robustness exactly 0 on a satisfying target is a miss."""
    pairs = list(pairs)
    if not pairs:
        raise ContractError("f1_satisfaction needs at least one (target, flowpipe) pair")
    return confusion(pairs, phi).f1


def select_config(
    candidates: Sequence[CandidateConfig],
    targets: Sequence[Trace],
    phi: Formula,
    cfg: LossConfig = LossConfig(),
) -> list[RankedConfig]:
    """Rank candidates by mean loss over the targets, ascending; ties by label."""
    targets = list(targets)
    if not candidates:
        raise ContractError("no candidates to rank")
    if not targets:
        raise ContractError("no target traces")
    ranked = []
    for cand in candidates:
        if len(cand.flowpipes) != len(targets):
            raise ContractError(
                f"candidate {cand.label!r} has {len(cand.flowpipes)} flowpipes for {len(targets)} targets"
            )
        losses = [loss_qt(fp, tr, phi, cfg) for fp, tr in zip(cand.flowpipes, targets)]
        f1 = f1_satisfaction(list(zip(targets, cand.flowpipes)), phi)
        ranked.append(RankedConfig(cand.label, math.fsum(losses) / len(losses), f1))
    ranked.sort(key=lambda r: (r.mean_loss, r.label))
    return ranked
