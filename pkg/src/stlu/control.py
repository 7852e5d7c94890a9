"""Adaptive controllers driven by robustness intervals.

Both adapters are pure functions.  Loop state such as the meal-bolus flag
belongs to the caller.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .monitor import RobustInterval
from .signal import Flowpipe


@dataclass(frozen=True)
class InsulinAction:
    basal: float
    bolus: float

    def __post_init__(self):
        if self.basal < 0 or self.bolus < 0:
            raise ContractError("insulin doses must be non-negative")


@dataclass(frozen=True)
class BasalBolusParams:
    """Thresholds and dose multipliers; defaults follow the published adapter."""

    severe_hypo: float = -20.0
    severe_hyper: float = -70.0
    mild_hypo_factor: float = 0.8
    mild_hyper_factor: float = 1.2
    severe_hyper_factor: float = 1.5
    hypo_bg: float = 70.0
    hyper_bg: float = 180.0
    premeal_window: int = 15  # K, steps (45 min at 3-minute steps)


@dataclass(frozen=True)
class BasalBolusContext:
    rho_l: RobustInterval
    rho_h: RobustInterval
    g_t: float
    t: int
    t_m: int
    K: int
    bolus_flag: bool
    default_basal: float
    meal_bolus: float

    def __post_init__(self):
        if self.K < 0:
            raise ContractError("pre-meal window K must be non-negative")
        if self.default_basal < 0 or self.meal_bolus < 0:
            raise ContractError("default_basal and meal_bolus must be non-negative")


def adapt_basal_bolus(ctx: BasalBolusContext, params: BasalBolusParams = BasalBolusParams()):
    """Return ``(InsulinAction, bolus_flag)`` for one control step.

    Basal rules are checked top to bottom and the first match wins, so a
    predicted hypoglycemia always overrides a predicted hyperglycemia.
    """
    low, high = ctx.rho_l.lower, ctx.rho_h.lower
    if low < params.severe_hypo:
        basal = 0.0
    elif params.severe_hypo <= low <= 0:
        basal = ctx.default_basal * params.mild_hypo_factor
    elif params.severe_hyper <= high <= 0:
        basal = ctx.default_basal * params.mild_hyper_factor
    elif high < params.severe_hyper:
        basal = ctx.default_basal * params.severe_hyper_factor
    else:
        basal = ctx.default_basal

    bolus, flag = 0.0, ctx.bolus_flag
    if not flag:
        if ctx.t_m - ctx.K <= ctx.t < ctx.t_m:
            if not (low <= 0 or ctx.g_t <= params.hypo_bg):
                bolus, flag = ctx.meal_bolus, True
        elif ctx.t == ctx.t_m:
            bolus, flag = ctx.meal_bolus, True
    return InsulinAction(basal, bolus), flag


# --- vehicle ----------------------------------------------------------------

class Violation(enum.Enum):
    NONE = "none"
    DECELERATION = "deceleration"
    ACCELERATION = "acceleration"
    BOTH = "both"


@dataclass(frozen=True)
class DriveAction:
    brake: float
    throttle: float


@dataclass(frozen=True)
class VehicleParams:
    rho_thre: float = -3.0
    rho_corr: float = -3.0
    min_speed: float = 5.0
    max_throttle: float = 0.6
    max_brake: float = 0.6
    # listed with the published settings but not used by the adapter
    min_throttle: float = 0.4
    min_brake: float = 0.4
    accel_limit: float = 6.0
    delta_floor: float = 1e-3


@dataclass(frozen=True)
class DriveContext:
    rho: RobustInterval
    current_speed: float
    current_throttle: float
    current_brake: float
    mean_brake: float
    mean_throttle: float
    violation_kind: Violation = Violation.NONE

    def __post_init__(self):
        if self.mean_brake < 0 or self.mean_throttle < 0:
            raise ContractError("trailing means must be non-negative")


def classify_violation(flowpipe: Flowpipe, limit: float = 6.0) -> Violation:
    """Which side of the acceleration band ``(-limit, limit)`` the prediction leaves."""
    if len(flowpipe) == 0:
        raise ContractError("empty flowpipe")
    hard_brake = bool(np.any(flowpipe.lower < -limit))
    sharp_accel = bool(np.any(flowpipe.upper > limit))
    if hard_brake and sharp_accel:
        return Violation.BOTH
    if hard_brake:
        return Violation.DECELERATION
    if sharp_accel:
        return Violation.ACCELERATION
    return Violation.NONE


def adjustment(rho_lower: float, params: VehicleParams = VehicleParams()) -> float:
    """delta = 1/|rho + rho_corr|, capped at ``1/delta_floor``."""
    return 1.0 / max(abs(rho_lower + params.rho_corr), params.delta_floor)


def adapt_vehicle(ctx: DriveContext, params: VehicleParams = VehicleParams()) -> DriveAction:
    brake, throttle = ctx.current_brake, ctx.current_throttle
    delta = adjustment(ctx.rho.lower, params)
    kind = ctx.violation_kind
    if ctx.current_speed >= params.min_speed:
        if ctx.rho.lower > params.rho_thre or kind is Violation.NONE:
            brake = min(brake, params.max_brake)
            throttle = min(throttle, params.max_throttle)
        elif kind is Violation.DECELERATION:
            brake = min((1.0 + delta) * ctx.mean_brake, params.max_brake)
            throttle = 0.0
        elif kind is Violation.ACCELERATION:
            throttle = min((1.0 + delta) * ctx.mean_throttle, params.max_throttle)
            brake = 0.0
        else:
            brake = min(max(1.0 - delta, 0.0) * ctx.mean_brake, params.max_brake)
            throttle = 0.0
    else:
        throttle = min(max(1.0 - delta, 0.0) * ctx.mean_throttle, params.max_throttle)
        brake = 0.0
    return DriveAction(max(brake, 0.0), max(throttle, 0.0))
