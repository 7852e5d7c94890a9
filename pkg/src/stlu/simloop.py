"""Desk-scale closed-loop glucose simulation.

The plant is a four-state toy model (glucose, subcutaneous insulin depot,
active insulin, carbs on board).  It is NOT a physiological patient model; it exists so the
monitor -> controller loop can be exercised end to end and compared against
a fixed Basal-Bolus baseline on identical seeds.

Randomness comes from ``numpy.random.SeedSequence(seed)`` split by purpose:

* ``spawn_key=(0,)``    patient variability and meal sizes
* ``spawn_key=(1,)``    plant process noise (drawn up front, action-independent)
* ``spawn_key=(2, t)``  predictor at step ``t``; row ``r`` of each draw belongs
  to rollout ``r``, so chunking rollouts across workers cannot change results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, is_dataclass
from typing import Sequence

import numpy as np

from .control import BasalBolusContext, BasalBolusParams, InsulinAction, adapt_basal_bolus
from .errors import ContractError
from .logic import parse
from .monitor import SignalEnv, robustness
from .signal import Flowpipe, GaussianStep, to_flowpipe

HYPO_BG = 70.0
HYPER_BG = 180.0
HAZARD_GAP_MINUTES = 30.0


@dataclass(frozen=True)
class PatientParams:
    set_point: float = 160.0     # mg/dL reached with no insulin
    drift: float = 0.02          # pull toward set_point per step
    sensitivity: float = 30.0    # mg/dL drop per unit of active insulin
    carb_factor: float = 3.0     # mg/dL rise per gram absorbed
    carb_rate: float = 0.08      # fraction of carbs on board absorbed per step
    insulin_rate: float = 0.05   # fraction of the subcutaneous depot absorbed per step
    action_rate: float = 0.05    # fraction of absorbed insulin spent per step
    noise_std: float = 1.0       # process noise, mg/dL per step
    initial_glucose: float = 120.0


@dataclass(frozen=True)
class PlantState:
    """Glucose plus first-order pools.

    Insulin passes from the subcutaneous depot (``insulin_onboard``) into an
    action pool (``insulin_active``) before it lowers glucose, which delays
    its peak effect behind that of carbohydrates.
    """

    glucose: float
    insulin_onboard: float = 0.0
    carbs_onboard: float = 0.0
    insulin_active: float = 0.0

    def __post_init__(self):
        if not self.glucose > 0:
            raise ContractError("glucose must be positive")
        if min(self.insulin_onboard, self.carbs_onboard, self.insulin_active) < 0:
            raise ContractError("insulin and carb pools must be non-negative")


@dataclass(frozen=True)
class PredictorConfig:
    rollouts: int = 30
    horizon: int = 10
    jitter: float = 0.1
    epsilon: float = 0.95
    workers: int = 1

    def __post_init__(self):
        if self.rollouts < 2:
            raise ContractError("need at least 2 rollouts")
        if not (0.0 < self.epsilon < 1.0):
            raise ContractError("epsilon must lie in (0, 1)")
        if self.horizon < 1:
            raise ContractError("horizon must be at least one step")


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "adaptive"       # "baseline" or "adaptive"
    default_basal: float = 0.025  # units per step
    carb_ratio: float = 10.0     # grams covered by one unit
    premeal_window: int = 5      # K, steps
    severe_hypo: float = -20.0
    severe_hyper: float = -70.0

    def __post_init__(self):
        if self.kind not in ("baseline", "adaptive"):
            raise ContractError(f"unknown controller kind {self.kind!r}")

    def params(self) -> BasalBolusParams:
        return BasalBolusParams(
            severe_hypo=self.severe_hypo,
            severe_hyper=self.severe_hyper,
            premeal_window=self.premeal_window,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    days: int = 7
    step_duration: float = 180.0
    # (step of day, announced grams), repeated every day
    meals: tuple = ((140, 50.0), (240, 70.0), (360, 80.0))
    carb_error_std: float = 0.3        # log-normal error of eaten vs announced carbs
    patient_variability: float = 0.1   # log-normal spread of the true patient around nominal
    patient: PatientParams = PatientParams()
    predictor: PredictorConfig = PredictorConfig()
    controller: ControllerConfig = ControllerConfig()

    def __post_init__(self):
        if self.days < 1:
            raise ContractError("days must be at least 1")
        if not self.step_duration > 0:
            raise ContractError("step_duration must be positive")
        object.__setattr__(self, "meals", tuple((int(s), float(g)) for s, g in self.meals))
        for s, g in self.meals:
            if not (0 <= s < self.steps_per_day) or g < 0:
                raise ContractError(f"invalid meal ({s}, {g})")

    @property
    def steps_per_day(self) -> int:
        return int(round(86400.0 / self.step_duration))

    @property
    def n_steps(self) -> int:
        return self.days * self.steps_per_day

    @property
    def step_minutes(self) -> float:
        return self.step_duration / 60.0

    def replace(self, **changes) -> ScenarioConfig:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ScenarioConfig(**data)


def config_to_json(cfg) -> dict:
    out = asdict(cfg)
    out["meals"] = [list(m) for m in cfg.meals]
    return out


def config_from_json(obj: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from its JSON mirror; unknown keys are errors."""

    def build(cls, data, where):
        if not isinstance(data, dict):
            raise ContractError(f"{where} must be an object")
        names = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(names) - {"schema_version"}
        if unknown:
            raise ContractError(f"unknown field(s) in {where}: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key == "schema_version":
                continue
            default = getattr(cls(), key) if cls is not ScenarioConfig else getattr(ScenarioConfig(), key)
            if is_dataclass(default):
                kwargs[key] = build(type(default), value, f"{where}.{key}")
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ContractError(f"bad {where}: {exc}") from None

    return build(ScenarioConfig, obj, "config")


# --- plant ------------------------------------------------------------------

def _advance(glucose, depot, active, carbs, dose, meal, noise, sens, carb_factor, p: PatientParams):
    depot = depot + dose
    moved = p.insulin_rate * depot
    depot = depot - moved
    active = active + moved
    spent = p.action_rate * active
    active = active - spent
    carbs = carbs + meal
    absorbed = p.carb_rate * carbs
    carbs = carbs - absorbed
    glucose = (
        glucose
        + carb_factor * absorbed
        - sens * spent
        + p.drift * (p.set_point - glucose)
        + noise
    )
    return np.maximum(glucose, 1.0), depot, active, carbs


def plant_step(
    state: PlantState,
    action: InsulinAction,
    meal: float,
    noise: float,
    params: PatientParams = PatientParams(),
) -> PlantState:
    """Advance the toy plant by one step; deterministic given ``noise``."""
    g, d, a, c = _advance(
        state.glucose, state.insulin_onboard, state.insulin_active, state.carbs_onboard,
        action.basal + action.bolus, meal, noise,
        params.sensitivity, params.carb_factor, params,
    )
    return PlantState(float(g), float(d), float(c), float(a))


# --- predictor --------------------------------------------------------------

def _rollout_rows(state, doses, meals, params, sens, carb, noise):
    n = sens.shape[0]
    g = np.full(n, state.glucose)
    dep = np.full(n, state.insulin_onboard)
    act = np.full(n, state.insulin_active)
    cob = np.full(n, state.carbs_onboard)
    out = np.empty((n, len(doses)))
    for k in range(len(doses)):
        g, dep, act, cob = _advance(g, dep, act, cob, doses[k], meals[k], noise[:, k], sens, carb, params)
        out[:, k] = g
    return out


def predict_samples(
    state: PlantState,
    doses: Sequence[float],
    meals: Sequence[float],
    params: PatientParams,
    cfg: PredictorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """(N, H) matrix of jittered rollouts under the planned doses and meals."""
    h = len(doses)
    if len(meals) != h:
        raise ContractError("doses and meals must cover the same horizon")
    n = cfg.rollouts
    z = rng.standard_normal((n, 2))
    noise = rng.standard_normal((n, h)) * params.noise_std
    sens = params.sensitivity * np.exp(cfg.jitter * z[:, 0])
    carb = params.carb_factor * np.exp(cfg.jitter * z[:, 1])
    doses = np.asarray(doses, dtype=float)
    meals = np.asarray(meals, dtype=float)
    if cfg.workers <= 1:
        return _rollout_rows(state, doses, meals, params, sens, carb, noise)
    chunks = np.array_split(np.arange(n), cfg.workers)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        parts = pool.map(
            lambda idx: _rollout_rows(state, doses, meals, params, sens[idx], carb[idx], noise[idx]),
            chunks,
        )
        return np.concatenate(list(parts), axis=0)


def predict_flowpipe(
    state: PlantState,
    doses: Sequence[float],
    meals: Sequence[float],
    params: PatientParams,
    cfg: PredictorConfig,
    rng: np.random.Generator,
    step_duration: float = 180.0,
) -> Flowpipe:
    samples = predict_samples(state, doses, meals, params, cfg, rng)
    # fast path of fit_gaussians + to_flowpipe for the inner loop
    mean = samples.mean(axis=0)
    std = samples.std(axis=0, ddof=1)
    std[np.ptp(samples, axis=0) == 0] = 0.0
    gaussians = [GaussianStep(float(m), float(s)) for m, s in zip(mean, std)]
    return to_flowpipe(gaussians, cfg.epsilon, "BG", step_duration)


# --- hazards and metrics ----------------------------------------------------

@dataclass(frozen=True)
class Hazard:
    kind: str          # "hypo" or "hyper"
    onset: int         # step
    alert: int | None = None

    def __post_init__(self):
        if self.kind not in ("hypo", "hyper"):
            raise ContractError(f"unknown hazard kind {self.kind!r}")


def detect_hazards(glucose: Sequence[float], low: float = HYPO_BG, high: float = HYPER_BG) -> list[Hazard]:
    """Onsets of out-of-range excursions that follow at least one in-range step."""
    out = []
    prev_in = False
    for t, g in enumerate(glucose):
        now_in = low <= g <= high
        if prev_in and not now_in:
            out.append(Hazard("hypo" if g < low else "hyper", t))
        prev_in = now_in
    return out


def merge_hazards(
    events: Sequence[Hazard], step_minutes: float, gap_minutes: float = HAZARD_GAP_MINUTES
) -> list[Hazard]:
    """Collapse same-kind hazards whose onsets are within ``gap_minutes`` of the
    previous one in the cluster.  Chaining is transitive; a cluster keeps its
    first onset.  Hazards of different kinds never merge."""
    merged: list[Hazard] = []
    last_onset: dict[str, int] = {}
    prev = -math.inf
    for ev in events:
        if ev.onset < prev:
            raise ContractError("hazard events must be ordered by onset")
        prev = ev.onset
        last = last_onset.get(ev.kind)
        if last is not None and (ev.onset - last) * step_minutes <= gap_minutes:
            last_onset[ev.kind] = ev.onset
            continue
        last_onset[ev.kind] = ev.onset
        merged.append(Hazard(ev.kind, ev.onset))
    return merged


@dataclass(frozen=True)
class PreAlertSummary:
    mean_minutes: float
    n_hazards: int
    n_alerted: int

    @property
    def applicable(self) -> bool:
        return self.n_hazards > 0


def attach_alerts(hazards: Sequence[Hazard], alerts: dict, lookback: int) -> list[Hazard]:
    """Earliest matching alert in the ``lookback`` steps strictly before each onset."""
    out = []
    for hz in hazards:
        steps = alerts.get(hz.kind, ())
        lo = hz.onset - lookback
        early = [s for s in steps if lo <= s < hz.onset]
        out.append(Hazard(hz.kind, hz.onset, min(early) if early else None))
    return out


def pre_alert_time(
    alerts: dict, hazards: Sequence[Hazard], step_minutes: float, lookback: int
) -> PreAlertSummary:
    """Mean minutes between the earliest alert and hazard onset; 0 for unalerted hazards.

    ``alerts`` maps hazard kind to the steps at which that alert was raised.
    """
    if not hazards:
        return PreAlertSummary(0.0, 0, 0)
    with_alerts = attach_alerts(hazards, alerts, lookback)
    lead = [(h.onset - h.alert) * step_minutes if h.alert is not None else 0.0 for h in with_alerts]
    n_alerted = sum(h.alert is not None for h in with_alerts)
    return PreAlertSummary(math.fsum(lead) / len(lead), len(hazards), n_alerted)


@dataclass
class EpisodeReport:
    hazards: list
    n_hypo: int
    n_hyper: int
    time_in_range: float
    hypo_time: float
    hyper_time: float
    mean_pre_alert_minutes: float
    pre_alert_applicable: bool
    n_steps: int
    total_basal: float
    total_bolus: float

    @property
    def n_hazards(self) -> int:
        return self.n_hypo + self.n_hyper

    def to_json(self) -> dict:
        out = asdict(self)
        out["hazards"] = [
            {"type": h.kind, "onset": h.onset, "alert": h.alert} for h in self.hazards
        ]
        return out


@dataclass
class EpisodeRun:
    report: EpisodeReport
    glucose: np.ndarray
    basal: np.ndarray
    bolus: np.ndarray
    rho_l: np.ndarray   # (T, 2) lower/upper
    rho_h: np.ndarray


PHI_LOW = "G[0,inf](BG{%r} > 70)"
PHI_HIGH = "G[0,inf](BG{%r} < 180)"


def _meal_plan(cfg: ScenarioConfig, rng: np.random.Generator):
    announced = np.zeros(cfg.n_steps + cfg.predictor.horizon + 1)
    eaten = np.zeros_like(announced)
    for day in range(cfg.days + 1):
        for s, grams in cfg.meals:
            t = day * cfg.steps_per_day + s
            err = math.exp(cfg.carb_error_std * rng.standard_normal())
            if t < announced.size:
                announced[t] = grams
                eaten[t] = grams * err
    return announced, eaten


def _true_patient(cfg: ScenarioConfig, rng: np.random.Generator) -> PatientParams:
    p = cfg.patient
    v = cfg.patient_variability
    z = rng.standard_normal(2)
    return PatientParams(
        set_point=p.set_point,
        drift=p.drift,
        sensitivity=p.sensitivity * math.exp(v * z[0]),
        carb_factor=p.carb_factor * math.exp(v * z[1]),
        carb_rate=p.carb_rate,
        insulin_rate=p.insulin_rate,
        action_rate=p.action_rate,
        noise_std=p.noise_std,
        initial_glucose=p.initial_glucose,
    )


def run_episode_detailed(cfg: ScenarioConfig) -> EpisodeRun:
    setup_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(0,))))
    noise_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(1,))))
    true_p = _true_patient(cfg, setup_rng)
    announced, eaten = _meal_plan(cfg, setup_rng)
    noise = noise_rng.standard_normal(cfg.n_steps) * true_p.noise_std

    pc, cc = cfg.predictor, cfg.controller
    phi_l = parse(PHI_LOW % pc.epsilon)
    phi_h = parse(PHI_HIGH % pc.epsilon)
    params = cc.params()
    meal_steps = np.flatnonzero(announced > 0)

    state = PlantState(true_p.initial_glucose)
    T, H = cfg.n_steps, pc.horizon
    glucose = np.empty(T)
    basal_tr, bolus_tr = np.empty(T), np.empty(T)
    rho_l_tr, rho_h_tr = np.empty((T, 2)), np.empty((T, 2))
    alerts = {"hypo": [], "hyper": []}
    bolus_flag = False
    current_meal = None

    for t in range(T):
        glucose[t] = state.glucose
        upcoming = meal_steps[meal_steps >= t]
        t_m = int(upcoming[0]) if upcoming.size else T + H + 1
        if t_m != current_meal:
            current_meal, bolus_flag = t_m, False
        meal_bolus = announced[t_m] / cc.carb_ratio if t_m < announced.size else 0.0

        # nominal plan over [t, t+H): default basal, meal bolus at meal time
        doses = np.full(H, cc.default_basal)
        if not bolus_flag and t_m < t + H:
            doses[t_m - t] += meal_bolus
        step_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(2, t)))
        )
        fp = predict_flowpipe(
            state, doses, announced[t : t + H], cfg.patient, pc, step_rng, cfg.step_duration
        )
        env = SignalEnv([fp])
        r_l = robustness(phi_l, env, 0)
        r_h = robustness(phi_h, env, 0)
        rho_l_tr[t] = r_l.lower, r_l.upper
        rho_h_tr[t] = r_h.lower, r_h.upper
        if r_l.lower <= 0:
            alerts["hypo"].append(t)
        if r_h.lower <= 0:
            alerts["hyper"].append(t)

        if cc.kind == "adaptive":
            ctx = BasalBolusContext(
                rho_l=r_l, rho_h=r_h, g_t=state.glucose, t=t, t_m=t_m,
                K=cc.premeal_window, bolus_flag=bolus_flag,
                default_basal=cc.default_basal, meal_bolus=meal_bolus,
            )
            action, bolus_flag = adapt_basal_bolus(ctx, params)
        else:
            bolus = meal_bolus if (t == t_m and not bolus_flag) else 0.0
            if bolus:
                bolus_flag = True
            action = InsulinAction(cc.default_basal, bolus)
        basal_tr[t], bolus_tr[t] = action.basal, action.bolus
        state = plant_step(state, action, eaten[t], float(noise[t]), true_p)

    return EpisodeRun(
        _report(glucose, basal_tr, bolus_tr, alerts, cfg),
        glucose, basal_tr, bolus_tr, rho_l_tr, rho_h_tr,
    )


def _report(glucose, basal, bolus, alerts, cfg: ScenarioConfig) -> EpisodeReport:
    n = glucose.size
    n_low = int(np.count_nonzero(glucose < HYPO_BG))
    n_high = int(np.count_nonzero(glucose > HYPER_BG))
    n_in = n - n_low - n_high
    merged = merge_hazards(detect_hazards(glucose), cfg.step_minutes)
    lookback = cfg.predictor.horizon
    summary = pre_alert_time(alerts, merged, cfg.step_minutes, lookback)
    return EpisodeReport(
        hazards=attach_alerts(merged, alerts, lookback),
        n_hypo=sum(h.kind == "hypo" for h in merged),
        n_hyper=sum(h.kind == "hyper" for h in merged),
        time_in_range=n_in / n,
        hypo_time=n_low / n,
        hyper_time=n_high / n,
        mean_pre_alert_minutes=summary.mean_minutes,
        pre_alert_applicable=summary.applicable,
        n_steps=n,
        total_basal=math.fsum(basal.tolist()),
        total_bolus=math.fsum(bolus.tolist()),
    )


def run_episode(cfg: ScenarioConfig) -> EpisodeReport:
    return run_episode_detailed(cfg).report
