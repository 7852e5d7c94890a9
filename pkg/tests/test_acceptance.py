"""Acceptance criteria 1-10.

Each test records a one-line detail; ``conftest.py`` prints a pass/fail line
per criterion at the end of the run.
"""

import dis
import json
import random
import sys
import time

import numpy as np
import pytest

import test_control
from oracles import (
    interval_robustness,
    lookahead,
    random_flowpipe,
    random_formula,
    random_interval,
    stl_robustness,
)
from stlu import control
from stlu.calibration import LossConfig, eta_d, eta_r, f1_satisfaction, loss_qt
from stlu.cli import main
from stlu.control import adapt_basal_bolus, adapt_vehicle
from stlu.logic import Always, Atom, Interval, Until, parse
from stlu.monitor import RobustInterval, SignalEnv, robustness, robustness_signal, trace_robustness_many, verdict
from stlu.signal import Flowpipe, Trace
from stlu.simloop import (
    ControllerConfig,
    PatientParams,
    PlantState,
    PredictorConfig,
    ScenarioConfig,
    config_to_json,
    predict_flowpipe,
    predict_samples,
    run_episode,
)


def _best_time(fn, repeat=7):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


# 1 -----------------------------------------------------------------------------

def test_c01_worked_example_golden(record_property):
    fp = Flowpipe.from_steps([[75, 90], [72, 88], [60, 80], [40, 65]], 0.95, "BG")
    phi = parse("G[0,3](BG{0.95} > 70)")
    env = SignalEnv([fp])
    rho = robustness(phi, env)
    elapsed = _best_time(lambda: robustness(phi, env))
    record_property("detail", f"robustness {list(rho)}, {elapsed * 1e3:.3f} ms")
    assert rho == RobustInterval(-30.0, -5.0)
    assert elapsed < 1e-3


# 2 -----------------------------------------------------------------------------

def _random_case(rng, depth, max_len=30, **kw):
    while True:
        phi = random_formula(rng, depth, **kw)
        need = lookahead(phi)
        if need < max_len:
            n = rng.randint(need + 1, max_len)
            return phi, n, rng.randint(0, n - 1 - need)


def test_c02_soundness(record_property):
    rng = random.Random(2024)
    start = time.perf_counter()
    violations, counts = 0, {"strong": 0, "weak": 0, "neither": 0}
    for _ in range(10_000):
        phi, n, t = _random_case(rng, 4)
        env = SignalEnv([random_flowpipe(rng, n)])
        rho, v = robustness(phi, env, t), verdict(phi, env, t)
        ok = (
            (not rho.lower > 0 or v.strong)
            and (not rho.lower <= 0 or not v.strong)
            and (not rho.upper > 0 or v.weak)
            and (not rho.upper <= 0 or not v.weak)
        )
        violations += not ok
        counts["strong" if v.strong else "weak" if v.weak else "neither"] += 1
    elapsed = time.perf_counter() - start
    record_property("detail", f"10000 cases, {violations} violations, verdicts {counts}, {elapsed:.1f} s")
    assert violations == 0
    assert elapsed < 60


# 3 -----------------------------------------------------------------------------

def test_c03_containment_and_attainment(record_property):
    rng = random.Random(3)
    nprng = np.random.default_rng(3)
    start = time.perf_counter()
    escapes = attain_fail = naive_checked = 0
    for case in range(1000):
        negation_free = case % 2 == 0
        phi, n, t = _random_case(rng, 4, negation=not negation_free, increasing_only=negation_free)
        fp = random_flowpipe(rng, n)
        rho = robustness(phi, SignalEnv([fp]), t)
        u = nprng.random((200, n))
        traces = fp.lower + u * (fp.upper - fp.lower)
        inner = trace_robustness_many(phi, traces, "x", t)
        escapes += int(np.count_nonzero((inner < rho.lower - 1e-9) | (inner > rho.upper + 1e-9)))
        # the batched evaluator is itself checked against the naive oracle on a few rows
        for row in traces[:3]:
            naive = stl_robustness(phi, {"x": row.tolist()}, t)
            escapes += not (rho.lower - 1e-9 <= naive <= rho.upper + 1e-9)
            naive_checked += 1
        if negation_free:
            bounds = trace_robustness_many(phi, np.stack([fp.lower, fp.upper]), "x", t)
            attain_fail += not (bounds[0] == rho.lower and bounds[1] == rho.upper)
    elapsed = time.perf_counter() - start
    record_property(
        "detail",
        f"1000 cases x 200 traces (+{naive_checked} naive), {escapes} escapes, "
        f"{attain_fail}/500 attainment failures, {elapsed:.1f} s",
    )
    assert escapes == 0 and attain_fail == 0
    assert elapsed < 120


# 4 -----------------------------------------------------------------------------

def test_c04_until_equivalence(record_property):
    rng = random.Random(4)
    mismatches = 0
    for _ in range(1000):
        while True:
            phi = Until(
                random_interval(rng, max_hi=6),
                random_formula(rng, 2, channels=("x", "y")),
                random_formula(rng, 2, channels=("x", "y")),
            )
            if lookahead(phi) < 30:
                break
        n = lookahead(phi) + rng.randint(1, 6)
        env = SignalEnv([random_flowpipe(rng, n, "x"), random_flowpipe(rng, n, "y")])
        pipes = {fp.channel: (fp.lower.tolist(), fp.upper.tolist()) for fp in env}
        lo, hi = robustness_signal(phi, env)
        for t in range(len(lo)):
            mismatches += (lo[t], hi[t]) != interval_robustness(phi, pipes, t)
    record_property("detail", f"1000 Until formulas, {mismatches} mismatching steps")
    assert mismatches == 0


# 5 -----------------------------------------------------------------------------

def test_c05_linear_time(record_property):
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    ratios = {}
    for name, make in (
        ("G", lambda h: Always(Interval(0, h), Atom("x", 1.0, 0.0, 0.95))),
        ("U", lambda h: Until(Interval(0, h), Atom("x", 1.0, 5.0, 0.95), Atom("x", 1.0, -5.0, 0.95))),
    ):
        times = []
        for h in (10_000, 100_000):
            mid = rng.normal(0, 10, h + 1)
            half = rng.uniform(0, 5, h + 1)
            env = SignalEnv([Flowpipe(mid - half, mid + half, 0.95, "x")])
            phi = make(h)
            times.append(_best_time(lambda: robustness(phi, env), repeat=9))
        ratios[name] = times[1] / times[0]
    elapsed = time.perf_counter() - start
    record_property("detail", ", ".join(f"{k} ratio {v:.1f}" for k, v in ratios.items()) + f", {elapsed:.1f} s")
    assert all(r <= 15 for r in ratios.values())
    assert elapsed < 30


# 6 -----------------------------------------------------------------------------

def test_c06_loss_and_f1_goldens(record_property):
    phi = parse("G[0,3](BG{0.95} > 70)")
    fig2 = Flowpipe.from_steps([[75, 90], [72, 88], [60, 80], [40, 65]], 0.95, "BG")
    fp = Flowpipe.from_steps([[75, 90], [72, 88], [60, 80], [40, 72]], 0.95, "BG")
    target = Trace([95, 75, 75, 71], "BG")
    one = Flowpipe.from_steps([[60, 80]], 0.95, "BG")
    cfg = LossConfig(beta=0.5)
    checks = {
        "eta_r violating": (eta_r(fig2, Trace([75, 75, 75, 60], "BG"), phi), 5.0),
        "eta_r satisfying": (eta_r(fig2, Trace([75, 75, 75, 71], "BG"), phi), -30.0),
        "eta_d above": (eta_d(one, Trace([85], "BG")), 5.0),
        "eta_d below": (eta_d(one, Trace([55], "BG")), 5.0),
        "eta_d inside": (eta_d(one, Trace([70], "BG")), 0.0),
        "loss beta 0.5": (loss_qt(fp, target, phi, cfg), 17.5),
        "loss beta 0": (loss_qt(fp, target, phi, LossConfig(beta=0.0)), eta_d(fp, target)),
        "loss beta 1": (loss_qt(fp, target, phi, LossConfig(beta=1.0)), -eta_r(fp, target, phi)),
    }
    atom = parse("BG{0.95} > 70")
    pair = lambda v, lo, hi: (Trace([v], "BG"), Flowpipe([lo], [hi], 0.95, "BG"))
    checks["f1 1TP/1FP/1FN"] = (f1_satisfaction([pair(80, 75, 90), pair(60, 75, 90), pair(80, 60, 90)], atom), 0.5)
    checks["f1 all TP"] = (f1_satisfaction([pair(80, 75, 90)] * 3, atom), 1.0)
    checks["f1 no TP"] = (f1_satisfaction([pair(80, 60, 90)] * 3, atom), 0.0)
    bad = [k for k, (got, want) in checks.items() if abs(got - want) > 1e-12]
    record_property("detail", f"{len(checks) - len(bad)}/{len(checks)} goldens within 1e-12, beta={cfg.beta}")
    assert not bad, bad


# 7 -----------------------------------------------------------------------------

def _body_lines(fn):
    first = fn.__code__.co_firstlineno
    lines = {line for _, line in dis.findlinestarts(fn.__code__) if line is not None}
    return {line for line in lines if line > first + 1}


def test_c07_controller_branch_coverage(record_property):
    hit = set()
    target_file = control.__file__

    def tracer(frame, event, arg):
        if frame.f_code.co_filename == target_file:
            if event == "line":
                hit.add(frame.f_lineno)
            return tracer
        return None

    failures = 0
    sys.settrace(tracer)
    try:
        for rho_l, rho_h, basal in test_control.BASAL_CASES:
            action, _ = adapt_basal_bolus(test_control.bb(rho_l, rho_h, basal=2.0))
            failures += action.basal != basal * 2.0 or action.bolus != 0.0
        for t, t_m, flag, rho_l, g_t, bolus, flag_after in test_control.BOLUS_CASES:
            action, new_flag = adapt_basal_bolus(test_control.bb(rho_l=rho_l, g_t=g_t, t=t, t_m=t_m, flag=flag))
            failures += action.bolus != bolus or new_flag is not flag_after
        for ctx, expected in test_control.VEHICLE_CASES:
            got = adapt_vehicle(ctx)
            failures += abs(got.brake - expected.brake) > 1e-15 or abs(got.throttle - expected.throttle) > 1e-15
    finally:
        sys.settrace(None)
    missed = {}
    for fn in (adapt_basal_bolus, adapt_vehicle):
        gap = sorted(_body_lines(fn) - hit)
        if gap:
            missed[fn.__name__] = gap
    n_cases = len(test_control.BASAL_CASES) + len(test_control.BOLUS_CASES) + len(test_control.VEHICLE_CASES)
    record_property("detail", f"{n_cases} table cases, {failures} wrong outputs, unexecuted lines {missed or 'none'}")
    assert failures == 0 and not missed


# 8 -----------------------------------------------------------------------------

def test_c08_closed_loop_directional(record_property):
    start = time.perf_counter()
    hz_ok = tir_ok = 0
    rows = []
    for seed in range(10):
        base = ScenarioConfig(seed=seed, days=7)
        assert base.predictor.epsilon == 0.95 and base.predictor.rollouts == 30
        b = run_episode(base.replace(controller=ControllerConfig(kind="baseline")))
        a = run_episode(base)
        hz_ok += a.n_hazards <= b.n_hazards
        tir_ok += a.time_in_range >= b.time_in_range
        rows.append((a.n_hazards, b.n_hazards, a.time_in_range, b.time_in_range))
    elapsed = time.perf_counter() - start
    mean = np.mean(rows, axis=0)
    record_property(
        "detail",
        f"hazards ok {hz_ok}/10, TIR ok {tir_ok}/10; mean hazards {mean[0]:.1f} vs {mean[1]:.1f}, "
        f"mean TIR {mean[2]:.3f} vs {mean[3]:.3f}; {elapsed:.0f} s",
    )
    assert hz_ok >= 8 and tir_ok >= 8
    assert elapsed < 600


# 9 -----------------------------------------------------------------------------

def test_c09_flowpipe_coverage(record_property):
    params = PatientParams()
    cfg = PredictorConfig(epsilon=0.95, rollouts=30)
    truth_cfg = PredictorConfig(epsilon=0.95, rollouts=2)
    master = np.random.SeedSequence(9)
    inside = total = 0
    for trial, child in enumerate(master.spawn(1000)):
        pred_rng, truth_rng, case_rng = (np.random.default_rng(s) for s in child.spawn(3))
        state = PlantState(
            case_rng.uniform(80, 250), case_rng.uniform(0, 3), case_rng.uniform(0, 60), case_rng.uniform(0, 1)
        )
        doses = case_rng.uniform(0, 0.2, cfg.horizon)
        meals = np.where(case_rng.random(cfg.horizon) < 0.1, case_rng.uniform(20, 80, cfg.horizon), 0.0)
        fp = predict_flowpipe(state, doses, meals, params, cfg, pred_rng)
        # the ground truth is one independent draw from the same stochastic model
        truth = predict_samples(state, doses, meals, params, truth_cfg, truth_rng)[0]
        inside += int(np.count_nonzero((truth >= fp.lower) & (truth <= fp.upper)))
        total += truth.size
    rate = inside / total
    record_property("detail", f"coverage {rate:.4f} over 1000 trials x {cfg.horizon} steps")
    assert rate >= 0.90


# 10 ----------------------------------------------------------------------------

def test_c10_simulate_determinism(record_property, tmp_path, capsys):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(config_to_json(ScenarioConfig(seed=11, days=7))))
    outs = []
    for k, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"r{k}.json"
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "11", "--workers", str(workers)]) == 0
        outs.append(out.read_bytes())
    same = outs[0] == outs[1] == outs[2]
    record_property("detail", f"3 runs (workers 1, 1, 4), byte-identical: {same}, {len(outs[0])} bytes")
    assert same
