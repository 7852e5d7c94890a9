"""Pick the predictor jitter that best calibrates flowpipes against held-out truth.

Truth traces come from the toy plant with its own noise; each candidate jitter
produces Monte Carlo flowpipes from the same starting states.  Candidates are
ranked by mean STL-U loss, with F1 of satisfaction alongside.
"""
import argparse

import numpy as np

from stlu import Trace, parse
from stlu.calibration import CandidateConfig, LossConfig, select_config
from stlu.control import InsulinAction
from stlu.simloop import PatientParams, PlantState, PredictorConfig, plant_step, predict_flowpipe

SPEC = "G[0,9](BG{0.95} > 70 & BG{0.95} < 180)"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=60)
    ap.add_argument("--jitters", default="0.0,0.05,0.1,0.2,0.4")
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    phi = parse(SPEC)
    params = PatientParams()
    rng = np.random.default_rng(args.seed)
    horizon = 10
    cases = []
    for _ in range(args.samples):
        state = PlantState(rng.uniform(60, 220), rng.uniform(0, 2), rng.uniform(0, 60), rng.uniform(0, 0.5))
        doses = [float(rng.uniform(0, 0.1))] * horizon
        meals = [0.0] * horizon
        s, values = state, []
        for d, m in zip(doses, meals):
            s = plant_step(s, InsulinAction(d, 0.0), m, float(rng.normal(0, params.noise_std)), params)
            values.append(s.glucose)
        cases.append((state, doses, meals, Trace(values, "BG")))

    candidates = []
    for jitter in map(float, args.jitters.split(",")):
        cfg = PredictorConfig(jitter=jitter, horizon=horizon)
        sub = np.random.default_rng([args.seed, 1])
        fps = [predict_flowpipe(st, d, m, params, cfg, sub) for st, d, m, _ in cases]
        candidates.append(CandidateConfig(f"jitter={jitter:g}", fps))

    ranking = select_config(candidates, [c[3] for c in cases], phi, LossConfig(beta=args.beta))
    print(f"spec: {SPEC}")
    print(f"{'candidate':<14} {'mean loss':>10} {'F1':>6}")
    for r in ranking:
        print(f"{r.label:<14} {r.mean_loss:>10.3f} {r.f1:>6.3f}")


if __name__ == "__main__":
    main()
