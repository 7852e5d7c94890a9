"""Paired baseline vs adaptive Basal-Bolus runs on the toy glucose plant.

    python scripts/closed_loop.py --seeds 10 --days 7
"""
import argparse
import json

import numpy as np

from stlu.simloop import ControllerConfig, PredictorConfig, ScenarioConfig, run_episode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--days", type=int, default=7)
    ap.add_argument("--rollouts", type=int, default=30)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", help="also write per-seed results here")
    args = ap.parse_args()

    predictor = PredictorConfig(rollouts=args.rollouts, workers=args.workers)
    rows = []
    print(f"{'seed':>4} {'haz base':>9} {'haz adapt':>9} {'TIR base':>9} {'TIR adapt':>9} {'alert min':>9}")
    for seed in range(args.seeds):
        cfg = ScenarioConfig(seed=seed, days=args.days, predictor=predictor)
        base = run_episode(cfg.replace(controller=ControllerConfig(kind="baseline")))
        adapt = run_episode(cfg)
        rows.append({"seed": seed, "baseline": base.to_json(), "adaptive": adapt.to_json()})
        print(
            f"{seed:>4} {base.n_hazards:>9} {adapt.n_hazards:>9} "
            f"{base.time_in_range:>9.3f} {adapt.time_in_range:>9.3f} {adapt.mean_pre_alert_minutes:>9.1f}"
        )

    haz = np.array([[r["baseline"]["n_hypo"] + r["baseline"]["n_hyper"],
                     r["adaptive"]["n_hypo"] + r["adaptive"]["n_hyper"]] for r in rows])
    tir = np.array([[r["baseline"]["time_in_range"], r["adaptive"]["time_in_range"]] for r in rows])
    print(f"mean hazards  baseline {haz[:, 0].mean():.2f}  adaptive {haz[:, 1].mean():.2f}"
          f"  (adaptive <= baseline in {int((haz[:, 1] <= haz[:, 0]).sum())}/{len(rows)})")
    print(f"mean TIR      baseline {tir[:, 0].mean():.3f}  adaptive {tir[:, 1].mean():.3f}"
          f"  (adaptive >= baseline in {int((tir[:, 1] >= tir[:, 0]).sum())}/{len(rows)})")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
