#!/usr/bin/env python3
"""Post-hoc trade-off extraction from a finished campaign.

Runs one product-wafer campaign (or loads an existing record), then asks the
final surrogate for its best configuration under each weight preset without
any new experiments, printing the predicted speed/strength trade-offs.

    python3 scripts/weight_tradeoff_study.py --budget 180 --seed 0
    python3 scripts/weight_tradeoff_study.py --record kerfopt_data/sim-product-0.json
"""

import argparse
import json

from kerfopt.acquisition import WEIGHT_PRESETS
from kerfopt.campaign import Campaign, run_autonomous
from kerfopt.errors import ThresholdTooStrictError
from kerfopt.persistence import load_record
from kerfopt.simulator import (
    SimulatorBlackbox,
    campaign_config_for_preset,
    get_preset,
    latent_surfaces,
    throughput,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--record", default=None, help="Existing campaign record to load.")
    parser.add_argument("--budget", type=int, default=180)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--feasibility-level", type=float, default=0.9)
    parser.add_argument("--pool-size", type=int, default=100_000)
    args = parser.parse_args()

    preset = get_preset("product")
    if args.record:
        campaign = load_record(args.record)
    else:
        campaign = Campaign(
            campaign_config_for_preset("product", seed=args.seed),
            campaign_id=f"tradeoff-{args.seed}",
        )
        run_autonomous(campaign, SimulatorBlackbox(preset, args.seed), budget=args.budget)
        print(f"campaign finished: {campaign.iteration} evaluations, stage {campaign.stage}")
    if campaign.stage != 2:
        raise SystemExit("campaign never reached stage 2; nothing to extract")

    for name in ("product", "strength_first", "speed_first"):
        weights = WEIGHT_PRESETS[name]
        try:
            result = campaign.map_estimate(
                weights, feasibility_level=args.feasibility_level, pool_size=args.pool_size
            )
        except ThresholdTooStrictError as err:
            print(f"{name}: no candidate at level {args.feasibility_level} "
                  f"(best achievable {err.best_achievable:.3f})")
            continue
        config = result["config"]
        latent = latent_surfaces(config.as_array()[None, :], preset)
        print(json.dumps({
            "weights": name,
            "predicted_utility": round(result["utility"], 3),
            "predicted_throughput": round(result["throughput"], 3),
            "feasibility_level": round(result["feasibility_level"], 3),
            "true_throughput": round(throughput(config, preset), 3),
            "true_front_strength": round(float(latent["front_strength"][0]), 1),
            "true_back_strength": round(float(latent["back_strength"][0]), 1),
            "config": config.as_dict(),
        }))


if __name__ == "__main__":
    main()
