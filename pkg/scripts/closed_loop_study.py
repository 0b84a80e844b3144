#!/usr/bin/env python3
"""Multi-seed closed-loop benchmark against the synthetic wafer.

For each seed: run an autonomous campaign, score the final incumbent's
noise-free latent utility against the brute-force oracle, and report the
stage split plus the stage-1 constraint-violation decay.

    python3 scripts/closed_loop_study.py --preset product --budget 180 --seeds 10
"""

import argparse
import json
import time
from concurrent.futures import ProcessPoolExecutor

from kerfopt.acquisition import WEIGHT_PRESETS
from kerfopt.campaign import Campaign, run_autonomous
from kerfopt.errors import KerfoptError
from kerfopt.simulator import (
    SimulatorBlackbox,
    campaign_config_for_preset,
    get_preset,
    latent_utility,
    oracle_best,
    throughput,
)


def run_one(args):
    preset_name, budget, seed = args
    preset = get_preset(preset_name)
    weights = WEIGHT_PRESETS[preset_name]
    started = time.time()
    campaign = Campaign(
        campaign_config_for_preset(preset_name, seed=seed),
        campaign_id=f"study-{preset_name}-{seed}",
    )
    trace = run_autonomous(campaign, SimulatorBlackbox(preset, seed), budget=budget)
    stage1 = [row for row in trace if row["stage"] == 1]
    quarter = max(1, len(stage1) // 4)
    infeasible_rate = lambda rows: sum(1 for r in rows if not r["feasible"]) / len(rows)
    result = {
        "seed": seed,
        "runtime_s": round(time.time() - started, 1),
        "evaluations": len(trace),
        "switch_at": campaign.stage_switch_iteration,
        "early_violation_rate": round(infeasible_rate(stage1[:quarter]), 3),
        "late_violation_rate": round(infeasible_rate(stage1[-quarter:]), 3),
    }
    try:
        record, _ = campaign.best_feasible()
        result["throughput"] = round(throughput(record.config, preset), 3)
        result["latent_utility"] = round(
            float(latent_utility(record.config.as_array()[None, :], preset, weights)[0]), 3
        )
    except KerfoptError:
        result["latent_utility"] = None
    return result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", choices=("bare_silicon", "product"), default="bare_silicon")
    parser.add_argument("--budget", type=int, default=140)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--oracle-samples", type=int, default=300_000)
    args = parser.parse_args()

    weights = WEIGHT_PRESETS[args.preset]
    _, oracle_utility, _ = oracle_best(
        get_preset(args.preset), weights, samples=args.oracle_samples, seed=123
    )
    print(f"oracle latent utility ({args.oracle_samples} samples): {oracle_utility:.3f}")

    jobs = [(args.preset, args.budget, seed) for seed in range(args.seeds)]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(run_one, jobs))

    for result in results:
        utility = result.get("latent_utility")
        ratio = None if utility is None else round(utility / oracle_utility, 3)
        print(json.dumps({**result, "oracle_ratio": ratio}))

    ratios = [
        r["latent_utility"] / oracle_utility for r in results if r.get("latent_utility") is not None
    ]
    if ratios:
        print(
            f"\nsummary: {len(ratios)}/{len(results)} runs feasible, "
            f"oracle ratio min/median/max = "
            f"{min(ratios):.3f}/{sorted(ratios)[len(ratios) // 2]:.3f}/{max(ratios):.3f}"
        )


if __name__ == "__main__":
    main()
