"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line.  The closed-loop batteries (criteria 5-10) share two ten-seed run
fixtures executed on a small process pool; everything else runs inline.

Run with `pytest tests/test_acceptance.py -v -s` to watch the per-criterion
lines appear.
"""

from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ProcessPoolExecutor
from statistics import median

import numpy as np
import pytest
from click.testing import CliRunner

from kerfopt.acquisition import WEIGHT_PRESETS, filter_known, generate_candidates
from kerfopt.campaign import Campaign, run_autonomous
from kerfopt.cli import main as cli_main
from kerfopt.gp import GPModel, KernelHyperparameters
from kerfopt.machine import MachineLimits
from kerfopt.simulator import (
    SimulatorBlackbox,
    campaign_config_for_preset,
    get_preset,
    oracle_best,
)
from kerfopt.space import default_space
from kerfopt.trust_region import TrustRegionConfig, init_trust_region, update

from acceptance_runs import closed_loop_run

SPACE = default_space()


def conclude(index: int, description: str, ok: bool, detail: str = ""):
    line = f"ACCEPTANCE {index}: {'PASS' if ok else 'FAIL'} - {description}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# Shared closed-loop batteries
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def bare_runs():
    jobs = [("bare_silicon", 140, seed, False) for seed in range(10)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        return list(pool.map(closed_loop_run, jobs))


@pytest.fixture(scope="session")
def product_runs():
    jobs = [("product", 180, seed, True) for seed in range(10)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        return list(pool.map(closed_loop_run, jobs))


@pytest.fixture(scope="session")
def bare_oracle():
    _, utility, _ = oracle_best(
        get_preset("bare_silicon"), WEIGHT_PRESETS["bare_silicon"], samples=1_000_000, seed=9
    )
    return utility


@pytest.fixture(scope="session")
def product_oracle():
    _, utility, _ = oracle_best(
        get_preset("product"), WEIGHT_PRESETS["product"], samples=1_000_000, seed=9
    )
    return utility


# ---------------------------------------------------------------------------
# 1. GP oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_1_gp_oracle_equivalence():
    rng = np.random.default_rng(1001)
    started = time.time()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 51))
        d = int(rng.integers(1, 12))
        x = rng.random((n, d))
        y = rng.standard_normal(n)
        hyper = KernelHyperparameters(
            tuple(rng.uniform(0.1, 2.0, d)),
            float(rng.uniform(0.2, 4.0)),
            float(rng.uniform(1e-4, 0.5)),
        )
        model = GPModel(x, y, hyper)
        x_test = rng.random((8, d))
        mean, var = model.predict(x_test)

        # Naive dense solve on the same (jittered) system.
        ls = hyper.lengthscale_array()
        diff = (x[:, None, :] - x[None, :, :]) / ls
        r = np.sqrt(np.maximum((diff**2).sum(-1), 0))
        k_train = hyper.signal_variance * (1 + np.sqrt(5) * r + 5 / 3 * r**2) * np.exp(-np.sqrt(5) * r)
        k_y = k_train + (hyper.noise_variance + model.jitter_used) * np.eye(n)
        k_inv = np.linalg.inv(k_y)
        diff_t = (x_test[:, None, :] - x[None, :, :]) / ls
        r_t = np.sqrt(np.maximum((diff_t**2).sum(-1), 0))
        k_star = hyper.signal_variance * (1 + np.sqrt(5) * r_t + 5 / 3 * r_t**2) * np.exp(-np.sqrt(5) * r_t)
        mean_oracle = k_star @ k_inv @ y
        var_oracle = hyper.signal_variance - np.sum((k_star @ k_inv) * k_star, axis=1)
        worst = max(
            worst,
            float(np.max(np.abs(mean - mean_oracle))),
            float(np.max(np.abs(var - np.maximum(var_oracle, 1e-12)))),
        )
    elapsed = time.time() - started
    conclude(
        1,
        "posterior mean/variance match dense-solve oracle (200 datasets, <=1e-8)",
        worst <= 1e-8 and elapsed < 5.0,
        f"worst abs err {worst:.2e}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 2. Marginal-likelihood gradient check
# ---------------------------------------------------------------------------


def test_criterion_2_lml_gradient_check():
    rng = np.random.default_rng(2002)
    started = time.time()
    worst = 0.0
    step = 1e-5
    for _ in range(50):
        n = int(rng.integers(3, 31))
        d = int(rng.integers(1, 12))
        x = rng.random((n, d))
        y = rng.standard_normal(n)
        hyper = KernelHyperparameters(
            tuple(rng.uniform(0.15, 1.5, d)),
            float(rng.uniform(0.3, 3.0)),
            float(rng.uniform(0.01, 0.4)),
        )
        model = GPModel(x, y, hyper)
        _, grad = model.log_marginal_likelihood_and_grad()
        theta = hyper.to_log_vector()
        for k in range(d + 2):
            plus, minus = theta.copy(), theta.copy()
            plus[k] += step
            minus[k] -= step
            numeric = (
                GPModel(x, y, KernelHyperparameters.from_log_vector(plus)).log_marginal_likelihood()
                - GPModel(x, y, KernelHyperparameters.from_log_vector(minus)).log_marginal_likelihood()
            ) / (2 * step)
            scale = max(abs(numeric), abs(grad[k]), 1e-4)
            worst = max(worst, abs(grad[k] - numeric) / scale)
    elapsed = time.time() - started
    conclude(
        2,
        "analytic LML gradients match central differences (50 points, rel<=1e-3)",
        worst <= 1e-3 and elapsed < 5.0,
        f"worst rel err {worst:.2e}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 3. Constraint-filter exactness
# ---------------------------------------------------------------------------


class _LinearLimits(MachineLimits):
    def evaluate(self, config):
        u = SPACE.config_to_unit(config)
        return np.array([u[0] + u[3] - 1.0])


class _BallLimits(MachineLimits):
    def evaluate(self, config):
        u = SPACE.config_to_unit(config)
        return np.array([float(np.sum((u - 0.5) ** 2)) - 0.55])


class _ProductLimits(MachineLimits):
    def evaluate(self, config):
        u = SPACE.config_to_unit(config)
        return np.array([u[1] * u[6] - 0.4, 0.1 - u[2]])


def test_criterion_3_filter_exactness():
    candidates = generate_candidates(SPACE, np.zeros(11), np.ones(11), 10_000, seed=33)
    ok = True
    details = []
    for limits in (_LinearLimits(), _BallLimits(), _ProductLimits()):
        kept = filter_known(SPACE, candidates, limits)
        brute = np.array(
            [row for row in candidates if np.all(limits.evaluate(SPACE.unit_to_config(row)) <= 0)]
        ).reshape(-1, 11)
        exact = kept.shape == brute.shape and np.array_equal(kept, brute)
        zero_violations = all(
            np.all(limits.evaluate(SPACE.unit_to_config(row)) <= 0) for row in kept
        )
        ok &= exact and zero_violations
        details.append(f"{limits.__class__.__name__}: {len(kept)}/{len(candidates)}")
    conclude(3, "rejection filter equals brute-force subset on 3 constraint sets", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 4. Trust-region dynamics
# ---------------------------------------------------------------------------


def test_criterion_4_trust_region_dynamics():
    config = TrustRegionConfig(
        tau_init=0.8, tau_max=1.6, tau_threshold=0.015, success_tolerance=3, failure_tolerance=5
    )
    script = [True] * 3 + [False] * 5 + [True] * 2 + [False] * 5 + [False] * 25 + [True] * 9
    state = init_trust_region(4, config)
    tau, succ, fail = 0.8, 0, 0
    terminated = False
    ok = True
    for improved in script:
        if terminated:
            break
        # Independent 10-line reference simulation.
        if improved:
            succ, fail = succ + 1, 0
            if succ >= 3:
                tau, succ = min(2 * tau, 1.6), 0
        else:
            fail, succ = fail + 1, 0
            if fail >= 5:
                tau, fail = tau / 2, 0
        terminated = tau < 0.015
        state = update(state, improved)
        ok &= state.side_length == tau and state.terminated == terminated
    expansion = update(update(update(init_trust_region(2, config), True), True), True)
    ok &= expansion.side_length == 1.6
    conclude(4, "expand x2 after 3 successes, halve after 5 failures, terminate below 0.015", ok)


# ---------------------------------------------------------------------------
# 5-10. Closed-loop batteries
# ---------------------------------------------------------------------------


def test_criterion_5_stage_discipline(bare_runs, product_runs):
    ok = True
    for run in bare_runs + product_runs:
        stage2_rows = [r for r in run["trace"] if r["stage"] == 2]
        expected = 2 * run["reps"] * len(stage2_rows)
        ok &= run["destructive_points"] == expected
        ok &= run["quarantined_points"] == 0
        stage1_rows = [r for r in run["trace"] if r["stage"] == 1]
        if run["switch_iteration"] is not None:
            ok &= all(r["iter"] <= run["switch_iteration"] for r in stage1_rows)
    conclude(5, "destructive counts: 0 before switch, 2 x reps x stage-2 evals after", ok)


def test_criterion_6_run_sim_determinism(tmp_path):
    ok = True
    details = []
    for preset in ("bare_silicon", "product"):
        outputs = []
        elapsed = []
        for attempt in range(2):
            data_dir = str(tmp_path / f"{preset}-{attempt}")
            runner = CliRunner()
            started = time.time()
            result = runner.invoke(cli_main, [
                "run-sim", "--preset", preset, "--budget", "120", "--seed", "7",
                "--data-dir", data_dir,
            ])
            elapsed.append(time.time() - started)
            assert result.exit_code == 0, result.output
            export = runner.invoke(cli_main, [
                "export-trace", "--id", f"sim-{preset}-7", "--format", "csv",
                "--data-dir", data_dir,
            ])
            outputs.append(export.output)
        identical = outputs[0] == outputs[1]
        fast = max(elapsed) < 300.0
        ok &= identical and fast
        details.append(f"{preset}: identical={identical}, {max(elapsed):.0f}s")
    conclude(6, "run-sim --seed 7 twice per preset gives bitwise-identical traces in <5min", ok, "; ".join(details))


def test_criterion_7_bare_silicon_quality(bare_runs, bare_oracle):
    hits = 0
    ratios = []
    for run in bare_runs:
        if run["incumbent_feasible"] and run["incumbent_latent_utility"] is not None:
            ratio = run["incumbent_latent_utility"] / bare_oracle
            ratios.append(round(ratio, 3))
            if ratio >= 0.90:
                hits += 1
        else:
            ratios.append(None)
    med = median(run["elapsed_s"] for run in bare_runs)
    conclude(
        7,
        "bare silicon: >=8/10 seeds reach 90% of oracle utility, median run <10min",
        hits >= 8 and med < 600.0,
        f"hits={hits}/10, ratios={ratios}, median {med:.0f}s",
    )


def test_criterion_8_product_quality_and_constraint_learning(product_runs, product_oracle):
    quality_hits = 0
    learning_hits = 0
    ratios = []
    freqs = []
    for run in product_runs:
        if run["incumbent_feasible"] and run["incumbent_latent_utility"] is not None:
            ratio = run["incumbent_latent_utility"] / product_oracle
            ratios.append(round(ratio, 3))
            if ratio >= 0.85:
                quality_hits += 1
        else:
            ratios.append(None)
        stage1 = [r for r in run["trace"] if r["stage"] == 1]
        quarter = max(1, len(stage1) // 4)
        head = stage1[:quarter]
        tail = stage1[-quarter:]
        freq = lambda rows: sum(1 for r in rows if not r["feasible"]) / len(rows)
        q1, q4 = freq(head), freq(tail)
        freqs.append((round(q1, 2), round(q4, 2)))
        if q4 <= 0.5 * q1:
            learning_hits += 1
    conclude(
        8,
        "product: >=7/10 at 85% of oracle; >=8/10 halve stage-1 violation frequency",
        quality_hits >= 7 and learning_hits >= 8,
        f"quality={quality_hits}/10 {ratios}; learning={learning_hits}/10 {freqs}",
    )


def test_criterion_9_incumbent_monotonicity(bare_runs, product_runs):
    ok = True
    for run in bare_runs + product_runs:
        for stage in (1, 2):
            series = [
                r["utility_best"]
                for r in run["trace"]
                if r["stage"] == stage and r["utility_best"] is not None
            ]
            ok &= all(b >= a - 1e-12 for a, b in zip(series, series[1:]))
    conclude(9, "best-so-far feasible utility non-decreasing within each stage", ok)


def test_criterion_10_map_whatif_ordering(product_runs):
    ordered = 0
    usable = 0
    pairs = []
    for run in product_runs:
        maps = run["maps"] or {}
        speed = maps.get("speed_first", {})
        strength = maps.get("strength_first", {})
        if "throughput" in speed and "throughput" in strength:
            usable += 1
            pairs.append((round(speed["throughput"], 2), round(strength["throughput"], 2)))
            if speed["throughput"] >= strength["throughput"]:
                ordered += 1
    conclude(
        10,
        "speed-weighted MAP has throughput >= strength-weighted MAP in >=9/10 seeds",
        ordered >= 9 and usable == 10,
        f"ordered={ordered}/{usable}, (speed, strength)={pairs}",
    )


# ---------------------------------------------------------------------------
# 11. Persistence equivalence
# ---------------------------------------------------------------------------


def test_criterion_11_persistence_equivalence(tmp_path):
    from kerfopt.persistence import load_record, save_record

    rng = np.random.default_rng(1111)
    ok = True
    for case in range(20):
        seed = int(rng.integers(0, 10_000))
        n_init = int(rng.integers(3, 7))
        budget = n_init + int(rng.integers(0, 3)) * 2
        preset_name = "bare_silicon" if case % 2 == 0 else "product"
        config = campaign_config_for_preset(
            preset_name,
            seed=seed,
            n_init=n_init,
            batch_size=2,
            candidate_count=150,
            fit_restarts_initial=2,
            fit_restarts_refit=1,
            fit_maxiter=15,
            deterministic_clock=True,
        )
        campaign = Campaign(config, campaign_id=f"mid-{case}")
        blackbox = SimulatorBlackbox(get_preset(preset_name), seed)
        run_autonomous(campaign, blackbox, budget=budget)
        path = tmp_path / f"c{case}.json"
        save_record(campaign, path)
        resumed = load_record(path)
        ok &= resumed.to_dict() == campaign.to_dict()
        continuous = campaign.ask()
        reloaded = resumed.ask()
        ok &= continuous == reloaded

    # Event-log replay reconstructs the state exactly.
    config = campaign_config_for_preset(
        "bare_silicon", seed=5, n_init=4, candidate_count=150,
        fit_restarts_initial=2, fit_restarts_refit=1, fit_maxiter=15,
        deterministic_clock=True,
    )
    campaign = Campaign(config, campaign_id="replayed")
    run_autonomous(campaign, SimulatorBlackbox(get_preset("bare_silicon"), 5), budget=10)
    replayed = Campaign.replay(config, copy.deepcopy(campaign.events), campaign_id="replayed")
    ok &= json.dumps(replayed.to_dict()) == json.dumps(campaign.to_dict())
    conclude(11, "save->load->ask bit-equal on 20 mid-campaign states; replay exact", ok)
