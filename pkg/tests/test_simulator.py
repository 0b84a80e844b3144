"""Synthetic wafer: determinism, throughput algebra, machine limits, latent
mechanism checks, noise calibration, and the brute-force optimum oracle."""

import numpy as np
import pytest

from kerfopt.acquisition import WEIGHT_PRESETS, UtilityWeights
from kerfopt.errors import MachineInfeasibleError, ValidationError
from kerfopt.machine import MachineLimits, ThroughputModel
from kerfopt.simulator import (
    evaluate_destructive,
    evaluate_optical,
    get_preset,
    known_constraints,
    latent_surfaces,
    latent_utility,
    oracle_best,
    requirement_feasible_mask,
    throughput,
)
from kerfopt.space import Configuration, default_space

SPACE = default_space()
BARE = get_preset("bare_silicon")
PRODUCT = get_preset("product")


def random_machine_feasible(rng, preset, n=1):
    """Rejection-sample grid-snapped machine-feasible configurations."""
    out = []
    while len(out) < n:
        unit = rng.random((4 * n, 11))
        phys = SPACE.snap_physical(SPACE.to_physical(unit))
        mask = preset.machine.feasible_mask(phys)
        out.extend(Configuration.from_array(row) for row in phys[mask])
    return out[:n]


class TestThroughput:
    def test_doubling_speeds_doubles_rate_without_overhead(self):
        tm = ThroughputModel(overhead_s=0.0)
        slow = Configuration(2.0, 2.0, 10.0, 5.0, 0.0, 2.0, 60_000.0, 3.0, 0.0, 2.0, 60_000.0)
        fast = Configuration(2.0, 4.0, 10.0, 5.0, 0.0, 4.0, 60_000.0, 3.0, 0.0, 4.0, 60_000.0)
        assert tm.wafers_per_hour(fast) == pytest.approx(2 * tm.wafers_per_hour(slow))

    def test_monotone_from_min_to_max_speeds(self):
        slow = Configuration(2.0, 1.0, 10.0, 5.0, 0.0, 1.0, 50_000.0, 3.0, 0.0, 1.0, 50_000.0)
        fast = Configuration(2.0, 10.0, 10.0, 5.0, 0.0, 10.0, 200_000.0, 3.0, 0.0, 10.0, 200_000.0)
        tm = ThroughputModel()
        assert tm.wafers_per_hour(slow) < tm.wafers_per_hour(fast)

    def test_strictly_increasing_in_each_speed_knob(self):
        tm = ThroughputModel()
        base = Configuration(2.0, 5.0, 10.0, 5.0, 0.0, 5.0, 100_000.0, 3.0, 0.0, 5.0, 100_000.0)
        t0 = tm.wafers_per_hour(base)
        for name, delta in [
            ("trench_step", 0.1),
            ("dice_step", 0.1),
            ("dice_frequency", 1000.0),
            ("recov_step", 0.1),
            ("recov_frequency", 1000.0),
        ]:
            bumped = Configuration.from_dict({**base.as_dict(), name: getattr(base, name) + delta})
            assert tm.wafers_per_hour(bumped) > t0

    def test_feasible_optimum_lands_in_calibration_range(self):
        for preset, wname in ((BARE, "bare_silicon"), (PRODUCT, "product")):
            cfg, _, feasible = oracle_best(preset, WEIGHT_PRESETS[wname], samples=40_000, seed=3)
            assert feasible
            assert 2.5 <= throughput(cfg, preset) <= 4.1


class TestKnownConstraints:
    def test_min_power_mid_focus_all_feasible(self):
        cfg = Configuration(0.5, 5.0, 14.0, 1.0, 0.0, 5.0, 120_000.0, 0.6, 0.0, 5.0, 120_000.0)
        assert np.all(known_constraints(cfg, PRODUCT) <= 0)

    def test_pulse_energy_cap_violated_at_max_power_min_frequency(self):
        cfg = Configuration(2.0, 5.0, 14.0, 10.0, 0.0, 5.0, 50_000.0, 3.0, 0.0, 5.0, 120_000.0)
        assert known_constraints(cfg, PRODUCT)[0] > 0

    def test_grid_step_lipschitz_bound(self):
        # One grid tick in any single dimension moves each constraint by
        # less than 0.5 (focus dominates: (2*50+10)*10/50^2 = 0.44).
        rng = np.random.default_rng(4)
        steps = np.array([p.step for p in SPACE.parameters])
        lows = np.array([p.low for p in SPACE.parameters])
        highs = np.array([p.high for p in SPACE.parameters])
        limits = MachineLimits()
        for _ in range(100):
            phys = SPACE.snap_physical(SPACE.to_physical(rng.random((1, 11))))[0]
            base = limits.evaluate_batch(phys[None, :])[0]
            for j in range(11):
                moved = phys.copy()
                moved[j] = min(highs[j], max(lows[j], moved[j] + steps[j]))
                delta = limits.evaluate_batch(moved[None, :])[0] - base
                assert np.all(np.abs(delta) < 0.5)

    def test_batch_matches_scalar_path(self):
        rng = np.random.default_rng(5)
        limits = MachineLimits()
        phys = SPACE.snap_physical(SPACE.to_physical(rng.random((50, 11))))
        batch = limits.evaluate_batch(phys)
        for i, row in enumerate(phys):
            assert np.allclose(batch[i], limits.evaluate(Configuration.from_array(row)))


class TestEvaluateOptical:
    def test_deterministic_given_config_and_seed(self):
        rng = np.random.default_rng(6)
        (cfg,) = random_machine_feasible(rng, BARE)
        a = evaluate_optical(cfg, BARE, seed=42)
        b = evaluate_optical(cfg, BARE, seed=42)
        assert a == b
        c = evaluate_optical(cfg, BARE, seed=43)
        assert c != a

    def test_min_dice_power_never_separates(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            phys = SPACE.snap_physical(SPACE.to_physical(rng.random((1, 11))))[0]
            phys[3] = 1.0
            assert latent_surfaces(phys[None, :], BARE)["separation"][0] < 1.0

    def test_unshielded_max_power_chips_product_wafers(self):
        rng = np.random.default_rng(8)
        tried = 0
        for _ in range(200):
            phys = SPACE.snap_physical(SPACE.to_physical(rng.random((1, 11))))[0]
            phys[0] = 0.5
            phys[3] = 10.0
            if not PRODUCT.machine.feasible_mask(phys[None, :])[0]:
                continue
            tried += 1
            assert latent_surfaces(phys[None, :], PRODUCT)["chipouts"][0] > 0.10
        assert tried > 20

    def test_chipout_channel_only_on_product(self):
        rng = np.random.default_rng(9)
        (cfg,) = random_machine_feasible(rng, BARE)
        _, con_bare = evaluate_optical(cfg, BARE, seed=0)
        _, con_prod = evaluate_optical(cfg, PRODUCT, seed=0)
        assert con_bare.chipouts is None
        assert con_prod.chipouts is not None

    def test_interlock_refuses_machine_infeasible(self):
        cfg = Configuration(2.0, 5.0, 14.0, 10.0, 0.0, 5.0, 50_000.0, 3.0, 0.0, 5.0, 120_000.0)
        with pytest.raises(MachineInfeasibleError):
            evaluate_optical(cfg, PRODUCT, seed=0)

    def test_violation_encoding_sign_convention(self):
        rng = np.random.default_rng(10)
        configs = random_machine_feasible(rng, PRODUCT, n=40)
        for cfg in configs:
            latent = latent_surfaces(cfg.as_array()[None, :], PRODUCT)
            _, con = evaluate_optical(cfg, PRODUCT, seed=1)
            viol = con.violations(PRODUCT.thresholds)
            if requirement_feasible_mask(latent, PRODUCT)[0]:
                assert all(v <= 1e-9 for v in viol.values())


class TestEvaluateDestructive:
    def test_deterministic_lists(self):
        rng = np.random.default_rng(11)
        (cfg,) = random_machine_feasible(rng, BARE)
        a = evaluate_destructive(cfg, BARE, 10, seed=3)
        b = evaluate_destructive(cfg, BARE, 10, seed=3)
        assert a == b
        assert len(a[0]) == len(a[1]) == 10

    def test_bad_rep_count_rejected(self):
        rng = np.random.default_rng(12)
        (cfg,) = random_machine_feasible(rng, BARE)
        with pytest.raises(ValidationError):
            evaluate_destructive(cfg, BARE, 0, seed=0)

    def test_recovery_bump_raises_front_strength(self):
        cfg, _, _ = oracle_best(BARE, WEIGHT_PRESETS["bare_silicon"], samples=20_000, seed=4)
        at_bump = cfg.as_array()
        at_bump[7], at_bump[8] = 3.4, 0.0
        off_bump = cfg.as_array()
        off_bump[7], off_bump[8] = 0.6, -50.0
        means = []
        for phys in (at_bump, off_bump):
            front, _ = evaluate_destructive(Configuration.from_array(phys), BARE, 1000, seed=5)
            means.append(np.mean(front))
        assert means[0] > means[1] + 50

    def test_empirical_noise_matches_calibration(self):
        rng = np.random.default_rng(13)
        (cfg,) = random_machine_feasible(rng, BARE)
        front, back = evaluate_destructive(cfg, BARE, 10_000, seed=6)
        assert np.std(front) == pytest.approx(50.0, abs=2.0)
        assert np.std(back) == pytest.approx(50.0, abs=2.0)


class TestOracle:
    def test_stable_across_seeds(self):
        _, u1, _ = oracle_best(PRODUCT, WEIGHT_PRESETS["product"], samples=60_000, seed=1)
        _, u2, _ = oracle_best(PRODUCT, WEIGHT_PRESETS["product"], samples=60_000, seed=2)
        assert abs(u1 - u2) / max(abs(u1), abs(u2)) < 0.01

    def test_bare_silicon_optimum_respects_every_band(self):
        cfg, _, feasible = oracle_best(BARE, WEIGHT_PRESETS["bare_silicon"], samples=40_000, seed=7)
        assert feasible
        latent = latent_surfaces(cfg.as_array()[None, :], BARE)
        assert BARE.width_band[0] <= latent["dicing_width"][0] <= BARE.width_band[1]
        assert latent["burr"][0] <= BARE.burr_max
        assert latent["front_cracks"][0] <= 0.10
        assert latent["corner_cracks"][0] <= 0.10
        assert latent["back_cracks"][0] <= 0.10
        assert latent["separation"][0] == 1.0

    def test_throughput_only_weights_match_coarse_exhaustive_scan(self):
        weights = UtilityWeights(0, 0, 0, 1.0, 0, 0)
        cfg, util, _ = oracle_best(BARE, weights, samples=60_000, seed=8)
        t_oracle = throughput(cfg, BARE)
        assert util == pytest.approx(t_oracle, abs=1e-9)

        # Exhaustive scan of a snapped 5-per-dimension grid, vectorized in
        # chunks over the flattened cartesian index.
        axes = np.array([np.linspace(p.low, p.high, 5) for p in SPACE.parameters])
        total = 5**11
        chunk = 2_000_000
        best_coarse = -np.inf
        for start in range(0, total, chunk):
            flat = np.arange(start, min(start + chunk, total))
            idx = np.array(np.unravel_index(flat, (5,) * 11)).T
            block = axes[np.arange(11)[None, :], idx]
            best_coarse = max(best_coarse, self._best_throughput(block))
        assert t_oracle >= best_coarse - 1e-9

    @staticmethod
    def _best_throughput(raw_block):
        phys = SPACE.snap_physical(raw_block)
        mask = BARE.machine.feasible_mask(phys)
        phys = phys[mask]
        if phys.shape[0] == 0:
            return -np.inf
        latent = latent_surfaces(phys, BARE)
        phys = phys[requirement_feasible_mask(latent, BARE)]
        if phys.shape[0] == 0:
            return -np.inf
        return float(np.max(latent_utility(phys, BARE, UtilityWeights(0, 0, 0, 1.0, 0, 0))))

    def test_feasible_volume_guarantee(self):
        rng = np.random.default_rng(14)
        phys = SPACE.snap_physical(SPACE.to_physical(rng.random((30_000, 11))))
        for preset in (BARE, PRODUCT):
            machine_ok = phys[preset.machine.feasible_mask(phys)]
            latent = latent_surfaces(machine_ok, preset)
            frac = requirement_feasible_mask(latent, preset).mean()
            assert frac >= 0.05
