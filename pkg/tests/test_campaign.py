"""Campaign lifecycle: initialization, ask/tell bookkeeping, stage
discipline, incumbents, autonomous runs, event replay, and what-if
extraction."""

import copy
import json

import numpy as np
import pytest

from kerfopt.acquisition import WEIGHT_PRESETS, UtilityWeights
from kerfopt.campaign import Campaign, CampaignConfig, run_autonomous
from kerfopt.errors import (
    ConfigurationError,
    LifecycleError,
    NoFeasibleIncumbentError,
    PendingBatchError,
    UnknownConfigError,
    ValidationError,
)
from kerfopt.observations import (
    ConstraintObservation,
    ConstraintThresholds,
    ObjectiveObservation,
)
from kerfopt.simulator import (
    SimulatorBlackbox,
    campaign_config_for_preset,
    get_preset,
)
from kerfopt.space import Configuration, default_space

SPACE = default_space()


def quick_config(seed=0, **overrides):
    """Small, fast campaign configuration for unit tests."""
    defaults = dict(
        n_init=4,
        candidate_count=250,
        fit_restarts_initial=2,
        fit_restarts_refit=1,
        fit_maxiter=25,
        deterministic_clock=True,
    )
    defaults.update(overrides)
    return campaign_config_for_preset("bare_silicon", seed=seed, **defaults)


def feasible_constraints(chip=None):
    return ConstraintObservation(0.0, 0.0, 0.0, 1.0, chip)


def optical(width=29.0, mod=30.0, burr=1.0, front=(), back=()):
    return ObjectiveObservation(width, mod, burr, tuple(front), tuple(back))


@pytest.fixture(scope="module")
def finished_run():
    """A short bare-silicon run pushed into stage 2, shared by read-only
    tests: 20 autonomous stage-1 evaluations, a manual stage switch, then
    three destructive batches."""
    config = campaign_config_for_preset(
        "bare_silicon",
        seed=11,
        n_init=6,
        candidate_count=300,
        fit_restarts_initial=2,
        fit_restarts_refit=1,
        fit_maxiter=30,
        deterministic_clock=True,
    )
    campaign = Campaign(config, campaign_id="shared")
    blackbox = SimulatorBlackbox(get_preset("bare_silicon"), seed=11)
    run_autonomous(campaign, blackbox, budget=20)
    if campaign.stage == 1:
        campaign.switch_stage()
    for _ in range(3):
        for cid, cfg in campaign.ask(q=2):
            objective, constraints = blackbox.optical(cfg)
            front, back = blackbox.destructive(cfg, config.destructive_reps)
            campaign.tell(
                cid,
                ObjectiveObservation(
                    objective.dicing_width,
                    objective.mod_width,
                    objective.burr,
                    tuple(front),
                    tuple(back),
                ),
                constraints,
            )
    return campaign


class TestInitialize:
    def test_seed_configs_come_first_verbatim_after_snapping(self):
        config = quick_config(n_init=9)
        campaign = Campaign(config)
        seeds = [
            Configuration(2.01, 5.04, 14.1, 5.02, 1.0, 5.06, 120_400.0, 3.41, -2.0, 5.0, 119_800.0),
            Configuration(2.5, 4.0, 10.0, 4.0, 0.0, 4.0, 100_000.0, 3.0, 10.0, 6.0, 130_000.0),
            Configuration(1.5, 6.0, 20.0, 6.0, -10.0, 3.0, 150_000.0, 2.0, 0.0, 4.0, 110_000.0),
            Configuration(3.0, 3.0, 8.0, 3.0, 20.0, 6.0, 90_000.0, 4.0, -20.0, 7.0, 140_000.0),
        ]
        batch = campaign.initialize(seeds)
        assert len(batch) == 9
        for (_, got), raw in zip(batch[:4], seeds):
            assert got == SPACE.snap_config(raw)
        for _, cfg in batch:
            assert SPACE.is_on_grid(cfg)
            assert config.machine.is_feasible(cfg)

    def test_single_point_without_seeds(self):
        campaign = Campaign(quick_config(n_init=1))
        batch = campaign.initialize()
        assert len(batch) == 1
        assert SPACE.is_on_grid(batch[0][1])

    def test_fixed_seed_reproducible(self):
        a = Campaign(quick_config(seed=5)).initialize()
        b = Campaign(quick_config(seed=5)).initialize()
        assert a == b

    def test_machine_infeasible_seed_rejected(self):
        campaign = Campaign(quick_config())
        bad = Configuration(2.0, 5.0, 14.0, 10.0, 0.0, 5.0, 50_000.0, 3.0, 0.0, 5.0, 120_000.0)
        with pytest.raises(ValidationError):
            campaign.initialize([bad])

    def test_double_initialize_rejected(self):
        campaign = Campaign(quick_config())
        campaign.initialize()
        with pytest.raises(LifecycleError):
            campaign.initialize()


class TestTell:
    def _initialized(self, seed=0, **overrides):
        campaign = Campaign(quick_config(seed=seed, **overrides))
        batch = campaign.initialize()
        return campaign, batch

    def test_better_feasible_observation_takes_incumbent(self):
        campaign, batch = self._initialized(n_init=2)
        (id1, _), (id2, _) = batch
        campaign.tell(id1, optical(burr=2.0), feasible_constraints())
        assert campaign.incumbent_id == id1
        campaign.tell(id2, optical(burr=0.3), feasible_constraints())
        assert campaign.incumbent_id == id2
        # The initial design never moves the trust region.
        assert campaign.trust.success_count == 0

    def test_asked_batch_updates_trust_region_once(self):
        campaign, batch = self._initialized(n_init=2, seed=8)
        for cid, _ in batch:
            campaign.tell(cid, optical(), feasible_constraints())
        asked = campaign.ask(q=2)
        # First tell improves, second does not: the region registers one
        # success for the whole batch, applied when it completes.
        campaign.tell(asked[0][0], optical(burr=0.1), feasible_constraints())
        assert campaign.trust.success_count == 0
        campaign.tell(asked[1][0], optical(burr=3.5), feasible_constraints())
        assert campaign.trust.success_count == 1
        assert campaign.trust.failure_count == 0

    def test_excess_chipouts_mark_infeasible_with_positive_violation(self):
        config = campaign_config_for_preset(
            "product", seed=0, n_init=1, deterministic_clock=True
        )
        campaign = Campaign(config)
        ((cid, _),) = campaign.initialize()
        record = campaign.tell(cid, optical(), ConstraintObservation(0.0, 0.0, 0.0, 1.0, 0.5))
        assert record.violations["chipouts"] == pytest.approx(0.4)
        assert not record.feasible

    def test_destructive_quarantined_during_stage_1(self):
        campaign, batch = self._initialized(n_init=2)
        (id1, _), _ = batch
        strengths = tuple(600.0 + i for i in range(10))
        record = campaign.tell(
            id1, optical(front=strengths, back=strengths), feasible_constraints()
        )
        assert not record.objective.has_destructive
        assert record.quarantined_front == strengths
        x, y = campaign._objective_data("front_strength")
        assert y.size == 0
        assert any(
            e["type"] == "told" and "warning" in e["payload"] for e in campaign.events
        )

    def test_unknown_config_id_rejected(self):
        campaign, _ = self._initialized()
        with pytest.raises(UnknownConfigError):
            campaign.tell("cfg-9999", optical(), feasible_constraints())

    def test_malformed_fraction_rejected_at_construction(self):
        with pytest.raises(ValidationError):
            ConstraintObservation(0.0, 0.0, 0.0, 1.0, 1.4)

    def test_missing_chipouts_rejected_for_product(self):
        config = campaign_config_for_preset("product", seed=0, n_init=1, deterministic_clock=True)
        campaign = Campaign(config)
        ((cid, _),) = campaign.initialize()
        with pytest.raises(ValidationError):
            campaign.tell(cid, optical(), feasible_constraints(chip=None))


class TestBestFeasible:
    def _with_tells(self, observations):
        campaign = Campaign(quick_config(n_init=len(observations)))
        batch = campaign.initialize()
        for (cid, _), (obj, con) in zip(batch, observations):
            campaign.tell(cid, obj, con)
        return campaign

    def test_single_feasible_returned(self):
        campaign = self._with_tells([(optical(), feasible_constraints())])
        record, _ = campaign.best_feasible()
        assert record.iteration == 1

    def test_tie_breaks_to_earlier_iteration(self):
        same = optical(width=29.0, mod=30.0, burr=1.0)
        campaign = self._with_tells(
            [(same, feasible_constraints()), (same, feasible_constraints())]
        )
        records = campaign.observations
        # Identical configurations would give identical utilities only by
        # luck of throughput; force equality by telling identical optics on
        # the same throughput is not guaranteed, so check the rule directly.
        u = [campaign.stage_utility(r) for r in records]
        record, _ = campaign.best_feasible()
        if u[0] == u[1]:
            assert record.iteration == 1
        else:
            assert record.iteration == int(np.argmax(u)) + 1

    def test_matches_linear_scan_oracle(self, finished_run):
        campaign = finished_run
        best, value = campaign.best_feasible()
        scan_best, scan_value = None, -np.inf
        for record in campaign.observations:
            if not record.feasible:
                continue
            u = campaign.stage_utility(record)
            if u is not None and u > scan_value:
                scan_best, scan_value = record, u
        assert best.config_id == scan_best.config_id
        assert value == pytest.approx(scan_value)

    def test_none_feasible_raises_typed_error(self):
        campaign = self._with_tells(
            [(optical(), ConstraintObservation(0.5, 0.0, 0.0, 1.0))]
        )
        with pytest.raises(NoFeasibleIncumbentError):
            campaign.best_feasible()


class TestAsk:
    def test_batch_is_on_grid_machine_feasible_inside_region(self):
        campaign = Campaign(quick_config(seed=3))
        for cid, _ in campaign.initialize():
            campaign.tell(cid, optical(), feasible_constraints())
        batch = campaign.ask(q=2)
        assert len(batch) == 2
        lower, upper = campaign.last_ask_bounds
        steps = np.array([p.step / (p.high - p.low) for p in SPACE.parameters])
        for _, cfg in batch:
            assert SPACE.is_on_grid(cfg)
            assert campaign.config.machine.is_feasible(cfg)
            unit = SPACE.config_to_unit(cfg)
            assert np.all(unit >= lower - steps - 1e-9)
            assert np.all(unit <= upper + steps + 1e-9)

    def test_identical_serialized_state_asks_identically(self):
        campaign = Campaign(quick_config(seed=4))
        for cid, _ in campaign.initialize():
            campaign.tell(cid, optical(), feasible_constraints())
        snapshot = campaign.to_dict()
        a = Campaign.from_dict(copy.deepcopy(snapshot)).ask()
        b = Campaign.from_dict(copy.deepcopy(snapshot)).ask()
        assert a == b

    def test_pending_batch_blocks_second_ask(self):
        campaign = Campaign(quick_config(seed=5))
        for cid, _ in campaign.initialize():
            campaign.tell(cid, optical(), feasible_constraints())
        campaign.ask()
        with pytest.raises(PendingBatchError):
            campaign.ask()

    def test_all_infeasible_history_still_asks(self):
        campaign = Campaign(quick_config(seed=6))
        for cid, _ in campaign.initialize():
            campaign.tell(cid, optical(), ConstraintObservation(0.9, 0.0, 0.0, 1.0))
        assert campaign.incumbent_id is None
        batch = campaign.ask(q=2)
        assert len(batch) == 2


class TestStageSwitch:
    def test_manual_switch_releases_quarantine(self):
        campaign = Campaign(quick_config(n_init=2))
        (id1, _), (id2, _) = campaign.initialize()
        strengths = tuple(640.0 + i for i in range(10))
        campaign.tell(id1, optical(front=strengths, back=strengths), feasible_constraints())
        campaign.tell(id2, optical(), feasible_constraints())
        campaign.switch_stage()
        assert campaign.stage == 2
        x, y = campaign._objective_data("front_strength")
        assert y.size == 10
        # The released record becomes the stage-2 incumbent.
        assert campaign.incumbent_id == id1
        assert campaign.trust.side_length == pytest.approx(
            campaign.config.trust_region.tau_init * campaign.config.stage2_tau_factor
        )

    def test_double_switch_rejected(self):
        campaign = Campaign(quick_config(n_init=1))
        ((cid, _),) = campaign.initialize()
        campaign.tell(cid, optical(), feasible_constraints())
        campaign.switch_stage()
        with pytest.raises(LifecycleError):
            campaign.switch_stage()


class TestRunAutonomous:
    def test_budget_equal_to_initial_design_does_no_asks(self):
        config = quick_config(seed=7, n_init=5)
        campaign = Campaign(config)
        blackbox = SimulatorBlackbox(get_preset("bare_silicon"), seed=7)
        trace = run_autonomous(campaign, blackbox, budget=5)
        assert len(trace) == 5
        assert not any(e["type"] == "asked" for e in campaign.events)

    def test_budget_below_initial_design_rejected(self):
        campaign = Campaign(quick_config(n_init=5))
        with pytest.raises(ConfigurationError):
            run_autonomous(campaign, SimulatorBlackbox(get_preset("bare_silicon"), 0), budget=4)

    def test_stage_discipline_and_destructive_count(self, finished_run):
        campaign = finished_run
        switch = campaign.stage_switch_iteration
        stage2_rows = [r for r in campaign.trace if r["stage"] == 2]
        for record in campaign.observations:
            if switch is None or record.iteration <= switch:
                assert record.stage_at_tell == 1
                assert not record.objective.has_destructive or record.quarantined_front
        destructive = sum(
            len(r.objective.front_strengths) + len(r.objective.back_strengths)
            for r in campaign.observations
        )
        assert destructive == 2 * campaign.config.destructive_reps * len(stage2_rows)

    def test_incumbent_utility_monotone_within_stages(self, finished_run):
        for stage in (1, 2):
            series = [
                r["utility_best"]
                for r in finished_run.trace
                if r["stage"] == stage and r["utility_best"] is not None
            ]
            assert all(b >= a - 1e-12 for a, b in zip(series, series[1:]))

    def test_same_seed_gives_bitwise_identical_traces(self):
        def run_once():
            config = quick_config(seed=13, n_init=4)
            campaign = Campaign(config, campaign_id="det")
            blackbox = SimulatorBlackbox(get_preset("bare_silicon"), seed=13)
            return run_autonomous(campaign, blackbox, budget=16)

        assert json.dumps(run_once()) == json.dumps(run_once())


class TestSerializationAndReplay:
    def test_round_trip_preserves_every_field(self, finished_run):
        snapshot = finished_run.to_dict()
        clone = Campaign.from_dict(copy.deepcopy(snapshot))
        assert clone.to_dict() == snapshot

    def test_replay_reconstructs_state_exactly(self):
        config = quick_config(seed=17, n_init=4)
        campaign = Campaign(config, campaign_id="rp")
        blackbox = SimulatorBlackbox(get_preset("bare_silicon"), seed=17)
        run_autonomous(campaign, blackbox, budget=12)
        replayed = Campaign.replay(config, campaign.events, campaign_id="rp")
        assert replayed.to_dict() == campaign.to_dict()

    def test_save_load_ask_equals_continuous_ask(self):
        campaign = Campaign(quick_config(seed=19))
        for cid, _ in campaign.initialize():
            campaign.tell(cid, optical(), feasible_constraints())
        snapshot = copy.deepcopy(campaign.to_dict())
        continuous = campaign.ask()
        resumed = Campaign.from_dict(snapshot).ask()
        assert continuous == resumed


class TestTransferPriors:
    def test_exported_priors_seed_a_follow_up_campaign(self, finished_run):
        priors = finished_run.export_transfer_priors()
        assert "dicing_width" in priors and "front_cracks" in priors
        follow_up = Campaign(
            quick_config(seed=23, transfer_priors=priors), campaign_id="follow"
        )
        assert follow_up.hyper_priors["dicing_width"].reference == (
            finished_run.last_hyper["dicing_width"]
        )
        snapshot = follow_up.to_dict()
        assert Campaign.from_dict(copy.deepcopy(snapshot)).to_dict() == snapshot


class TestMapEstimate:
    def test_requires_stage_two(self):
        campaign = Campaign(quick_config(n_init=1))
        ((cid, _),) = campaign.initialize()
        campaign.tell(cid, optical(), feasible_constraints())
        with pytest.raises(LifecycleError):
            campaign.map_estimate(WEIGHT_PRESETS["bare_silicon"])

    def test_all_zero_weights_rejected(self, finished_run):
        with pytest.raises(ConfigurationError):
            finished_run.map_estimate(UtilityWeights(0, 0, 0, 0, 0, 0))

    def test_zero_feasibility_level_is_unconstrained_argmax(self, finished_run):
        weights = finished_run.config.weights
        free = finished_run.map_estimate(weights, feasibility_level=0.0, pool_size=4000)
        strict = finished_run.map_estimate(weights, feasibility_level=0.9, pool_size=4000)
        assert free["utility"] >= strict["utility"] - 1e-9
        assert finished_run.config.machine.is_feasible(free["config"])
        assert SPACE.is_on_grid(free["config"])

    def test_campaign_weights_beat_stored_incumbent_posterior_utility(self, finished_run):
        weights = finished_run.config.weights
        result = finished_run.map_estimate(weights, feasibility_level=0.0, pool_size=4000)
        incumbent, _ = finished_run.best_feasible()
        pool = finished_run.space.to_unit(incumbent.config.as_array())[None, :]
        root = np.random.SeedSequence([int(finished_run.config.seed), 0x3A9, finished_run.iteration])
        seeds = [int(c.generate_state(1)[0]) for c in root.spawn(20)]
        gp_obj, _ = finished_run._fit_models(refit=True, seeds=seeds[:16], store=False)
        means = {name: v[0][0] for name, v in gp_obj.predict(pool).items()}
        incumbent_posterior_utility = (
            weights.w_throughput * finished_run.config.throughput.wafers_per_hour(incumbent.config)
            - weights.w_width * abs(means["dicing_width"] - weights.width_target)
            - weights.w_mod * abs(means["mod_width"] - weights.mod_target)
            - weights.w_burr * means["burr"]
            + weights.w_front * (means["front_strength"] - weights.strength_base)
            + weights.w_back * (means["back_strength"] - weights.strength_base)
        )
        assert result["utility"] >= incumbent_posterior_utility - 1e-9
