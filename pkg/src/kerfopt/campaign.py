"""Campaign orchestration: the ask/tell optimization loop.

A campaign owns the two measurement datasets (objective and constraint
channels), the two-stage fidelity state, the trust region, and an append-only
event log.  ``ask`` refits the surrogate models, recenters the trust region
on the incumbent, generates machine-feasible candidates and runs batched
constrained Thompson sampling; ``tell`` ingests measurements, tracks
feasibility and the best-so-far point, and drives the trust-region schedule.

Stage 1 optimizes an optical-only surrogate utility; destructive strength
data told during stage 1 is quarantined.  When the stage-1 trust region
collapses below its threshold the campaign switches to stage 2: quarantined
strength data is released, the full utility takes over, and the trust region
restarts at half its initial size.  A terminated stage-2 region completes
the campaign.

All randomness is derived from (campaign seed, draw counter), so a
serialized campaign resumes bit-for-bit and the event log can be replayed
into an identical state.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from . import acquisition
from .acquisition import UtilityWeights, stage1_weights, utility
from .errors import (
    CampaignCompleteError,
    ConfigurationError,
    ContractViolationError,
    InfeasibleSpaceError,
    IntegrityError,
    LifecycleError,
    NoFeasibleCandidatesError,
    NoFeasibleIncumbentError,
    PendingBatchError,
    ThresholdTooStrictError,
    UnknownConfigError,
    ValidationError,
)
from .gp import KernelHyperparameters, LogNormalPriors, MultiOutputGP
from .machine import MachineLimits, ThroughputModel
from .observations import ConstraintObservation, ConstraintThresholds, ObjectiveObservation
from .space import Configuration, ParameterSpace, default_space
from .trust_region import (
    TrustRegionConfig,
    TrustRegionState,
    init_trust_region,
    recenter,
    region_bounds,
    update,
)

__all__ = ["CampaignConfig", "Campaign", "ObservationRecord", "run_autonomous"]

OPTICAL_OBJECTIVES = ("dicing_width", "mod_width", "burr")
STRENGTH_OBJECTIVES = ("front_strength", "back_strength")

TRACE_COLUMNS = (
    "iter",
    "stage",
    "tau",
    "utility_best",
    "viol_front",
    "viol_corner",
    "viol_back",
    "viol_sep",
    "viol_chip",
)


@dataclass(frozen=True)
class CampaignConfig:
    """Immutable snapshot of everything a campaign needs to be reproducible."""

    weights: UtilityWeights
    thresholds: ConstraintThresholds = field(default_factory=ConstraintThresholds)
    machine: MachineLimits = field(default_factory=MachineLimits)
    throughput: ThroughputModel = field(default_factory=ThroughputModel)
    n_init: int = 9
    batch_size: int = 2
    candidate_count: int = 1000
    destructive_reps: int = 10
    seed: int = 0
    trust_region: TrustRegionConfig | None = None
    fit_restarts_initial: int = 6
    fit_restarts_refit: int = 1
    fit_maxiter: int = 50
    refit_every: int = 1
    stage2_tau_factor: float = 0.5
    stage1_tau_threshold: float = 0.15
    # An observation "improves" when it beats the incumbent by the larger of
    # these two margins.  Margins at the measurement-noise scale stop lucky
    # re-measurements from endlessly resetting the trust-region failure
    # counter.
    improvement_tol: float = 0.02
    improvement_rel_tol: float = 1e-3
    deterministic_clock: bool = False
    # Optional transfer-learning warm start: per-output log-normal priors
    # centered on hyperparameters fitted in an earlier campaign on a related
    # material.
    transfer_priors: dict | None = None

    def __post_init__(self):
        self.weights.require_some_weight()
        if self.n_init < 1:
            raise ConfigurationError("n_init must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.destructive_reps < 1:
            raise ConfigurationError("destructive_reps must be >= 1")
        if self.refit_every < 1:
            raise ConfigurationError("refit_every must be >= 1")
        if not (0 < self.stage2_tau_factor <= 1):
            raise ConfigurationError("stage2_tau_factor must be in (0, 1]")
        if self.trust_region is None:
            dim = len(default_space().parameters)
            object.__setattr__(
                self,
                "trust_region",
                TrustRegionConfig(
                    failure_tolerance=max(5, math.ceil(dim / self.batch_size))
                ),
            )
        if not (self.trust_region.tau_threshold <= self.stage1_tau_threshold < self.trust_region.tau_init):
            raise ConfigurationError(
                "stage1_tau_threshold must lie in [tau_threshold, tau_init)"
            )

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "machine": self.machine.to_dict(),
            "throughput": self.throughput.to_dict(),
            "n_init": self.n_init,
            "batch_size": self.batch_size,
            "candidate_count": self.candidate_count,
            "destructive_reps": self.destructive_reps,
            "seed": self.seed,
            "trust_region": self.trust_region.to_dict(),
            "fit_restarts_initial": self.fit_restarts_initial,
            "fit_restarts_refit": self.fit_restarts_refit,
            "fit_maxiter": self.fit_maxiter,
            "refit_every": self.refit_every,
            "stage2_tau_factor": self.stage2_tau_factor,
            "stage1_tau_threshold": self.stage1_tau_threshold,
            "improvement_tol": self.improvement_tol,
            "improvement_rel_tol": self.improvement_rel_tol,
            "deterministic_clock": self.deterministic_clock,
            "transfer_priors": self.transfer_priors,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CampaignConfig":
        payload = dict(payload)
        payload["weights"] = UtilityWeights.from_dict(payload["weights"])
        payload["thresholds"] = ConstraintThresholds.from_dict(payload["thresholds"])
        payload["machine"] = MachineLimits.from_dict(payload["machine"])
        payload["throughput"] = ThroughputModel.from_dict(payload["throughput"])
        payload["trust_region"] = TrustRegionConfig.from_dict(payload["trust_region"])
        return cls(**payload)


@dataclass
class ObservationRecord:
    config_id: str
    config: Configuration
    iteration: int
    stage_at_tell: int
    objective: ObjectiveObservation
    constraints: ConstraintObservation
    violations: dict[str, float]
    feasible: bool
    quarantined_front: tuple[float, ...] = ()
    quarantined_back: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "config": self.config.as_dict(),
            "iteration": self.iteration,
            "stage_at_tell": self.stage_at_tell,
            "objective": self.objective.to_dict(),
            "constraints": self.constraints.to_dict(),
            "violations": dict(self.violations),
            "feasible": self.feasible,
            "quarantined_front": list(self.quarantined_front),
            "quarantined_back": list(self.quarantined_back),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ObservationRecord":
        return cls(
            config_id=payload["config_id"],
            config=Configuration.from_dict(payload["config"]),
            iteration=payload["iteration"],
            stage_at_tell=payload["stage_at_tell"],
            objective=ObjectiveObservation.from_dict(payload["objective"]),
            constraints=ConstraintObservation.from_dict(payload["constraints"]),
            violations=dict(payload["violations"]),
            feasible=payload["feasible"],
            quarantined_front=tuple(payload["quarantined_front"]),
            quarantined_back=tuple(payload["quarantined_back"]),
        )


class Campaign:
    """One optimization campaign, mutated only through initialize/ask/tell/
    switch_stage; every mutation appends to the event log."""

    def __init__(
        self,
        config: CampaignConfig,
        campaign_id: str = "campaign",
        space: ParameterSpace | None = None,
    ):
        self.config = config
        self.campaign_id = campaign_id
        self.space = space or default_space()
        self.stage = 1
        self.iteration = 0
        self.rng_counter = 0
        self.clock_counter = 0
        self.config_seq = 0
        self.ask_count = 0
        self.complete = False
        self.initialized = False
        self.stage_switch_iteration: int | None = None
        # Stage 1 terminates (and hands over to stage 2) at a looser side
        # length than stage 2's final threshold.
        stage1_tr = dataclasses.replace(
            config.trust_region, tau_threshold=config.stage1_tau_threshold
        )
        self.trust: TrustRegionState = init_trust_region(self.space.dim, stage1_tr)
        self.observations: list[ObservationRecord] = []
        self.pending: dict[str, Configuration] = {}
        self.pending_is_ask = False
        self.batch_improved = False
        self.incumbent_id: str | None = None
        self.stage1_incumbent_id: str | None = None
        self.last_hyper: dict[str, KernelHyperparameters] = {}
        self.hyper_priors: dict[str, LogNormalPriors] = {
            name: LogNormalPriors.from_dict(payload)
            for name, payload in (config.transfer_priors or {}).items()
        }
        self.trace: list[dict] = []
        self.events: list[dict] = []
        self._models: tuple[MultiOutputGP, MultiOutputGP] | None = None
        self._replay_cursor: int | None = None
        self._replay_source: list[dict] | None = None

    # ------------------------------------------------------------------
    # Internals: seeds, clock, events
    # ------------------------------------------------------------------

    def _next_seed_block(self, count: int) -> list[int]:
        """Derive ``count`` independent seeds from (campaign seed, counter)
        and advance the counter once."""
        root = np.random.SeedSequence([int(self.config.seed), int(self.rng_counter)])
        self.rng_counter += 1
        return [int(c.generate_state(1)[0]) for c in root.spawn(count)]

    def _timestamp(self) -> str:
        import datetime

        if self.config.deterministic_clock:
            base = datetime.datetime(2000, 1, 1, tzinfo=datetime.timezone.utc)
            stamp = (base + datetime.timedelta(seconds=self.clock_counter)).isoformat()
            self.clock_counter += 1
            return stamp
        return datetime.datetime.now(datetime.timezone.utc).isoformat()

    def _append_event(self, kind: str, payload: dict):
        if self._replay_source is not None:
            if self._replay_cursor >= len(self._replay_source):
                raise IntegrityError(f"replay produced extra event '{kind}'")
            expected = self._replay_source[self._replay_cursor]
            self._replay_cursor += 1
            if expected["type"] != kind:
                raise IntegrityError(
                    f"replay event #{self._replay_cursor} is '{kind}', log says '{expected['type']}'"
                )
            if expected["payload"] != payload:
                raise IntegrityError(
                    f"replay payload mismatch on event #{self._replay_cursor} ({kind})"
                )
            self.events.append(
                {
                    "type": kind,
                    "timestamp": expected["timestamp"],
                    "iteration": expected["iteration"],
                    "payload": payload,
                }
            )
            if self.config.deterministic_clock:
                self.clock_counter += 1
            return
        self.events.append(
            {
                "type": kind,
                "timestamp": self._timestamp(),
                "iteration": self.iteration,
                "payload": payload,
            }
        )

    def _new_config_id(self) -> str:
        self.config_seq += 1
        return f"cfg-{self.config_seq:04d}"

    # ------------------------------------------------------------------
    # Utilities and incumbents
    # ------------------------------------------------------------------

    def _throughput(self, config: Configuration) -> float:
        return self.config.throughput.wafers_per_hour(config)

    def stage1_utility(self, record: ObservationRecord) -> float:
        w1 = stage1_weights(self.config.weights)
        measurements = {
            "dicing_width": record.objective.dicing_width,
            "mod_width": record.objective.mod_width,
            "burr": record.objective.burr,
        }
        return utility(measurements, self._throughput(record.config), w1)

    def full_utility(self, record: ObservationRecord) -> float | None:
        if not record.objective.has_destructive:
            return None
        measurements = {
            "dicing_width": record.objective.dicing_width,
            "mod_width": record.objective.mod_width,
            "burr": record.objective.burr,
            "front_strength": record.objective.mean_front(),
            "back_strength": record.objective.mean_back(),
        }
        return utility(measurements, self._throughput(record.config), self.config.weights)

    def stage_utility(self, record: ObservationRecord, stage: int | None = None) -> float | None:
        stage = self.stage if stage is None else stage
        return self.stage1_utility(record) if stage == 1 else self.full_utility(record)

    def _record_by_id(self, config_id: str) -> ObservationRecord:
        for record in self.observations:
            if record.config_id == config_id:
                return record
        raise UnknownConfigError(f"no observation for config_id '{config_id}'")

    def best_feasible(self) -> tuple[ObservationRecord, float]:
        """Feasible observation maximizing the current stage's utility;
        ties resolve to the earliest iteration."""
        best: tuple[ObservationRecord, float] | None = None
        for record in self.observations:
            if not record.feasible:
                continue
            value = self.stage_utility(record)
            if value is None:
                continue
            if best is None or value > best[1]:
                best = (record, value)
        if best is None:
            raise NoFeasibleIncumbentError("no feasible observation for the current stage yet")
        return best

    def _incumbent_utility(self) -> float | None:
        if self.incumbent_id is None:
            return None
        return self.stage_utility(self._record_by_id(self.incumbent_id))

    def _min_violation_record(self) -> ObservationRecord | None:
        best = None
        best_total = np.inf
        for record in self.observations:
            total = sum(max(v, 0.0) for v in record.violations.values())
            if total < best_total:
                best_total = total
                best = record
        return best

    # ------------------------------------------------------------------
    # Dataset assembly and model fitting
    # ------------------------------------------------------------------

    def _objective_output_names(self, stage: int | None = None) -> tuple[str, ...]:
        stage = self.stage if stage is None else stage
        return OPTICAL_OBJECTIVES if stage == 1 else OPTICAL_OBJECTIVES + STRENGTH_OBJECTIVES

    def _objective_data(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for record in self.observations:
            unit = self.space.config_to_unit(record.config)
            if name in OPTICAL_OBJECTIVES:
                xs.append(unit)
                ys.append(getattr(record.objective, name))
            elif name == "front_strength":
                for v in record.objective.front_strengths:
                    xs.append(unit)
                    ys.append(v)
            elif name == "back_strength":
                for v in record.objective.back_strengths:
                    xs.append(unit)
                    ys.append(v)
        if not xs:
            return np.zeros((0, self.space.dim)), np.zeros(0)
        return np.array(xs), np.array(ys)

    def _constraint_data(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for record in self.observations:
            if name in record.violations:
                xs.append(self.space.config_to_unit(record.config))
                ys.append(record.violations[name])
        if not xs:
            return np.zeros((0, self.space.dim)), np.zeros(0)
        return np.array(xs), np.array(ys)

    def _fit_models(
        self, refit: bool, seeds: list[int], store: bool = True
    ) -> tuple[MultiOutputGP, MultiOutputGP]:
        obj_names = self._objective_output_names()
        con_names = self.config.thresholds.constraint_names
        gp_obj = MultiOutputGP(self.space.dim)
        gp_con = MultiOutputGP(self.space.dim)
        # Warm-started refits converge in a handful of steps; a periodic
        # extra random restart guards against parking in a local optimum.
        explore = self.ask_count % 5 == 1
        for i, name in enumerate(obj_names + tuple(con_names)):
            target = gp_obj if name in obj_names else gp_con
            x, y = (
                self._objective_data(name)
                if name in obj_names
                else self._constraint_data(name)
            )
            warm = self.last_hyper.get(name)
            if refit or warm is None:
                if warm is None:
                    fit_restarts = max(4, self.config.fit_restarts_initial)
                    maxiter = self.config.fit_maxiter
                elif y.size > 400:
                    fit_restarts, maxiter = 1, 15
                else:
                    fit_restarts = (
                        self.config.fit_restarts_refit + 1
                        if explore
                        else self.config.fit_restarts_refit
                    )
                    maxiter = min(25 if explore else 15, self.config.fit_maxiter)
                # Collapsing repeated configurations (re-asked grid points,
                # strength repetitions) is exact and keeps the kernel matrix
                # non-singular at the fitted noise floor.
                target.set_output(
                    name,
                    x,
                    y,
                    restarts=fit_restarts,
                    seed=seeds[i],
                    warm_start=warm,
                    hyper_priors=self.hyper_priors.get(name),
                    maxiter=maxiter,
                    collapse_replicates=True,
                )
                if store and target.model(name).n >= 2:
                    self.last_hyper[name] = target.hyperparameters(name)
            else:
                target.set_output(
                    name,
                    x,
                    y,
                    restarts=0,
                    seed=seeds[i],
                    warm_start=warm,
                    collapse_replicates=True,
                )
        return gp_obj, gp_con

    # ------------------------------------------------------------------
    # Lifecycle operations
    # ------------------------------------------------------------------

    def initialize(
        self, seed_configs: list[Configuration] | None = None
    ) -> list[tuple[str, Configuration]]:
        """Build the initial design: supplied database configurations first
        (snapped, machine-checked), then Sobol points filtered on the known
        machine limits until ``n_init`` is reached."""
        if self.initialized:
            raise LifecycleError("campaign already initialized")
        n_init = self.config.n_init
        batch: list[Configuration] = []
        seed_payload = []
        for raw in seed_configs or []:
            snapped = self.space.snap_config(raw)
            if not self.config.machine.is_feasible(snapped):
                raise ValidationError(
                    f"seed configuration violates machine limits: {snapped.as_dict()}"
                )
            batch.append(snapped)
            seed_payload.append(snapped.as_dict())
        if len(batch) > n_init:
            raise ConfigurationError("more seed configurations than n_init")
        (sobol_seed,) = self._next_seed_block(1)
        sobol = qmc.Sobol(d=self.space.dim, scramble=True, seed=sobol_seed)
        attempts = 0
        seen = {tuple(c.as_array()) for c in batch}
        while len(batch) < n_init:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="The balance properties of Sobol")
                unit = sobol.random(max(16, n_init))
            attempts += unit.shape[0]
            phys = self.space.snap_physical(self.space.to_physical(unit))
            mask = self.config.machine.feasible_mask(phys)
            for row in phys[mask]:
                key = tuple(row)
                if key in seen:
                    continue
                seen.add(key)
                batch.append(Configuration.from_array(row))
                if len(batch) == n_init:
                    break
            if attempts > 100_000:
                raise InfeasibleSpaceError(
                    f"could not find {n_init} machine-feasible points in {attempts} draws"
                )
        entries = [(self._new_config_id(), config) for config in batch]
        self.pending = {cid: config for cid, config in entries}
        self.pending_is_ask = False
        self.initialized = True
        self._append_event(
            "initialized",
            {
                "seed_configs": seed_payload,
                "batch": [{"config_id": cid, "config": c.as_dict()} for cid, c in entries],
            },
        )
        return entries

    def ask(self, q: int | None = None) -> list[tuple[str, Configuration]]:
        """Propose the next batch inside the trust region."""
        if not self.initialized:
            raise LifecycleError("initialize the campaign before asking")
        if self.complete:
            raise CampaignCompleteError("stage-2 trust region terminated; campaign complete")
        if self.pending:
            raise PendingBatchError(f"{len(self.pending)} configurations still pending")
        if not self.observations:
            raise LifecycleError("tell the initial design before asking")
        q = self.config.batch_size if q is None else int(q)
        if q < 1:
            raise ContractViolationError("batch size must be >= 1")

        seeds = self._next_seed_block(32)
        self.ask_count += 1
        refit = (self.ask_count - 1) % self.config.refit_every == 0
        gp_obj, gp_con = self._fit_models(refit, seeds[:16])

        if self.incumbent_id is not None:
            center_record = self._record_by_id(self.incumbent_id)
        else:
            center_record = self._min_violation_record()
        self.trust = recenter(self.trust, self.space.config_to_unit(center_record.config))

        weights_vec = gp_obj.normalized_lengthscale_weights()
        lower, upper = region_bounds(self.trust, weights_vec)
        center = self.trust.center_array()

        feasible = np.zeros((0, self.space.dim))
        for attempt in range(4):
            if attempt > 0:
                growth = 2.0**attempt
                half = (upper - lower) / 2.0 * growth
                lower = np.maximum(0.0, center - half)
                upper = np.minimum(1.0, center + half)
                if attempt == 3:
                    lower, upper = np.zeros(self.space.dim), np.ones(self.space.dim)
            candidates = acquisition.generate_candidates(
                self.space, lower, upper, self.config.candidate_count, seeds[16 + attempt]
            )
            feasible = acquisition.filter_known(self.space, candidates, self.config.machine)
            if feasible.shape[0] > 0:
                break
        if feasible.shape[0] == 0:
            raise NoFeasibleCandidatesError(
                "no machine-feasible candidates found even over the full box"
            )
        self.last_ask_bounds = (lower, upper)

        stage_weights = (
            stage1_weights(self.config.weights) if self.stage == 1 else self.config.weights
        )
        batch = acquisition.select_batch(
            gp_obj,
            gp_con,
            self.space,
            feasible,
            q,
            stage_weights,
            self.config.throughput,
            seeds[20],
        )
        entries = [(self._new_config_id(), config) for config in batch]
        self.pending.update(entries)
        self.pending_is_ask = True
        self.batch_improved = False
        self._models = (gp_obj, gp_con)
        self._append_event(
            "asked",
            {
                "q": q,
                "batch": [{"config_id": cid, "config": c.as_dict()} for cid, c in entries],
            },
        )
        return entries

    def tell(
        self,
        config_id: str,
        objective: ObjectiveObservation,
        constraints: ConstraintObservation,
    ):
        """Ingest one evaluated configuration."""
        if config_id not in self.pending:
            raise UnknownConfigError(f"config_id '{config_id}' is not pending")
        config = self.pending[config_id]
        violations = constraints.violations(self.config.thresholds)

        quarantined_front: tuple[float, ...] = ()
        quarantined_back: tuple[float, ...] = ()
        warning = None
        if self.stage == 1 and objective.has_destructive:
            quarantined_front = objective.front_strengths
            quarantined_back = objective.back_strengths
            objective = ObjectiveObservation(
                dicing_width=objective.dicing_width,
                mod_width=objective.mod_width,
                burr=objective.burr,
            )
            warning = "destructive data quarantined during stage 1"

        self.iteration += 1
        record = ObservationRecord(
            config_id=config_id,
            config=config,
            iteration=self.iteration,
            stage_at_tell=self.stage,
            objective=objective,
            constraints=constraints,
            violations=violations,
            feasible=all(v <= 1e-9 for v in violations.values()),
            quarantined_front=quarantined_front,
            quarantined_back=quarantined_back,
        )
        del self.pending[config_id]
        self.observations.append(record)
        self._models = None

        new_utility = self.stage_utility(record) if record.feasible else None
        incumbent_utility = self._incumbent_utility()
        if incumbent_utility is None:
            improved = new_utility is not None
        else:
            margin = max(
                self.config.improvement_tol,
                self.config.improvement_rel_tol * abs(incumbent_utility),
            )
            improved = new_utility is not None and new_utility > incumbent_utility + margin
        if improved:
            self.incumbent_id = config_id
            if self.stage == 1:
                self.stage1_incumbent_id = config_id
            self.batch_improved = True

        # The trust-region side length reacts once per completed asked
        # batch, to whether any member improved the incumbent; the initial
        # design never moves it.
        stage_at_row = self.stage
        if self.pending_is_ask and not self.pending and not self.trust.terminated:
            self.trust = update(self.trust, self.batch_improved)
            self.batch_improved = False
        tau_after = self.trust.side_length

        self._append_trace_row(record, stage_at_row, tau_after)
        payload = {
            "config_id": config_id,
            "objective": objective.to_dict(),
            "constraints": constraints.to_dict(),
            "quarantined_front": list(quarantined_front),
            "quarantined_back": list(quarantined_back),
            "feasible": record.feasible,
        }
        if warning:
            payload["warning"] = warning
        self._append_event("told", payload)

        if self.trust.terminated:
            if self.stage == 1:
                self._switch_stage(trigger="trust_region")
            elif not self.complete:
                self.complete = True
                self._append_event("terminated", {"final_tau": self.trust.side_length})
        return record

    def _append_trace_row(self, record: ObservationRecord, stage: int, tau: float):
        best_stage1 = None
        best_full = None
        for r in self.observations:
            if not r.feasible:
                continue
            u1 = self.stage1_utility(r)
            if best_stage1 is None or u1 > best_stage1:
                best_stage1 = u1
            uf = self.full_utility(r)
            if uf is not None and (best_full is None or uf > best_full):
                best_full = uf
        self.trace.append(
            {
                "iter": record.iteration,
                "stage": stage,
                "tau": tau,
                "utility_best": best_stage1 if stage == 1 else best_full,
                "utility_best_stage1": best_stage1,
                "utility_best_full": best_full,
                "viol_front": record.violations["front_cracks"],
                "viol_corner": record.violations["corner_cracks"],
                "viol_back": record.violations["back_cracks"],
                "viol_sep": record.violations["separation"],
                "viol_chip": record.violations.get("chipouts"),
                "feasible": record.feasible,
            }
        )

    def _switch_stage(self, trigger: str):
        if self.stage != 1:
            raise LifecycleError("stage switch only applies to stage 1")
        self.stage = 2
        self.stage_switch_iteration = self.iteration
        released = 0
        for record in self.observations:
            if record.quarantined_front:
                record.objective = ObjectiveObservation(
                    dicing_width=record.objective.dicing_width,
                    mod_width=record.objective.mod_width,
                    burr=record.objective.burr,
                    front_strengths=record.quarantined_front,
                    back_strengths=record.quarantined_back,
                )
                record.quarantined_front = ()
                record.quarantined_back = ()
                released += 1
        # Fresh incumbent under the full utility (quarantine releases may
        # already provide one); the trust region restarts at half size.
        self.incumbent_id = None
        best = None
        for record in self.observations:
            if not record.feasible:
                continue
            value = self.full_utility(record)
            if value is not None and (best is None or value > best[1]):
                best = (record, value)
        if best is not None:
            self.incumbent_id = best[0].config_id
        cfg = self.config.trust_region
        self.trust = TrustRegionState(
            dim=self.space.dim,
            side_length=cfg.tau_init * self.config.stage2_tau_factor,
            center=self.trust.center,
            success_count=0,
            failure_count=0,
            config=cfg,
            terminated=False,
        )
        self.batch_improved = False
        self._models = None
        self._append_event(
            "stage_switched",
            {"trigger": trigger, "released_destructive": released},
        )

    def switch_stage(self):
        """Manual stage-2 trigger for operator control."""
        if self.stage == 2:
            raise LifecycleError("campaign is already in stage 2")
        self._switch_stage(trigger="manual")

    def export_transfer_priors(self, log_std: float = 0.5) -> dict:
        """Package this campaign's fitted hyperparameters as priors for a
        follow-up campaign on a related material (feed the result to the new
        campaign's ``transfer_priors`` config field)."""
        return {
            name: LogNormalPriors(hyper, log_std=log_std).to_dict()
            for name, hyper in self.last_hyper.items()
        }

    # ------------------------------------------------------------------
    # Post-hoc what-if extraction
    # ------------------------------------------------------------------

    def map_estimate(
        self,
        alt_weights: UtilityWeights,
        feasibility_level: float = 0.9,
        pool_size: int = 100_000,
    ) -> dict:
        """Posterior-mean utility maximizer over a fresh machine-feasible
        pool, subject to each constraint's Gaussian feasibility probability
        meeting ``feasibility_level``.  Uses the final models only; no new
        experiments."""
        if self.stage != 2:
            raise LifecycleError("what-if extraction needs stage-2 models")
        if not (0.0 <= feasibility_level <= 1.0):
            raise ValidationError("feasibility_level must be in [0, 1]")
        alt_weights.require_some_weight()

        root = np.random.SeedSequence([int(self.config.seed), 0x3A9, int(self.iteration)])
        seeds = [int(c.generate_state(1)[0]) for c in root.spawn(20)]
        gp_obj, gp_con = self._fit_models(refit=True, seeds=seeds[:16], store=False)

        sobol = qmc.Sobol(d=self.space.dim, scramble=True, seed=seeds[16])
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="The balance properties of Sobol")
            unit = sobol.random(pool_size)
        phys = self.space.snap_physical(self.space.to_physical(unit))
        phys = phys[self.config.machine.feasible_mask(phys)]
        extra = [
            record.config.as_array()
            for record in self.observations
            if self.config.machine.is_feasible(record.config)
        ]
        if extra:
            phys = np.vstack([phys, np.array(extra)])
        phys = np.unique(phys, axis=0)
        pool_unit = self.space.to_unit(phys)

        tol = acquisition.CONSTRAINT_SAMPLE_TOL
        feas_prob = np.ones(pool_unit.shape[0])
        chunk = 20_000
        means: dict[str, np.ndarray] = {}
        for name in gp_con.output_names:
            probs = np.empty(pool_unit.shape[0])
            for start in range(0, pool_unit.shape[0], chunk):
                stop = min(start + chunk, pool_unit.shape[0])
                mean, var = gp_con.predict(pool_unit[start:stop])[name]
                probs[start:stop] = norm.cdf((tol - mean) / np.sqrt(np.maximum(var, 1e-18)))
            feas_prob = np.minimum(feas_prob, probs)
        ok = feas_prob >= feasibility_level
        if not np.any(ok):
            raise ThresholdTooStrictError(
                f"no candidate reaches feasibility level {feasibility_level:.3f}; "
                f"best achievable is {float(feas_prob.max()):.3f}",
                best_achievable=float(feas_prob.max()),
            )
        pool_unit = pool_unit[ok]
        phys = phys[ok]
        feas_prob = feas_prob[ok]

        for name in gp_obj.output_names:
            values = np.empty(pool_unit.shape[0])
            for start in range(0, pool_unit.shape[0], chunk):
                stop = min(start + chunk, pool_unit.shape[0])
                mean, _ = gp_obj.predict(pool_unit[start:stop])[name]
                values[start:stop] = mean
            means[name] = values

        throughputs = np.array(
            [self.config.throughput.wafers_per_hour(Configuration.from_array(row)) for row in phys]
        )
        w = alt_weights
        score = w.w_throughput * throughputs
        score -= w.w_width * np.abs(means["dicing_width"] - w.width_target)
        score -= w.w_mod * np.abs(means["mod_width"] - w.mod_target)
        score -= w.w_burr * means["burr"]
        score += w.w_front * (means["front_strength"] - w.strength_base)
        score += w.w_back * (means["back_strength"] - w.strength_base)
        idx = int(np.argmax(score))
        config = Configuration.from_array(phys[idx])
        return {
            "config": config,
            "utility": float(score[idx]),
            "throughput": float(throughputs[idx]),
            "feasibility_level": float(feas_prob[idx]),
            "predicted": {name: float(means[name][idx]) for name in means},
        }

    # ------------------------------------------------------------------
    # Serialization and replay
    # ------------------------------------------------------------------

    def status(self) -> dict:
        incumbent = None
        if self.incumbent_id is not None:
            record = self._record_by_id(self.incumbent_id)
            incumbent = {
                "config_id": record.config_id,
                "config": record.config.as_dict(),
                "utility": self.stage_utility(record),
                "iteration": record.iteration,
            }
        destructive_count = sum(
            len(r.objective.front_strengths) + len(r.objective.back_strengths)
            for r in self.observations
        )
        return {
            "campaign_id": self.campaign_id,
            "stage": self.stage,
            "tau": self.trust.side_length,
            "terminated": self.trust.terminated,
            "complete": self.complete,
            "iteration": self.iteration,
            "pending": [
                {"config_id": cid, "config": c.as_dict()} for cid, c in self.pending.items()
            ],
            "incumbent": incumbent,
            "observation_count": len(self.observations),
            "feasible_count": sum(1 for r in self.observations if r.feasible),
            "destructive_count": destructive_count,
            "stage_switch_iteration": self.stage_switch_iteration,
        }

    def to_dict(self) -> dict:
        return {
            "campaign_id": self.campaign_id,
            "config": self.config.to_dict(),
            "space": self.space.to_dict(),
            "stage": self.stage,
            "iteration": self.iteration,
            "rng_counter": self.rng_counter,
            "clock_counter": self.clock_counter,
            "config_seq": self.config_seq,
            "ask_count": self.ask_count,
            "complete": self.complete,
            "initialized": self.initialized,
            "stage_switch_iteration": self.stage_switch_iteration,
            "trust_region": self.trust.to_dict(),
            "observations": [r.to_dict() for r in self.observations],
            "pending": [
                {"config_id": cid, "config": c.as_dict()} for cid, c in self.pending.items()
            ],
            "pending_is_ask": self.pending_is_ask,
            "batch_improved": self.batch_improved,
            "incumbent_id": self.incumbent_id,
            "stage1_incumbent_id": self.stage1_incumbent_id,
            "last_hyper": {k: v.to_dict() for k, v in self.last_hyper.items()},
            "hyper_priors": {k: v.to_dict() for k, v in self.hyper_priors.items()},
            "trace": self.trace,
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Campaign":
        campaign = cls(
            CampaignConfig.from_dict(payload["config"]),
            campaign_id=payload["campaign_id"],
            space=ParameterSpace.from_dict(payload["space"]),
        )
        campaign.stage = payload["stage"]
        campaign.iteration = payload["iteration"]
        campaign.rng_counter = payload["rng_counter"]
        campaign.clock_counter = payload["clock_counter"]
        campaign.config_seq = payload["config_seq"]
        campaign.ask_count = payload["ask_count"]
        campaign.complete = payload["complete"]
        campaign.initialized = payload["initialized"]
        campaign.stage_switch_iteration = payload["stage_switch_iteration"]
        campaign.trust = TrustRegionState.from_dict(payload["trust_region"])
        campaign.observations = [ObservationRecord.from_dict(r) for r in payload["observations"]]
        campaign.pending = {
            entry["config_id"]: Configuration.from_dict(entry["config"])
            for entry in payload["pending"]
        }
        campaign.pending_is_ask = payload["pending_is_ask"]
        campaign.batch_improved = payload["batch_improved"]
        campaign.incumbent_id = payload["incumbent_id"]
        campaign.stage1_incumbent_id = payload["stage1_incumbent_id"]
        campaign.last_hyper = {
            k: KernelHyperparameters.from_dict(v) for k, v in payload["last_hyper"].items()
        }
        campaign.hyper_priors = {
            k: LogNormalPriors.from_dict(v) for k, v in payload["hyper_priors"].items()
        }
        campaign.trace = list(payload["trace"])
        campaign.events = list(payload["events"])
        return campaign

    @classmethod
    def replay(
        cls,
        config: CampaignConfig,
        events: list[dict],
        campaign_id: str = "campaign",
        space: ParameterSpace | None = None,
    ) -> "Campaign":
        """Re-execute the event log from scratch.  Asked batches and told
        payloads are recomputed and cross-checked against the log; any
        divergence raises IntegrityError."""
        campaign = cls(config, campaign_id=campaign_id, space=space)
        campaign._replay_source = events
        campaign._replay_cursor = 0
        for event in events:
            kind = event["type"]
            payload = event["payload"]
            if kind == "initialized":
                seeds = [Configuration.from_dict(c) for c in payload["seed_configs"]]
                campaign.initialize(seeds or None)
            elif kind == "asked":
                campaign.ask(q=payload["q"])
            elif kind == "told":
                campaign.tell(
                    payload["config_id"],
                    _objective_from_event(payload),
                    ConstraintObservation.from_dict(payload["constraints"]),
                )
            elif kind == "stage_switched":
                if payload["trigger"] == "manual":
                    campaign.switch_stage()
            elif kind == "terminated":
                pass
            else:
                raise IntegrityError(f"unknown event type '{kind}'")
        if campaign._replay_cursor != len(events):
            raise IntegrityError(
                f"replay consumed {campaign._replay_cursor} of {len(events)} events"
            )
        campaign._replay_source = None
        campaign._replay_cursor = None
        return campaign


def _objective_from_event(payload: dict) -> ObjectiveObservation:
    base = ObjectiveObservation.from_dict(payload["objective"])
    if payload.get("quarantined_front"):
        return ObjectiveObservation(
            dicing_width=base.dicing_width,
            mod_width=base.mod_width,
            burr=base.burr,
            front_strengths=tuple(payload["quarantined_front"]),
            back_strengths=tuple(payload["quarantined_back"]),
        )
    return base


def run_autonomous(
    campaign: Campaign,
    blackbox,
    budget: int,
    seed_configs: list[Configuration] | None = None,
) -> list[dict]:
    """Closed loop against a black box exposing ``optical(config)`` and
    ``destructive(config, n_reps)``.  One budget unit is one configuration
    processed, whatever the repetition count.  Returns the trace."""
    if budget < campaign.config.n_init:
        raise ConfigurationError("budget must cover the initial design")
    batch = campaign.initialize(seed_configs)
    evaluations = 0
    for config_id, config in batch:
        objective, constraints = blackbox.optical(config)
        campaign.tell(config_id, objective, constraints)
        evaluations += 1
    while evaluations < budget and not campaign.complete:
        q = min(campaign.config.batch_size, budget - evaluations)
        try:
            batch = campaign.ask(q=q)
        except CampaignCompleteError:
            break
        for config_id, config in batch:
            objective, constraints = blackbox.optical(config)
            if campaign.stage == 2:
                front, back = blackbox.destructive(config, campaign.config.destructive_reps)
                objective = ObjectiveObservation(
                    dicing_width=objective.dicing_width,
                    mod_width=objective.mod_width,
                    burr=objective.burr,
                    front_strengths=tuple(front),
                    back_strengths=tuple(back),
                )
            campaign.tell(config_id, objective, constraints)
            evaluations += 1
    return campaign.trace
