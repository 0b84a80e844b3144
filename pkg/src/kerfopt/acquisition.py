"""Candidate generation and batch selection.

Candidates are scrambled-Sobol draws inside the trust-region box, snapped to
the machine grid and de-duplicated; a rejection filter drops everything the
known machine limits forbid.  Selection is batched constrained Thompson
sampling: each batch slot draws one joint posterior sample of every objective
and constraint surface over the candidate set, keeps the candidates whose
sampled constraints are satisfied, and takes the one maximizing the
expert-weighted utility (analytic throughput included).  When a draw leaves
no sampled-feasible candidate the slot falls back to the minimal total
constraint violation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .errors import (
    ConfigurationError,
    ContractViolationError,
    NoFeasibleCandidatesError,
)
from .gp import MultiOutputGP
from .machine import MachineLimits, ThroughputModel
from .space import Configuration, ParameterSpace

__all__ = [
    "UtilityWeights",
    "utility",
    "stage1_weights",
    "generate_candidates",
    "filter_known",
    "select_batch",
]

# Sampled/predicted-constraint satisfaction slack, in violation units
# (fractions of streets/dies).  Channels that have only ever been observed
# exactly at the boundary (e.g. every street separated -> violation 0.0)
# put the posterior mean exactly on the feasibility edge; without slack,
# sampled surfaces there read as fair coin flips and the acquisition
# filter degenerates.  Half a percent is far below any requirement band.
# Observed feasibility is never slackened.
CONSTRAINT_SAMPLE_TOL = 0.005

OBJECTIVE_OUTPUTS = ("dicing_width", "mod_width", "burr", "front_strength", "back_strength")


@dataclass(frozen=True)
class UtilityWeights:
    """Expert-derived scalarization weights.

    The utility rewards throughput and base-shifted die strengths, and
    penalizes deviation of the widths from their targets and the burr height:

        u = w_throughput * t
            - w_width  * |width - width_target|
            - w_mod    * |mod_width - mod_target|
            - w_burr   * burr
            + w_front  * (front_strength - strength_base)
            + w_back   * (back_strength - strength_base)
    """

    w_width: float
    w_mod: float
    w_burr: float
    w_throughput: float
    w_front: float
    w_back: float
    strength_base: float = 300.0
    width_target: float = 28.0
    mod_target: float = 28.0

    def __post_init__(self):
        weights = self.as_tuple()
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ConfigurationError("weights must be finite and non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w_width, self.w_mod, self.w_burr, self.w_throughput, self.w_front, self.w_back)

    def require_some_weight(self):
        """Campaigns and what-if queries reject an all-zero weight vector."""
        if not any(w > 0 for w in self.as_tuple()):
            raise ConfigurationError("at least one weight must be positive")

    def to_dict(self) -> dict:
        return {
            "w_width": self.w_width,
            "w_mod": self.w_mod,
            "w_burr": self.w_burr,
            "w_throughput": self.w_throughput,
            "w_front": self.w_front,
            "w_back": self.w_back,
            "strength_base": self.strength_base,
            "width_target": self.width_target,
            "mod_target": self.mod_target,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "UtilityWeights":
        return cls(**payload)


# Weight presets calibrated by process experts: the two campaign defaults
# plus the two post-hoc trade-off studies (strength-first, speed-first).
WEIGHT_PRESETS = {
    "bare_silicon": UtilityWeights(0.075, 0.075, 1.0, 0.01, 0.5, 0.5),
    "product": UtilityWeights(0.05, 0.05, 0.1, 0.3, 0.25, 0.25),
    "strength_first": UtilityWeights(0.005, 0.005, 0.01, 0.098, 0.45, 0.45),
    "speed_first": UtilityWeights(0.005, 0.005, 0.01, 0.78, 0.1, 0.1),
}


def utility(
    measurements: dict,
    throughput: float,
    weights: UtilityWeights,
) -> float:
    """Scalar utility of one set of measured (or sampled) outcomes.

    ``measurements`` maps output names to physical values; entries whose
    weight is zero may be omitted.
    """

    def need(name, weight):
        value = measurements.get(name)
        if value is None:
            if weight == 0:
                return 0.0
            raise ContractViolationError(f"measurement '{name}' required by nonzero weight")
        value = float(value)
        if not math.isfinite(value):
            raise ContractViolationError(f"measurement '{name}' is not finite")
        return value

    if not math.isfinite(throughput):
        raise ContractViolationError("throughput is not finite")
    w = weights
    total = w.w_throughput * throughput
    total -= w.w_width * abs(need("dicing_width", w.w_width) - w.width_target)
    total -= w.w_mod * abs(need("mod_width", w.w_mod) - w.mod_target)
    total -= w.w_burr * need("burr", w.w_burr)
    total += w.w_front * (need("front_strength", w.w_front) - w.strength_base)
    total += w.w_back * (need("back_strength", w.w_back) - w.strength_base)
    return total


def stage1_weights(weights: UtilityWeights) -> UtilityWeights:
    """Optical-only surrogate weights: the strength terms are dropped and
    their weight mass is renormalized onto the remaining terms."""
    optical = weights.w_width + weights.w_mod + weights.w_burr + weights.w_throughput
    total = optical + weights.w_front + weights.w_back
    if optical <= 0:
        raise ConfigurationError("cannot build an optical-only utility: all optical weights are zero")
    scale = total / optical
    return replace(
        weights,
        w_width=weights.w_width * scale,
        w_mod=weights.w_mod * scale,
        w_burr=weights.w_burr * scale,
        w_throughput=weights.w_throughput * scale,
        w_front=0.0,
        w_back=0.0,
    )


def generate_candidates(
    space: ParameterSpace,
    lower_unit: np.ndarray,
    upper_unit: np.ndarray,
    count: int,
    seed: int,
) -> np.ndarray:
    """Grid-snapped scrambled-Sobol candidates in a normalized box.

    Returns at most ``count`` unique normalized rows whose physical images
    are on the machine grid.  Boxes narrower than one grid step in some
    dimension collapse to the nearest grid plane.
    """
    if count < 1:
        raise ContractViolationError("candidate count must be >= 1")
    idx_lo, idx_hi = space.grid_index_bounds(lower_unit, upper_unit)
    sobol = qmc.Sobol(d=space.dim, scramble=True, seed=int(seed))
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="The balance properties of Sobol")
        raw = sobol.random(count)
    # Map the unit draw onto the inclusive grid-index range, then back to
    # normalized coordinates: on-grid and in-box by construction.
    spread = (idx_hi - idx_lo + 1).astype(float)
    indices = idx_lo + np.floor(raw * spread).astype(int)
    indices = np.minimum(indices, idx_hi)
    points = space.unit_from_grid_index(indices)
    _, first = np.unique(points, axis=0, return_index=True)
    return points[np.sort(first)]


def filter_known(
    space: ParameterSpace,
    candidates_unit: np.ndarray,
    limits: MachineLimits,
) -> np.ndarray:
    """Order-preserving subset of candidates satisfying every machine limit."""
    candidates_unit = np.atleast_2d(candidates_unit)
    keep = [
        i
        for i, row in enumerate(candidates_unit)
        if limits.is_feasible(space.unit_to_config(row))
    ]
    return candidates_unit[keep]


def batch_sample_seeds(seed: int) -> tuple[int, int]:
    """(objective, constraint) sampling seeds derived from the batch seed."""
    children = np.random.SeedSequence(int(seed)).spawn(2)
    return int(children[0].generate_state(1)[0]), int(children[1].generate_state(1)[0])


def select_batch(
    gp_objectives: MultiOutputGP,
    gp_constraints: MultiOutputGP,
    space: ParameterSpace,
    feasible_unit: np.ndarray,
    q: int,
    weights: UtilityWeights,
    throughput_model: ThroughputModel,
    seed: int,
) -> list[Configuration]:
    """Batched constrained Thompson sampling over a machine-feasible set.

    All 2q joint draws per output (q slots plus q duplicate re-draws) come
    from a single posterior factorization, so slots are exchangeable with a
    sequential or parallel execution order.  Draw j keeps candidates whose
    sampled constraint surfaces are all satisfied and returns the
    sampled-utility argmax among them; an empty sampled-feasible set falls
    back to the minimal total positive violation.  A duplicate of an earlier
    batch member is re-drawn once (row q + j), then accepted.
    """
    feasible_unit = np.atleast_2d(feasible_unit)
    if feasible_unit.shape[0] == 0:
        raise NoFeasibleCandidatesError("no machine-feasible candidates to select from")
    if q < 1:
        raise ContractViolationError("batch size must be >= 1")

    configs = [space.unit_to_config(row) for row in feasible_unit]
    throughputs = np.array([throughput_model.wafers_per_hour(c) for c in configs])
    obj_seed, con_seed = batch_sample_seeds(seed)
    obj_samples = gp_objectives.sample_joint(feasible_unit, 2 * q, obj_seed)
    con_samples = gp_constraints.sample_joint(feasible_unit, 2 * q, con_seed)

    def pick(row: int) -> int:
        sampled_ok = np.ones(feasible_unit.shape[0], dtype=bool)
        violation = np.zeros(feasible_unit.shape[0])
        for name in gp_constraints.output_names:
            values = con_samples[name][row]
            sampled_ok &= values <= CONSTRAINT_SAMPLE_TOL
            violation += np.maximum(values, 0.0)
        scores = weights.w_throughput * throughputs
        for name in gp_objectives.output_names:
            values = obj_samples[name][row]
            if name == "dicing_width":
                scores = scores - weights.w_width * np.abs(values - weights.width_target)
            elif name == "mod_width":
                scores = scores - weights.w_mod * np.abs(values - weights.mod_target)
            elif name == "burr":
                scores = scores - weights.w_burr * values
            elif name == "front_strength":
                scores = scores + weights.w_front * (values - weights.strength_base)
            elif name == "back_strength":
                scores = scores + weights.w_back * (values - weights.strength_base)
        if np.any(sampled_ok):
            masked = np.where(sampled_ok, scores, -np.inf)
            return int(np.argmax(masked))
        return int(np.argmin(violation))

    chosen: list[int] = []
    for j in range(q):
        idx = pick(j)
        if idx in chosen:
            idx = pick(q + j)
        chosen.append(idx)
    return [configs[i] for i in chosen]
