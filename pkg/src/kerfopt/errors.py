"""Exception hierarchy shared by the whole package.

Every error raised by kerfopt derives from :class:`KerfoptError` so callers
(CLI, HTTP service) can distinguish our failures from genuine bugs.
"""

from __future__ import annotations


class KerfoptError(Exception):
    """Base class for all kerfopt errors."""


class ContractViolationError(KerfoptError):
    """An operation was called with inputs that break its preconditions
    (dimension mismatch, non-finite values, out-of-box points)."""


class ConfigurationError(KerfoptError):
    """Invalid static configuration (bad size ordering, negative weights...)."""


class NumericalConditioningError(KerfoptError):
    """A covariance matrix stayed non-positive-definite after the full
    jitter escalation schedule."""


class LifecycleError(KerfoptError):
    """Operation called in a state that does not admit it (update on a
    terminated trust region, bounds before a center exists, ...)."""


class EmptyRegionError(KerfoptError):
    """Candidate bounds contain no representable grid point."""


class NoFeasibleCandidatesError(KerfoptError):
    """Every generated candidate violates the known machine constraints."""


class NoFeasibleIncumbentError(KerfoptError):
    """No observation satisfies all requirement constraints yet."""


class InfeasibleSpaceError(KerfoptError):
    """Could not find enough machine-feasible points in the whole box."""


class ValidationError(KerfoptError):
    """Malformed measurement or payload (fractions outside [0,1], missing
    required fields, non-positive strengths)."""


class UnknownConfigError(KerfoptError):
    """config_id not pending and not registered."""


class CampaignCompleteError(KerfoptError):
    """Stage-2 trust region has terminated; no further asks."""


class PendingBatchError(KerfoptError):
    """ask() called while a previous batch has not been fully told."""


class MachineInfeasibleError(KerfoptError):
    """Simulator interlock: configuration violates a known machine limit."""


class PresetConstructionError(KerfoptError):
    """A simulator preset failed its own construction guarantees."""


class ThresholdTooStrictError(KerfoptError):
    """No candidate reaches the requested feasibility level."""

    def __init__(self, message: str, best_achievable: float):
        super().__init__(message)
        self.best_achievable = best_achievable


class MigrationError(KerfoptError):
    """Persisted record has an unsupported schema version."""


class IntegrityError(KerfoptError):
    """Persisted record is corrupt; ``offset`` points at the parse failure."""

    def __init__(self, message: str, offset: int = -1):
        super().__init__(message)
        self.offset = offset
