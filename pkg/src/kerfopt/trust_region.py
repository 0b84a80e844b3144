"""Adaptive hypercube trust region over the normalized unit cube.

The region is centered on the best feasible point found so far.  Three
consecutive improvements double the side length (capped); ``failure_tolerance``
consecutive non-improvements halve it; dropping below the termination
threshold ends the region's life.  All transitions are pure state-in /
state-out on an immutable dataclass.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ContractViolationError, LifecycleError

__all__ = ["TrustRegionConfig", "TrustRegionState", "init_trust_region", "recenter", "update", "region_bounds"]


@dataclass(frozen=True)
class TrustRegionConfig:
    tau_init: float = 0.8
    tau_max: float = 1.6
    tau_threshold: float = 0.015
    success_tolerance: int = 3
    failure_tolerance: int = 5
    lengthscale_weighting: bool = True

    def __post_init__(self):
        if not (0 < self.tau_threshold < self.tau_init <= self.tau_max):
            raise ConfigurationError(
                "need 0 < tau_threshold < tau_init <= tau_max, got "
                f"{self.tau_threshold}, {self.tau_init}, {self.tau_max}"
            )
        if self.success_tolerance < 1 or self.failure_tolerance < 1:
            raise ConfigurationError("tolerances must be positive integers")

    def to_dict(self) -> dict:
        return {
            "tau_init": self.tau_init,
            "tau_max": self.tau_max,
            "tau_threshold": self.tau_threshold,
            "success_tolerance": self.success_tolerance,
            "failure_tolerance": self.failure_tolerance,
            "lengthscale_weighting": self.lengthscale_weighting,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrustRegionConfig":
        return cls(**payload)


@dataclass(frozen=True)
class TrustRegionState:
    dim: int
    side_length: float
    center: tuple[float, ...] | None
    success_count: int
    failure_count: int
    config: TrustRegionConfig
    terminated: bool = False

    def center_array(self) -> np.ndarray:
        if self.center is None:
            raise LifecycleError("trust region center not set yet")
        return np.asarray(self.center, dtype=float)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "side_length": self.side_length,
            "center": list(self.center) if self.center is not None else None,
            "success_count": self.success_count,
            "failure_count": self.failure_count,
            "config": self.config.to_dict(),
            "terminated": self.terminated,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrustRegionState":
        return cls(
            dim=payload["dim"],
            side_length=payload["side_length"],
            center=tuple(payload["center"]) if payload["center"] is not None else None,
            success_count=payload["success_count"],
            failure_count=payload["failure_count"],
            config=TrustRegionConfig.from_dict(payload["config"]),
            terminated=payload["terminated"],
        )


def init_trust_region(dim: int, config: TrustRegionConfig | None = None) -> TrustRegionState:
    """Fresh region: full initial side length, zero counters, center unset
    until the first feasible incumbent arrives."""
    config = config or TrustRegionConfig()
    if dim < 1:
        raise ConfigurationError("dimension must be >= 1")
    return TrustRegionState(
        dim=dim,
        side_length=config.tau_init,
        center=None,
        success_count=0,
        failure_count=0,
        config=config,
    )


def recenter(state: TrustRegionState, incumbent: np.ndarray) -> TrustRegionState:
    incumbent = np.asarray(incumbent, dtype=float)
    if incumbent.shape != (state.dim,):
        raise ContractViolationError(f"incumbent must be a {state.dim}-vector")
    if np.any(incumbent < -1e-12) or np.any(incumbent > 1 + 1e-12):
        raise ContractViolationError("incumbent outside the unit cube")
    return replace(state, center=tuple(float(v) for v in incumbent))


def update(state: TrustRegionState, improved: bool) -> TrustRegionState:
    """One success/failure step of the side-length schedule."""
    if state.terminated:
        raise LifecycleError("cannot update a terminated trust region")
    cfg = state.config
    tau = state.side_length
    successes, failures = state.success_count, state.failure_count
    if improved:
        successes += 1
        failures = 0
        if successes >= cfg.success_tolerance:
            tau = min(2.0 * tau, cfg.tau_max)
            successes = 0
    else:
        failures += 1
        successes = 0
        if failures >= cfg.failure_tolerance:
            tau = tau / 2.0
            failures = 0
    return replace(
        state,
        side_length=tau,
        success_count=successes,
        failure_count=failures,
        terminated=tau < cfg.tau_threshold,
    )


def region_bounds(
    state: TrustRegionState,
    lengthscale_weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension interval of the region intersected with the unit cube.

    Side lengths default to the scalar tau; when lengthscale weighting is on
    and normalized weights are supplied, dimension j gets side
    tau * weight_j clamped into [tau/4, 4 tau], so smooth dimensions open up
    and sensitive ones tighten.
    """
    center = state.center_array()
    tau = state.side_length
    if state.config.lengthscale_weighting and lengthscale_weights is not None:
        weights = np.asarray(lengthscale_weights, dtype=float)
        if weights.shape != (state.dim,):
            raise ContractViolationError("lengthscale weights must match dimension")
        sides = np.clip(tau * weights, tau / 4.0, 4.0 * tau)
    else:
        sides = np.full(state.dim, tau)
    lower = np.maximum(0.0, center - sides / 2.0)
    upper = np.minimum(1.0, center + sides / 2.0)
    return lower, upper
