"""Measured outcomes of one evaluated configuration.

The optimization engine keeps two datasets: objective measurements (widths,
burr, die strengths) and constraint measurements (crack/chipout fractions and
the separation yield).  Constraint channels are stored as continuous
violation targets -- observed minus permitted, sign-flipped for separation --
so feasibility is simply "every target <= 0".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

__all__ = ["ObjectiveObservation", "ConstraintObservation", "ConstraintThresholds"]


def _check_fraction(name: str, value: float):
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must be a fraction in [0, 1], got {value}")


@dataclass(frozen=True)
class ConstraintThresholds:
    """Permitted levels per failure mode.  ``chip_max`` is None when the
    chipout channel is not a relevant failure mode for the material."""

    crack_max: float = 0.10
    chip_max: float | None = 0.10
    separation_required: float = 1.0

    def to_dict(self) -> dict:
        return {
            "crack_max": self.crack_max,
            "chip_max": self.chip_max,
            "separation_required": self.separation_required,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConstraintThresholds":
        return cls(**payload)

    @property
    def constraint_names(self) -> tuple[str, ...]:
        names = ["front_cracks", "corner_cracks", "back_cracks", "separation"]
        if self.chip_max is not None:
            names.append("chipouts")
        return tuple(names)


@dataclass(frozen=True)
class ConstraintObservation:
    front_cracks: float
    corner_cracks: float
    back_cracks: float
    separation: float
    chipouts: float | None = None

    def __post_init__(self):
        for name in ("front_cracks", "corner_cracks", "back_cracks", "separation"):
            _check_fraction(name, getattr(self, name))
        if self.chipouts is not None:
            _check_fraction("chipouts", self.chipouts)

    def violations(self, thresholds: ConstraintThresholds) -> dict[str, float]:
        """Violation per channel: observed - permitted (separation flipped),
        so feasible <=> value <= 0."""
        out = {
            "front_cracks": self.front_cracks - thresholds.crack_max,
            "corner_cracks": self.corner_cracks - thresholds.crack_max,
            "back_cracks": self.back_cracks - thresholds.crack_max,
            "separation": thresholds.separation_required - self.separation,
        }
        if thresholds.chip_max is not None:
            if self.chipouts is None:
                raise ValidationError("chipouts measurement required for this material")
            out["chipouts"] = self.chipouts - thresholds.chip_max
        return out

    def is_feasible(self, thresholds: ConstraintThresholds, tol: float = 1e-9) -> bool:
        return all(v <= tol for v in self.violations(thresholds).values())

    def to_dict(self) -> dict:
        return {
            "front_cracks": self.front_cracks,
            "corner_cracks": self.corner_cracks,
            "back_cracks": self.back_cracks,
            "separation": self.separation,
            "chipouts": self.chipouts,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConstraintObservation":
        return cls(
            front_cracks=float(payload["front_cracks"]),
            corner_cracks=float(payload["corner_cracks"]),
            back_cracks=float(payload["back_cracks"]),
            separation=float(payload["separation"]),
            chipouts=None if payload.get("chipouts") is None else float(payload["chipouts"]),
        )


@dataclass(frozen=True)
class ObjectiveObservation:
    dicing_width: float
    mod_width: float
    burr: float
    front_strengths: tuple[float, ...] = ()
    back_strengths: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("dicing_width", "mod_width", "burr"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        front = tuple(float(v) for v in self.front_strengths)
        back = tuple(float(v) for v in self.back_strengths)
        object.__setattr__(self, "front_strengths", front)
        object.__setattr__(self, "back_strengths", back)
        if (len(front) == 0) != (len(back) == 0):
            raise ValidationError("front and back strength lists must both be present or both empty")
        if len(front) != len(back):
            raise ValidationError("front and back strength lists must have equal length")
        for side, values in (("front", front), ("back", back)):
            if any(not math.isfinite(v) or v <= 0 for v in values):
                raise ValidationError(f"{side} strengths must be positive MPa values")

    @property
    def has_destructive(self) -> bool:
        return len(self.front_strengths) > 0

    def mean_front(self) -> float:
        return sum(self.front_strengths) / len(self.front_strengths)

    def mean_back(self) -> float:
        return sum(self.back_strengths) / len(self.back_strengths)

    def to_dict(self) -> dict:
        return {
            "dicing_width": self.dicing_width,
            "mod_width": self.mod_width,
            "burr": self.burr,
            "front_strengths": list(self.front_strengths),
            "back_strengths": list(self.back_strengths),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ObjectiveObservation":
        return cls(
            dicing_width=float(payload["dicing_width"]),
            mod_width=float(payload["mod_width"]),
            burr=float(payload["burr"]),
            front_strengths=tuple(payload.get("front_strengths") or ()),
            back_strengths=tuple(payload.get("back_strengths") or ()),
        )
