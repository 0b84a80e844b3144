"""The eleven-parameter three-pass process space.

A dicing run is three sequential laser passes (trenching, dicing, recovery);
the trenching pass exposes power/step/angle, the other two power/focus/step/
frequency.  All engine mathematics happens in the unit cube; physical values
exist only at the edges (machine limits, the simulator, payloads).

Machines accept parameters on a fixed grid (powers in 0.1 or 0.2 W ticks,
focus in 10 um ticks, frequencies in 1 kHz ticks), so every configuration
this package emits is grid-snapped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, EmptyRegionError, ValidationError

__all__ = [
    "Parameter",
    "ParameterSpace",
    "Configuration",
    "default_space",
    "PARAMETER_NAMES",
]


@dataclass(frozen=True)
class Parameter:
    """One tunable axis: closed physical bounds plus the machine grid step.

    The representable values are ``low + k * step`` for integer k; ``high``
    is expected to be on that grid.
    """

    name: str
    low: float
    high: float
    step: float
    unit: str

    def __post_init__(self):
        if not (self.low < self.high):
            raise ValidationError(f"{self.name}: low must be < high")
        if self.step <= 0:
            raise ValidationError(f"{self.name}: step must be positive")
        n_steps = (self.high - self.low) / self.step
        if abs(n_steps - round(n_steps)) > 1e-6:
            raise ValidationError(f"{self.name}: high is not on the step grid")

    @property
    def n_grid(self) -> int:
        return int(round((self.high - self.low) / self.step)) + 1

    def snap(self, value: float) -> float:
        """Nearest on-grid value, clamped into [low, high]."""
        k = round((value - self.low) / self.step)
        k = min(max(k, 0), self.n_grid - 1)
        return self.low + k * self.step


# Order matters: it is the canonical layout of every 11-vector in the engine.
PARAMETER_NAMES = (
    "trench_power",
    "trench_step",
    "trench_angle",
    "dice_power",
    "dice_focus",
    "dice_step",
    "dice_frequency",
    "recov_power",
    "recov_focus",
    "recov_step",
    "recov_frequency",
)


@dataclass(frozen=True)
class Configuration:
    """One grid-snapped point of the process space, in physical units."""

    trench_power: float      # W
    trench_step: float       # um between pulses
    trench_angle: float      # deg, beam-splitter rotation
    dice_power: float        # W
    dice_focus: float        # um relative to surface
    dice_step: float         # um
    dice_frequency: float    # Hz
    recov_power: float       # W
    recov_focus: float       # um
    recov_step: float        # um
    recov_frequency: float   # Hz

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAMETER_NAMES], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {n: float(getattr(self, n)) for n in PARAMETER_NAMES}

    @classmethod
    def from_array(cls, values) -> "Configuration":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(PARAMETER_NAMES),):
            raise ContractViolationError(
                f"expected {len(PARAMETER_NAMES)} values, got shape {values.shape}"
            )
        return cls(**{n: float(v) for n, v in zip(PARAMETER_NAMES, values)})

    @classmethod
    def from_dict(cls, payload: dict) -> "Configuration":
        missing = [n for n in PARAMETER_NAMES if n not in payload]
        if missing:
            raise ValidationError(f"configuration missing fields: {missing}")
        return cls(**{n: float(payload[n]) for n in PARAMETER_NAMES})


class ParameterSpace:
    """Affine map between physical parameter vectors and the unit cube,
    plus grid snapping.  Normalized coordinates are what the GPs and the
    trust region see; physical coordinates are what machines and humans see.
    """

    def __init__(self, parameters: list[Parameter]):
        if [p.name for p in parameters] != list(PARAMETER_NAMES):
            raise ValidationError(
                "parameter list must match the canonical 11-parameter layout"
            )
        self.parameters = list(parameters)
        self._low = np.array([p.low for p in parameters])
        self._high = np.array([p.high for p in parameters])
        self._step = np.array([p.step for p in parameters])
        self._span = self._high - self._low

    @property
    def dim(self) -> int:
        return len(self.parameters)

    # -- conversions ------------------------------------------------------

    def to_unit(self, physical: np.ndarray) -> np.ndarray:
        physical = np.asarray(physical, dtype=float)
        return (physical - self._low) / self._span

    def to_physical(self, unit: np.ndarray) -> np.ndarray:
        unit = np.asarray(unit, dtype=float)
        return self._low + unit * self._span

    def config_to_unit(self, config: Configuration) -> np.ndarray:
        return self.to_unit(config.as_array())

    def unit_to_config(self, unit: np.ndarray) -> Configuration:
        return Configuration.from_array(self.to_physical(unit))

    # -- grid --------------------------------------------------------------

    def snap_physical(self, physical: np.ndarray) -> np.ndarray:
        """Row-wise snap to the machine grid, clamped into the box."""
        physical = np.atleast_2d(np.asarray(physical, dtype=float))
        k = np.rint((physical - self._low) / self._step)
        n_grid = np.rint(self._span / self._step)
        k = np.clip(k, 0, n_grid)
        return self._low + k * self._step

    def snap_unit(self, unit: np.ndarray) -> np.ndarray:
        """Snap normalized rows so their physical image is on-grid."""
        unit = np.atleast_2d(np.asarray(unit, dtype=float))
        return self.to_unit(self.snap_physical(self.to_physical(unit)))

    def snap_config(self, config: Configuration) -> Configuration:
        return Configuration.from_array(self.snap_physical(config.as_array())[0])

    def is_on_grid(self, config: Configuration, tol: float = 1e-9) -> bool:
        x = config.as_array()
        if np.any(x < self._low - tol) or np.any(x > self._high + tol):
            return False
        resid = (x - self._low) / self._step
        return bool(np.all(np.abs(resid - np.rint(resid)) * self._step < tol))

    def grid_index_bounds(self, lower_unit: np.ndarray, upper_unit: np.ndarray):
        """Per-dimension inclusive grid index ranges covered by a normalized box.

        Where the box is narrower than one grid step the range degenerates to
        the single grid point nearest the box center, so candidate generation
        never dead-ends inside a shrunken trust region.
        """
        lower_unit = np.asarray(lower_unit, dtype=float)
        upper_unit = np.asarray(upper_unit, dtype=float)
        if lower_unit.shape != (self.dim,) or upper_unit.shape != (self.dim,):
            raise ContractViolationError("bounds must be 11-vectors")
        if np.any(upper_unit < lower_unit - 1e-12):
            raise EmptyRegionError("upper bound below lower bound")
        lo_phys = self.to_physical(np.clip(lower_unit, 0.0, 1.0))
        hi_phys = self.to_physical(np.clip(upper_unit, 0.0, 1.0))
        n_grid = np.rint(self._span / self._step).astype(int)
        idx_lo = np.ceil((lo_phys - self._low) / self._step - 1e-9).astype(int)
        idx_hi = np.floor((hi_phys - self._low) / self._step + 1e-9).astype(int)
        idx_lo = np.clip(idx_lo, 0, n_grid)
        idx_hi = np.clip(idx_hi, 0, n_grid)
        degenerate = idx_lo > idx_hi
        if np.any(degenerate):
            center = np.rint(((lo_phys + hi_phys) / 2 - self._low) / self._step)
            center = np.clip(center, 0, n_grid).astype(int)
            idx_lo = np.where(degenerate, center, idx_lo)
            idx_hi = np.where(degenerate, center, idx_hi)
        return idx_lo, idx_hi

    def unit_from_grid_index(self, indices: np.ndarray) -> np.ndarray:
        physical = self._low + np.asarray(indices, dtype=float) * self._step
        return self.to_unit(physical)

    def validate_config(self, config: Configuration):
        x = config.as_array()
        if not np.all(np.isfinite(x)):
            raise ValidationError("configuration contains non-finite values")
        if np.any(x < self._low - 1e-9) or np.any(x > self._high + 1e-9):
            bad = [
                p.name
                for p, v in zip(self.parameters, x)
                if v < p.low - 1e-9 or v > p.high + 1e-9
            ]
            raise ValidationError(f"configuration outside bounds: {bad}")

    # -- (de)serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": p.name, "low": p.low, "high": p.high, "step": p.step, "unit": p.unit}
                for p in self.parameters
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ParameterSpace":
        return cls([Parameter(**entry) for entry in payload["parameters"]])


def default_space() -> ParameterSpace:
    """Bounds of the reference machine.  The grid steps are the machine's
    input resolution; bounds are multiples of the step so the grid covers
    the box exactly.
    """
    return ParameterSpace(
        [
            Parameter("trench_power", 0.5, 5.0, 0.1, "W"),
            Parameter("trench_step", 1.0, 10.0, 0.1, "um"),
            Parameter("trench_angle", 0.0, 30.0, 0.2, "deg"),
            Parameter("dice_power", 1.0, 10.0, 0.2, "W"),
            Parameter("dice_focus", -60.0, 60.0, 10.0, "um"),
            Parameter("dice_step", 1.0, 10.0, 0.1, "um"),
            Parameter("dice_frequency", 50_000.0, 200_000.0, 1000.0, "Hz"),
            Parameter("recov_power", 0.6, 6.0, 0.2, "W"),
            Parameter("recov_focus", -60.0, 60.0, 10.0, "um"),
            Parameter("recov_step", 1.0, 10.0, 0.1, "um"),
            Parameter("recov_frequency", 50_000.0, 200_000.0, 1000.0, "Hz"),
        ]
    )
