"""Analytic machine model shared by the engine and the simulator.

Two things are known in closed form before any experiment runs:

* throughput — wafer/hr follows directly from the three pass speeds plus a
  fixed handling overhead, and
* the machine limits — five inequality constraints (feasible iff <= 0) that
  the tool enforces through its interlock: pulse-energy caps on the dicing
  and recovery passes, a focus window of one Rayleigh length on each focused
  pass, and a combined stage-speed ceiling.

The trenching pass runs at a fixed internal pulse frequency
(``trench_frequency_hz``); it is not a tunable parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import Configuration

__all__ = ["ThroughputModel", "MachineLimits", "KNOWN_CONSTRAINT_NAMES"]


@dataclass(frozen=True)
class ThroughputModel:
    """t(x) = 3600 / (L * (1/v_T + 1/v_D + 1/v_R) + T_oh)  [wafer/hr]

    with per-pass speeds v = step * pulse frequency in um/s, total street
    length L in um and a constant handling overhead in seconds.
    """

    street_length_um: float = 1.15e8
    overhead_s: float = 420.0
    trench_frequency_hz: float = 100_000.0

    def pass_speeds(self, config: Configuration) -> tuple[float, float, float]:
        v_trench = config.trench_step * self.trench_frequency_hz
        v_dice = config.dice_step * config.dice_frequency
        v_recov = config.recov_step * config.recov_frequency
        return v_trench, v_dice, v_recov

    def wafers_per_hour(self, config: Configuration) -> float:
        v_t, v_d, v_r = self.pass_speeds(config)
        seconds = self.street_length_um * (1.0 / v_t + 1.0 / v_d + 1.0 / v_r)
        return 3600.0 / (seconds + self.overhead_s)

    def to_dict(self) -> dict:
        return {
            "street_length_um": self.street_length_um,
            "overhead_s": self.overhead_s,
            "trench_frequency_hz": self.trench_frequency_hz,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ThroughputModel":
        return cls(**payload)


KNOWN_CONSTRAINT_NAMES = (
    "dice_pulse_energy",
    "recov_pulse_energy",
    "dice_focus_window",
    "recov_focus_window",
    "stage_speed",
)


@dataclass(frozen=True)
class MachineLimits:
    """The five known machine limits, each scaled so g(x) = 0 sits exactly on
    the limit and typical magnitudes are O(1).

    g1: dice pulse energy      power / frequency <= dice_energy_cap_j
    g2: recovery pulse energy  power / frequency <= recov_energy_cap_j
    g3: dice focus             |focus| <= rayleigh_um     (quadratic form)
    g4: recovery focus         |focus| <= rayleigh_um
    g5: stage speed            v_dice + v_recov <= stage_speed_cap_um_s
    """

    dice_energy_cap_j: float = 1.0e-4
    recov_energy_cap_j: float = 6.0e-5
    rayleigh_um: float = 50.0
    stage_speed_cap_um_s: float = 2.4e6

    def evaluate(self, config: Configuration) -> np.ndarray:
        """Vector of the five constraint values; feasible iff all <= 0."""
        g1 = config.dice_power / (config.dice_frequency * self.dice_energy_cap_j) - 1.0
        g2 = config.recov_power / (config.recov_frequency * self.recov_energy_cap_j) - 1.0
        g3 = (config.dice_focus / self.rayleigh_um) ** 2 - 1.0
        g4 = (config.recov_focus / self.rayleigh_um) ** 2 - 1.0
        v_sum = config.dice_step * config.dice_frequency + config.recov_step * config.recov_frequency
        g5 = v_sum / self.stage_speed_cap_um_s - 1.0
        return np.array([g1, g2, g3, g4, g5])

    def is_feasible(self, config: Configuration, tol: float = 0.0) -> bool:
        return bool(np.all(self.evaluate(config) <= tol))

    def evaluate_batch(self, physical: np.ndarray) -> np.ndarray:
        """(n, 5) constraint values for an (n, 11) matrix of physical rows in
        the canonical parameter order; must agree with :meth:`evaluate`."""
        p = np.atleast_2d(np.asarray(physical, dtype=float))
        dice_power, dice_focus = p[:, 3], p[:, 4]
        dice_step, dice_freq = p[:, 5], p[:, 6]
        recov_power, recov_focus = p[:, 7], p[:, 8]
        recov_step, recov_freq = p[:, 9], p[:, 10]
        g1 = dice_power / (dice_freq * self.dice_energy_cap_j) - 1.0
        g2 = recov_power / (recov_freq * self.recov_energy_cap_j) - 1.0
        g3 = (dice_focus / self.rayleigh_um) ** 2 - 1.0
        g4 = (recov_focus / self.rayleigh_um) ** 2 - 1.0
        g5 = (dice_step * dice_freq + recov_step * recov_freq) / self.stage_speed_cap_um_s - 1.0
        return np.column_stack([g1, g2, g3, g4, g5])

    def feasible_mask(self, physical: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return np.all(self.evaluate_batch(physical) <= tol, axis=1)

    def to_dict(self) -> dict:
        return {
            "dice_energy_cap_j": self.dice_energy_cap_j,
            "recov_energy_cap_j": self.recov_energy_cap_j,
            "rayleigh_um": self.rayleigh_um,
            "stage_speed_cap_um_s": self.stage_speed_cap_um_s,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MachineLimits":
        return cls(**payload)
