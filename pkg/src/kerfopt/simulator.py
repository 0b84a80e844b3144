"""Synthetic wafer: a deterministic stand-in for the physical dicing tool.

The real laser-material interaction is a proprietary black box; this module
replaces it with documented smooth surfaces that reproduce the qualitative
mechanisms the engine must cope with:

* energy balance -- every damage channel is driven by the dicing-pass energy
  per unit cut length, ``e_cut = dice_power / (dice_step * dice_frequency)``
  attenuated by defocus;
* heat-affected-zone penalty -- die strength falls when ``e_cut`` is pushed
  past a material limit;
* recovery healing -- a wide Gaussian bump in (recov_power, recov_focus),
  gated by a log-Gaussian window on the recovery energy line density,
  restores strength and suppresses front damage;
* trench shielding -- a well-powered, well-aligned trenching pass protects
  the top layer; without it high dicing power chips the coating (the chipout
  channel, active only on layered product material);
* cut-through -- separation stays at 100% only above a minimum dicing power
  and energy density, and excess energy cracks the backside instead.

All constants live in :class:`LatentConstants` and are calibration targets,
not physics.  Every evaluation is a pure function of (configuration, seed);
noise enters only through widths/burr (small Gaussian) and destructive
strength tests (sigma = 50 MPa around the latent mean).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .errors import (
    MachineInfeasibleError,
    PresetConstructionError,
    ValidationError,
)
from .machine import MachineLimits, ThroughputModel
from .observations import ConstraintObservation, ConstraintThresholds, ObjectiveObservation
from .space import Configuration, ParameterSpace, default_space

__all__ = [
    "LatentConstants",
    "WaferPreset",
    "get_preset",
    "PRESET_NAMES",
    "evaluate_optical",
    "evaluate_destructive",
    "oracle_best",
    "SimulatorBlackbox",
    "campaign_config_for_preset",
]


def campaign_config_for_preset(preset_name: str, seed: int = 0, **overrides):
    """Campaign configuration wired to a simulator preset: its thresholds,
    machine limits, throughput constants, and the material's weight preset.
    Batch size defaults to 2 on bare silicon and 3 on product wafers."""
    from .acquisition import WEIGHT_PRESETS
    from .campaign import CampaignConfig

    preset = get_preset(preset_name)
    defaults = dict(
        weights=WEIGHT_PRESETS[preset_name],
        thresholds=preset.thresholds,
        machine=preset.machine,
        throughput=preset.throughput,
        batch_size=2 if preset_name == "bare_silicon" else 3,
        seed=seed,
    )
    defaults.update(overrides)
    return CampaignConfig(**defaults)

PRESET_NAMES = ("bare_silicon", "product")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _fraction_channel(x, steepness, threshold):
    """Logistic squash positioned so the channel equals ``threshold`` exactly
    where the driving quantity x crosses 1."""
    return _sigmoid(steepness * (x - 1.0) + math.log(threshold / (1.0 - threshold)))


@dataclass(frozen=True)
class LatentConstants:
    """Every tunable number of the synthetic surfaces, in one place."""

    # width = width_base + width_gain * sqrt(dice_power) * (1.25 - 0.25 * focus_q)
    width_base: float = 21.0
    width_gain: float = 3.2
    # energy coupling: focus quality exp(-(focus/focus_scale)^2), effective
    # cut energy e_cut = e_d * (0.35 + 0.65 * focus_q)
    focus_scale_um: float = 45.0
    # trench shielding: sigmoid in trench energy line density, modulated by
    # beam-pattern alignment around the preferred angle
    shield_e_ref: float = 8.0e-6
    shield_steepness: float = 2.0
    angle_opt_deg: float = 14.0
    angle_width_deg: float = 9.0
    # recovery healing bump and energy window
    heal_power_center_w: float = 3.4
    heal_power_width_w: float = 2.2
    heal_focus_width_um: float = 55.0
    heal_e_ref: float = 6.0e-6
    heal_e_logwidth: float = 1.0
    # modification width and burr growth with cut energy
    mod_e_ref: float = 2.0e-5
    burr_e_ref: float = 2.6e-5
    # separation gate: minimum power and minimum effective energy
    sep_power_min_w: float = 2.8
    sep_power_scale_w: float = 0.5
    sep_e_min: float = 6.0e-6
    sep_e_scale: float = 0.15
    sep_slope: float = 0.35
    # crack drivers
    front_crack_e_ref: float = 2.9e-5
    front_crack_steepness: float = 3.5
    corner_speed_ref: float = 1.0e6
    corner_recov_e_ref: float = 2.4e-5
    corner_steepness: float = 4.0
    back_crack_e_ref: float = 3.4e-5
    back_crack_steepness: float = 5.0
    # chipouts (layered material only)
    chip_power_ref_w: float = 6.5
    chip_steepness: float = 6.0
    # strengths: base - haz * sigmoid(2.5 (e_cut/e_haz - 1)) + amp * heal
    front_strength_base: float = 585.0
    front_haz_drop: float = 140.0
    front_heal_gain: float = 130.0
    front_haz_e_ref: float = 2.4e-5
    back_strength_base: float = 545.0
    back_haz_drop: float = 120.0
    back_heal_gain: float = 90.0
    back_haz_e_ref: float = 3.0e-5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, payload: dict) -> "LatentConstants":
        return cls(**payload)


@dataclass(frozen=True)
class WaferPreset:
    """Material-specific requirement thresholds, noise levels and surface
    constants, plus the machine model the tool enforces."""

    preset_id: str
    thresholds: ConstraintThresholds
    width_band: tuple[float, float] = (28.0, 32.0)
    burr_max: float = 2.5
    latent: LatentConstants = field(default_factory=LatentConstants)
    strength_noise_mpa: float = 50.0
    width_noise_um: float = 0.3
    burr_noise_um: float = 0.1
    machine: MachineLimits = field(default_factory=MachineLimits)
    throughput: ThroughputModel = field(default_factory=ThroughputModel)

    @property
    def chipouts_active(self) -> bool:
        return self.thresholds.chip_max is not None

    def to_dict(self) -> dict:
        return {
            "preset_id": self.preset_id,
            "thresholds": self.thresholds.to_dict(),
            "width_band": list(self.width_band),
            "burr_max": self.burr_max,
            "latent": self.latent.to_dict(),
            "strength_noise_mpa": self.strength_noise_mpa,
            "width_noise_um": self.width_noise_um,
            "burr_noise_um": self.burr_noise_um,
            "machine": self.machine.to_dict(),
            "throughput": self.throughput.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "WaferPreset":
        return cls(
            preset_id=payload["preset_id"],
            thresholds=ConstraintThresholds.from_dict(payload["thresholds"]),
            width_band=tuple(payload["width_band"]),
            burr_max=payload["burr_max"],
            latent=LatentConstants.from_dict(payload["latent"]),
            strength_noise_mpa=payload["strength_noise_mpa"],
            width_noise_um=payload["width_noise_um"],
            burr_noise_um=payload["burr_noise_um"],
            machine=MachineLimits.from_dict(payload["machine"]),
            throughput=ThroughputModel.from_dict(payload["throughput"]),
        )


def get_preset(name: str) -> WaferPreset:
    if name == "bare_silicon":
        return WaferPreset(
            preset_id="bare_silicon",
            thresholds=ConstraintThresholds(crack_max=0.10, chip_max=None),
        )
    if name == "product":
        # Layered material: weaker dies, chipouts become the binding failure
        # mode, and the backside metal narrows the damage window.
        return WaferPreset(
            preset_id="product",
            thresholds=ConstraintThresholds(crack_max=0.10, chip_max=0.10),
            latent=replace(
                LatentConstants(),
                front_strength_base=430.0,
                front_haz_drop=120.0,
                front_heal_gain=95.0,
                front_haz_e_ref=2.2e-5,
                back_strength_base=360.0,
                back_haz_drop=90.0,
                back_heal_gain=45.0,
                back_haz_e_ref=2.6e-5,
            ),
        )
    raise ValidationError(f"unknown preset '{name}'; choose from {PRESET_NAMES}")


# ---------------------------------------------------------------------------
# Latent surfaces (vectorized over (n, 11) physical matrices)
# ---------------------------------------------------------------------------


def latent_surfaces(physical: np.ndarray, preset: WaferPreset) -> dict[str, np.ndarray]:
    """Noise-free values of every objective and constraint channel."""
    p = np.atleast_2d(np.asarray(physical, dtype=float))
    c = preset.latent
    trench_power, trench_step, trench_angle = p[:, 0], p[:, 1], p[:, 2]
    dice_power, dice_focus, dice_step, dice_freq = p[:, 3], p[:, 4], p[:, 5], p[:, 6]
    recov_power, recov_focus, recov_step, recov_freq = p[:, 7], p[:, 8], p[:, 9], p[:, 10]

    v_dice = dice_step * dice_freq
    e_dice = dice_power / v_dice
    focus_q = np.exp(-((dice_focus / c.focus_scale_um) ** 2))
    e_cut = e_dice * (0.35 + 0.65 * focus_q)

    e_trench = trench_power / (trench_step * preset.throughput.trench_frequency_hz)
    angle_align = np.exp(-(((trench_angle - c.angle_opt_deg) / c.angle_width_deg) ** 2))
    shield = _sigmoid(c.shield_steepness * (e_trench / c.shield_e_ref - 1.0)) * (
        0.6 + 0.4 * angle_align
    )

    e_recov = recov_power / (recov_step * recov_freq)
    heal_window = np.exp(-((np.log(e_recov / c.heal_e_ref) / c.heal_e_logwidth) ** 2))
    heal = (
        np.exp(
            -(((recov_power - c.heal_power_center_w) / c.heal_power_width_w) ** 2)
            - ((recov_focus / c.heal_focus_width_um) ** 2)
        )
        * heal_window
    )

    width = c.width_base + c.width_gain * np.sqrt(dice_power) * (1.25 - 0.25 * focus_q)
    mod_width = width + 0.4 + 4.5 * _sigmoid(2.0 * (e_cut / c.mod_e_ref - 1.0)) + 0.8 * (1.0 - heal)
    burr = (
        0.25
        + 3.0 * _sigmoid(2.5 * (e_cut / c.burr_e_ref - 1.0))
        + 1.0 * (1.0 - heal) * _sigmoid(2.0 * (e_cut / 1.2e-5 - 1.0))
    )

    sep_margin = np.minimum(
        (dice_power - c.sep_power_min_w) / c.sep_power_scale_w,
        (e_cut / c.sep_e_min - 1.0) / c.sep_e_scale,
    )
    separation = np.where(
        sep_margin >= 0.0, 1.0, np.maximum(0.0, 1.0 + c.sep_slope * sep_margin)
    )

    thr = preset.thresholds
    x_front = (e_cut / c.front_crack_e_ref) * (1.0 - 0.30 * shield) * (1.0 - 0.35 * heal)
    front_cracks = _fraction_channel(x_front, c.front_crack_steepness, thr.crack_max)
    x_corner = (
        0.62 * (v_dice / c.corner_speed_ref)
        + 0.45 * (e_recov / c.corner_recov_e_ref)
        + 0.28 * (1.0 - angle_align)
    )
    corner_cracks = _fraction_channel(x_corner, c.corner_steepness, thr.crack_max)
    x_back = e_cut / c.back_crack_e_ref
    back_cracks = _fraction_channel(x_back, c.back_crack_steepness, thr.crack_max)

    front_strength = (
        c.front_strength_base
        - c.front_haz_drop * _sigmoid(2.5 * (e_cut / c.front_haz_e_ref - 1.0))
        + c.front_heal_gain * heal
    )
    back_strength = (
        c.back_strength_base
        - c.back_haz_drop * _sigmoid(2.5 * (e_cut / c.back_haz_e_ref - 1.0))
        + c.back_heal_gain * heal
    )

    out = {
        "dicing_width": width,
        "mod_width": mod_width,
        "burr": burr,
        "front_strength": front_strength,
        "back_strength": back_strength,
        "front_cracks": front_cracks,
        "corner_cracks": corner_cracks,
        "back_cracks": back_cracks,
        "separation": separation,
    }
    if preset.chipouts_active:
        x_chip = (dice_power / c.chip_power_ref_w) * (1.3 - shield)
        out["chipouts"] = _fraction_channel(x_chip, c.chip_steepness, thr.chip_max)
    return out


def _config_rng(config: Configuration, seed: int, tag: int) -> np.random.Generator:
    """Pure function of (configuration, seed, measurement kind)."""
    bits = np.asarray(config.as_array(), dtype=np.float64).view(np.uint64)
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, tag] + [int(b) for b in bits]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _require_machine_feasible(config: Configuration, preset: WaferPreset):
    values = preset.machine.evaluate(config)
    if np.any(values > 0):
        raise MachineInfeasibleError(
            f"machine interlock: constraint values {np.round(values, 4).tolist()}"
        )


def throughput(config: Configuration, preset: WaferPreset) -> float:
    return preset.throughput.wafers_per_hour(config)


def known_constraints(config: Configuration, preset: WaferPreset) -> np.ndarray:
    return preset.machine.evaluate(config)


def evaluate_optical(
    config: Configuration, preset: WaferPreset, seed: int
) -> tuple[ObjectiveObservation, ConstraintObservation]:
    """Optical inspection: widths/burr with measurement noise, crack and
    chipout fractions and the separation yield (deterministic counts)."""
    _require_machine_feasible(config, preset)
    latent = latent_surfaces(config.as_array()[None, :], preset)
    rng = _config_rng(config, seed, tag=1)
    width = latent["dicing_width"][0] + preset.width_noise_um * rng.standard_normal()
    mod = latent["mod_width"][0] + preset.width_noise_um * rng.standard_normal()
    burr = latent["burr"][0] + preset.burr_noise_um * rng.standard_normal()
    objective = ObjectiveObservation(
        dicing_width=max(0.0, width),
        mod_width=max(0.0, mod),
        burr=max(0.0, burr),
    )
    constraint = ConstraintObservation(
        front_cracks=float(latent["front_cracks"][0]),
        corner_cracks=float(latent["corner_cracks"][0]),
        back_cracks=float(latent["back_cracks"][0]),
        separation=float(latent["separation"][0]),
        chipouts=float(latent["chipouts"][0]) if preset.chipouts_active else None,
    )
    return objective, constraint


def evaluate_destructive(
    config: Configuration, preset: WaferPreset, n_reps: int, seed: int
) -> tuple[list[float], list[float]]:
    """Three-point bend tests: n_reps draws per side around the latent
    strength, sigma = strength_noise_mpa."""
    if n_reps < 1:
        raise ValidationError("n_reps must be >= 1")
    _require_machine_feasible(config, preset)
    latent = latent_surfaces(config.as_array()[None, :], preset)
    rng = _config_rng(config, seed, tag=2)
    front = latent["front_strength"][0] + preset.strength_noise_mpa * rng.standard_normal(n_reps)
    back = latent["back_strength"][0] + preset.strength_noise_mpa * rng.standard_normal(n_reps)
    return [float(max(v, 1.0)) for v in front], [float(max(v, 1.0)) for v in back]


class SimulatorBlackbox:
    """Evaluator facade for autonomous closed-loop runs.

    Measurement noise seeds advance with an internal call counter, so a full
    run is reproducible from (preset, seed) while repeated evaluations of the
    same configuration still see fresh noise.
    """

    def __init__(self, preset: WaferPreset, seed: int):
        self.preset = preset
        self.seed = int(seed)
        self.calls = 0

    def _next_seed(self) -> int:
        self.calls += 1
        return self.seed * 1_000_003 + self.calls

    def optical(self, config: Configuration):
        return evaluate_optical(config, self.preset, self._next_seed())

    def destructive(self, config: Configuration, n_reps: int):
        return evaluate_destructive(config, self.preset, n_reps, self._next_seed())


# ---------------------------------------------------------------------------
# Requirement feasibility and the brute-force optimum oracle
# ---------------------------------------------------------------------------


def requirement_feasible_mask(latent: dict[str, np.ndarray], preset: WaferPreset) -> np.ndarray:
    """Noise-free requirement check: width band, burr cap, crack/chipout
    caps, full separation."""
    thr = preset.thresholds
    ok = (latent["dicing_width"] >= preset.width_band[0]) & (
        latent["dicing_width"] <= preset.width_band[1]
    )
    ok &= latent["burr"] <= preset.burr_max
    ok &= latent["front_cracks"] <= thr.crack_max
    ok &= latent["corner_cracks"] <= thr.crack_max
    ok &= latent["back_cracks"] <= thr.crack_max
    ok &= latent["separation"] >= thr.separation_required
    if preset.chipouts_active:
        ok &= latent["chipouts"] <= thr.chip_max
    return ok


def latent_utility(
    physical: np.ndarray, preset: WaferPreset, weights
) -> np.ndarray:
    """Noise-free utility of physical rows under the given weights."""
    from .acquisition import UtilityWeights  # local import to avoid a cycle

    assert isinstance(weights, UtilityWeights)
    latent = latent_surfaces(physical, preset)
    p = np.atleast_2d(np.asarray(physical, dtype=float))
    tm = preset.throughput
    v_t = p[:, 1] * tm.trench_frequency_hz
    v_d = p[:, 5] * p[:, 6]
    v_r = p[:, 9] * p[:, 10]
    t = 3600.0 / (tm.street_length_um * (1 / v_t + 1 / v_d + 1 / v_r) + tm.overhead_s)
    u = weights.w_throughput * t
    u -= weights.w_width * np.abs(latent["dicing_width"] - weights.width_target)
    u -= weights.w_mod * np.abs(latent["mod_width"] - weights.mod_target)
    u -= weights.w_burr * latent["burr"]
    u += weights.w_front * (latent["front_strength"] - weights.strength_base)
    u += weights.w_back * (latent["back_strength"] - weights.strength_base)
    return u


def oracle_best(
    preset: WaferPreset,
    weights,
    samples: int = 100_000,
    seed: int = 0,
    space: ParameterSpace | None = None,
    polish_sweeps: int = 3,
    polish_radius: int = 4,
) -> tuple[Configuration, float, bool]:
    """Ground-truth reference: dense Sobol scan of the box restricted to
    machine- and requirement-feasible points, evaluated noise-free, followed
    by a coordinate-descent polish on the machine grid."""
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    space = space or default_space()
    sobol = qmc.Sobol(d=space.dim, scramble=True, seed=int(seed))
    best_util = -np.inf
    best_phys = None
    chunk = 200_000
    remaining = samples
    while remaining > 0:
        take = min(chunk, remaining)
        remaining -= take
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="The balance properties of Sobol")
            unit = sobol.random(take)
        phys = space.snap_physical(space.to_physical(unit))
        mask = preset.machine.feasible_mask(phys)
        phys = phys[mask]
        if phys.shape[0] == 0:
            continue
        latent = latent_surfaces(phys, preset)
        mask_req = requirement_feasible_mask(latent, preset)
        phys = phys[mask_req]
        if phys.shape[0] == 0:
            continue
        util = latent_utility(phys, preset, weights)
        idx = int(np.argmax(util))
        if util[idx] > best_util:
            best_util = float(util[idx])
            best_phys = phys[idx].copy()
    if best_phys is None:
        raise PresetConstructionError(
            f"preset '{preset.preset_id}' yielded no feasible point in {samples} samples"
        )

    steps = np.array([p.step for p in space.parameters])
    lows = np.array([p.low for p in space.parameters])
    highs = np.array([p.high for p in space.parameters])
    for _ in range(polish_sweeps):
        moved = False
        for j in range(space.dim):
            trials = []
            for k in range(-polish_radius, polish_radius + 1):
                if k == 0:
                    continue
                cand = best_phys.copy()
                cand[j] = cand[j] + k * steps[j]
                if cand[j] < lows[j] - 1e-9 or cand[j] > highs[j] + 1e-9:
                    continue
                trials.append(cand)
            if not trials:
                continue
            trials = np.array(trials)
            mask = preset.machine.feasible_mask(trials)
            trials = trials[mask]
            if trials.shape[0] == 0:
                continue
            latent = latent_surfaces(trials, preset)
            mask_req = requirement_feasible_mask(latent, preset)
            trials = trials[mask_req]
            if trials.shape[0] == 0:
                continue
            util = latent_utility(trials, preset, weights)
            idx = int(np.argmax(util))
            if util[idx] > best_util:
                best_util = float(util[idx])
                best_phys = trials[idx].copy()
                moved = True
        if not moved:
            break
    return Configuration.from_array(best_phys), best_util, True
