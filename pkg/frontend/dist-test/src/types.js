// Wire types mirroring the campaign service JSON payloads.
// Units are physical: W, um, deg, Hz, MPa; failure fractions in [0, 1].
export const PARAMETER_ORDER = [
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
];
