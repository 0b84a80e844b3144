// Weight sliders for the posterior what-if panel.  Presets load the
// expert-calibrated weight vectors; submission is blocked while every
// weight is zero or any value is out of range.
export const SLIDER_ORDER = [
    "w_width",
    "w_mod",
    "w_burr",
    "w_throughput",
    "w_front",
    "w_back",
];
export const SLIDER_LABELS = {
    w_width: "dicing width",
    w_mod: "modification width",
    w_burr: "burr height",
    w_throughput: "throughput",
    w_front: "front strength",
    w_back: "back strength",
};
// The two campaign weightings plus the post-hoc trade-off studies.
export const WHATIF_PRESETS = {
    bare_silicon: { w_width: 0.075, w_mod: 0.075, w_burr: 1.0, w_throughput: 0.01, w_front: 0.5, w_back: 0.5 },
    product: { w_width: 0.05, w_mod: 0.05, w_burr: 0.1, w_throughput: 0.3, w_front: 0.25, w_back: 0.25 },
    strength_first: { w_width: 0.005, w_mod: 0.005, w_burr: 0.01, w_throughput: 0.098, w_front: 0.45, w_back: 0.45 },
    speed_first: { w_width: 0.005, w_mod: 0.005, w_burr: 0.01, w_throughput: 0.78, w_front: 0.1, w_back: 0.1 },
};
export function validateSliders(state) {
    const values = SLIDER_ORDER.map((k) => state[k]);
    if (values.some((v) => !Number.isFinite(v) || v < 0)) {
        return "weights must be non-negative numbers";
    }
    if (values.every((v) => v === 0)) {
        return "set at least one weight above zero";
    }
    return null;
}
export function toWeights(state, strengthBase = 300, widthTarget = 28, modTarget = 28) {
    return {
        ...state,
        strength_base: strengthBase,
        width_target: widthTarget,
        mod_target: modTarget,
    };
}
