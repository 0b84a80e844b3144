// Dependency-free SVG builders for the convergence dashboard.  Values are
// rendered exactly as received; no smoothing, no resampling -- one mark per
// trace row, so the chart is a lossless view of the series.
import { VIOLATION_LABELS } from "./state.js";
const DEFAULT_GEOMETRY = {
    width: 720,
    height: 220,
    padLeft: 56,
    padRight: 16,
    padTop: 14,
    padBottom: 26,
};
const SERIES_COLORS = ["#b33", "#d81", "#26a", "#2a6", "#825"];
function makeScale(geometry, iterMax, valueMin, valueMax) {
    const spanX = Math.max(iterMax, 1);
    const spanY = valueMax - valueMin || 1;
    const innerW = geometry.width - geometry.padLeft - geometry.padRight;
    const innerH = geometry.height - geometry.padTop - geometry.padBottom;
    return {
        x: (iter) => geometry.padLeft + (iter / spanX) * innerW,
        y: (value) => geometry.padTop + (1 - (value - valueMin) / spanY) * innerH,
    };
}
function polyline(points, scale, color, label) {
    if (points.length === 0)
        return "";
    const path = points.map((p) => `${scale.x(p.iter).toFixed(1)},${scale.y(p.value).toFixed(1)}`).join(" ");
    const marks = points
        .map((p) => `<circle class="mark" data-series="${label}" data-iter="${p.iter}" ` +
        `cx="${scale.x(p.iter).toFixed(1)}" cy="${scale.y(p.value).toFixed(1)}" r="2" fill="${color}"/>`)
        .join("");
    return `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${path}"/>` + marks;
}
function axes(geometry, title) {
    const { width, height, padLeft, padBottom, padTop } = geometry;
    return (`<line x1="${padLeft}" y1="${padTop}" x2="${padLeft}" y2="${height - padBottom}" stroke="#888"/>` +
        `<line x1="${padLeft}" y1="${height - padBottom}" x2="${width - geometry.padRight}" y2="${height - padBottom}" stroke="#888"/>` +
        `<text x="${padLeft}" y="${padTop - 3}" font-size="11" fill="#444">${title}</text>`);
}
function stageMarker(scale, geometry, iter) {
    if (iter === null)
        return "";
    const x = scale.x(iter).toFixed(1);
    return (`<line class="stage-switch" data-iter="${iter}" x1="${x}" y1="${geometry.padTop}" ` +
        `x2="${x}" y2="${geometry.height - geometry.padBottom}" stroke="#555" stroke-dasharray="4 3"/>` +
        `<text x="${x}" y="${geometry.height - 8}" font-size="10" fill="#555">stage 2 @ ${iter}</text>`);
}
export function utilityPanelSvg(view, geometry = DEFAULT_GEOMETRY) {
    const points = view.bestUtility;
    const iterMax = Math.max(view.pointCount, ...points.map((p) => p.iter), 1);
    const values = points.map((p) => p.value);
    const lo = values.length ? Math.min(...values) : 0;
    const hi = values.length ? Math.max(...values) : 1;
    const scale = makeScale(geometry, iterMax, lo, hi);
    const body = axes(geometry, "best-so-far feasible utility") +
        stageMarker(scale, geometry, view.stageSwitchIter) +
        polyline(points, scale, "#26a", "utility_best");
    return `<svg class="panel utility" viewBox="0 0 ${geometry.width} ${geometry.height}" xmlns="http://www.w3.org/2000/svg">${body}</svg>`;
}
export function violationPanelSvg(view, geometry = DEFAULT_GEOMETRY) {
    const names = Object.keys(view.violations);
    const all = names.flatMap((n) => view.violations[n]);
    const iterMax = Math.max(view.pointCount, ...all.map((p) => p.iter), 1);
    const lo = Math.min(0, ...all.map((p) => p.value));
    const hi = Math.max(0.05, ...all.map((p) => p.value));
    const scale = makeScale(geometry, iterMax, lo, hi);
    const zero = scale.y(0).toFixed(1);
    let body = axes(geometry, "constraint violation per iteration (≤ 0 is satisfied)");
    body += `<line x1="${geometry.padLeft}" y1="${zero}" x2="${geometry.width - geometry.padRight}" y2="${zero}" stroke="#aaa" stroke-dasharray="2 3"/>`;
    body += stageMarker(scale, geometry, view.stageSwitchIter);
    names.forEach((name, i) => {
        body += polyline(view.violations[name], scale, SERIES_COLORS[i % SERIES_COLORS.length], name);
        body += `<text x="${geometry.width - 150}" y="${16 + 13 * i}" font-size="10" fill="${SERIES_COLORS[i % SERIES_COLORS.length]}">${VIOLATION_LABELS[name] ?? name}</text>`;
    });
    return `<svg class="panel violations" viewBox="0 0 ${geometry.width} ${geometry.height}" xmlns="http://www.w3.org/2000/svg">${body}</svg>`;
}
export function countMarks(svg, series) {
    const pattern = series
        ? new RegExp(`class="mark" data-series="${series}"`, "g")
        : /class="mark"/g;
    return (svg.match(pattern) ?? []).length;
}
