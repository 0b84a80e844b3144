// Scripted operator session used by the state-equivalence test: the exact
// clicks a technician would make, driven through the same client/validation
// code as the interactive console.  Every measurement passes the form
// validator before it is sent, exactly like the UI.
import { CampaignApi } from "./api.js";
import { validateMeasurements } from "./validation.js";
import { buildConvergenceView } from "./state.js";
import { toWeights, WHATIF_PRESETS } from "./whatif.js";
function formFor(index, includeChipouts) {
    // Deterministic synthetic bench results: all feasible, utility improving
    // with the index so the incumbent moves.
    return {
        dicing_width: (29.4 - 0.1 * (index % 5)).toFixed(2),
        mod_width: (30.5 - 0.1 * (index % 5)).toFixed(2),
        burr: (1.8 - 0.15 * (index % 5)).toFixed(2),
        front_cracks_pct: "0",
        corner_cracks_pct: "0",
        back_cracks_pct: "0",
        separation_pct: "100",
        chipouts_pct: includeChipouts ? "1" : "",
        front_strengths: "",
        back_strengths: "",
    };
}
function destructiveForm(index, repetitions) {
    const front = Array.from({ length: repetitions }, (_, i) => 600 + 4 * index + i).join(",");
    const back = Array.from({ length: repetitions }, (_, i) => 580 + 4 * index + i).join(",");
    return { front_strengths: front, back_strengths: back };
}
async function tellBatch(api, batch, startIndex, options, stage) {
    let index = startIndex;
    for (const entry of batch) {
        const form = formFor(index, options.chipoutsRequired);
        if (stage === 2) {
            Object.assign(form, destructiveForm(index, options.repetitions));
        }
        const validated = validateMeasurements(form, entry.config_id, {
            chipoutsRequired: options.chipoutsRequired,
            stage,
            repetitions: options.repetitions,
        });
        if (!validated.ok || !validated.payload) {
            throw new Error(`walkthrough built an invalid payload: ${JSON.stringify(validated.errors)}`);
        }
        await api.tell(validated.payload);
        index += 1;
    }
    return index;
}
// create -> tell initial design -> ask -> tell -> manual stage switch ->
// ask -> tell (with strengths) -> what-if under two weight presets.
export async function runWalkthrough(options) {
    const { api, batch } = await CampaignApi.create(options.base, options.campaignId, options.config);
    let index = 0;
    index = await tellBatch(api, batch, index, options, 1);
    const asked1 = await api.ask(options.askBatch);
    index = await tellBatch(api, asked1.batch, index, options, 1);
    await api.stageSwitch();
    const asked2 = await api.ask(options.askBatch);
    index = await tellBatch(api, asked2.batch, index, options, 2);
    const mapResults = [];
    for (const preset of ["speed_first", "strength_first"]) {
        const weights = toWeights(WHATIF_PRESETS[preset]);
        mapResults.push(await api.mapEstimate(weights, 0.0, 2000));
    }
    const trace = await api.trace();
    const status = await api.status();
    const view = buildConvergenceView(trace.rows);
    return {
        campaignId: options.campaignId,
        iterations: status.iteration,
        stage: status.stage,
        traceRows: trace.rows,
        viewPointCount: view.pointCount,
        mapResults,
    };
}
