// Operator console wiring.  This is the only module that touches the DOM;
// everything it renders comes from api.ts responses projected through
// state.ts/charts.ts, and every submission passes validation.ts first.

import { ApiError, CampaignApi } from "./api.js";
import { countMarks, utilityPanelSvg, violationPanelSvg } from "./charts.js";
import { buildConvergenceView, describeStatus } from "./state.js";
import type { BatchEntry, CampaignStatus, MapResult } from "./types.js";
import { PARAMETER_ORDER } from "./types.js";
import { validateMeasurements, type MeasurementForm } from "./validation.js";
import {
  SLIDER_ORDER,
  toWeights,
  validateSliders,
  WHATIF_PRESETS,
  type SliderState,
} from "./whatif.js";

const PARAM_UNITS: Record<string, string> = {
  trench_power: "W", trench_step: "µm", trench_angle: "°",
  dice_power: "W", dice_focus: "µm", dice_step: "µm", dice_frequency: "Hz",
  recov_power: "W", recov_focus: "µm", recov_step: "µm", recov_frequency: "Hz",
};

const PARAM_STEPS: Record<string, number> = {
  trench_power: 0.1, trench_step: 0.1, trench_angle: 0.2,
  dice_power: 0.2, dice_focus: 10, dice_step: 0.1, dice_frequency: 1000,
  recov_power: 0.2, recov_focus: 10, recov_step: 0.1, recov_frequency: 1000,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function configTable(entries: BatchEntry[]): string {
  if (entries.length === 0) return "<p class='empty'>No pending configurations.</p>";
  const head = PARAMETER_ORDER.map(
    (p) => `<th>${p.replace(/_/g, " ")}<br><small>${PARAM_UNITS[p]}</small></th>`,
  ).join("");
  const rows = entries
    .map(
      (entry) =>
        `<tr data-config-id="${entry.config_id}"><td>${entry.config_id}</td>` +
        PARAMETER_ORDER.map((p) => `<td>${entry.config[p]}</td>`).join("") +
        `</tr>`,
    )
    .join("");
  return `<table class="configs"><thead><tr><th>id</th>${head}</tr></thead><tbody>${rows}</tbody></table>`;
}

function mapCard(result: MapResult): string {
  const rows = PARAMETER_ORDER.map(
    (p) => `<tr><td>${p.replace(/_/g, " ")}</td><td>${result.config[p]} ${PARAM_UNITS[p]}</td></tr>`,
  ).join("");
  const predicted = Object.entries(result.predicted)
    .map(([k, v]) => `<tr><td>${k.replace(/_/g, " ")}</td><td>${v.toFixed(2)}</td></tr>`)
    .join("");
  return (
    `<div class="map-card">` +
    `<p><strong>predicted utility</strong> ${result.utility.toFixed(3)} · ` +
    `<strong>throughput</strong> ${result.throughput.toFixed(2)} wafer/hr · ` +
    `<strong>feasibility</strong> ${(result.feasibility_level * 100).toFixed(1)}%</p>` +
    `<details open><summary>configuration</summary><table>${rows}</table></details>` +
    `<details><summary>predicted outcomes</summary><table>${predicted}</table></details>` +
    `</div>`
  );
}

class Console {
  api: CampaignApi | null = null;
  status: CampaignStatus | null = null;
  repetitions = 10;

  async create() {
    const base = (el<HTMLInputElement>("server-url")).value.replace(/\/$/, "");
    const campaignId = el<HTMLInputElement>("campaign-id").value.trim();
    const preset = el<HTMLSelectElement>("campaign-preset").value;
    const seed = Number(el<HTMLInputElement>("campaign-seed").value || "0");
    if (!campaignId) return this.note("enter a campaign id first");
    try {
      const { api } = await CampaignApi.create(base, campaignId, { preset, seed });
      this.api = api;
      this.note(`campaign '${campaignId}' created`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.api = new CampaignApi(base, campaignId);
        this.note(`attached to existing campaign '${campaignId}'`);
      } else {
        return this.note(`create failed: ${err}`);
      }
    }
    await this.refresh();
  }

  async refresh() {
    if (!this.api) return;
    try {
      this.status = await this.api.status();
    } catch (err) {
      return this.note(`status failed: ${err}`);
    }
    el("status-line").textContent = describeStatus(this.status);
    el("pending").innerHTML = configTable(this.status.pending);
    const select = el<HTMLSelectElement>("tell-config-id");
    select.innerHTML = this.status.pending
      .map((entry) => `<option value="${entry.config_id}">${entry.config_id}</option>`)
      .join("");
    el<HTMLButtonElement>("btn-stage-switch").disabled = this.status.stage !== 1;
    el<HTMLButtonElement>("btn-whatif").disabled = this.status.stage !== 2;
    await this.redraw();
  }

  async ask() {
    if (!this.api) return;
    try {
      await this.api.ask();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.note("batch still outstanding; showing current pending set");
      } else {
        return this.note(`ask failed: ${err}`);
      }
    }
    await this.refresh();
  }

  readForm(): MeasurementForm {
    const grab = (id: string) => el<HTMLInputElement | HTMLTextAreaElement>(id).value;
    return {
      dicing_width: grab("m-width"),
      mod_width: grab("m-mod"),
      burr: grab("m-burr"),
      front_cracks_pct: grab("m-front-cracks"),
      corner_cracks_pct: grab("m-corner-cracks"),
      back_cracks_pct: grab("m-back-cracks"),
      separation_pct: grab("m-separation"),
      chipouts_pct: grab("m-chipouts"),
      front_strengths: grab("m-front-strengths"),
      back_strengths: grab("m-back-strengths"),
    };
  }

  async tell() {
    if (!this.api || !this.status) return;
    const configId = el<HTMLSelectElement>("tell-config-id").value;
    const chipoutsRequired = el<HTMLInputElement>("m-chipouts-required").checked;
    const validated = validateMeasurements(this.readForm(), configId, {
      chipoutsRequired,
      stage: this.status.stage,
      repetitions: this.repetitions,
    });
    const errorBox = el("form-errors");
    if (!validated.ok || !validated.payload) {
      // Rejected submissions keep the operator's numbers on screen.
      errorBox.innerHTML = Object.entries(validated.errors)
        .map(([field, message]) => `<li><code>${field}</code>: ${message}</li>`)
        .join("");
      return;
    }
    errorBox.innerHTML = "";
    try {
      const response = await this.api.tell(validated.payload);
      this.note(
        `${response.config_id} recorded (iteration ${response.iteration}, ` +
          `${response.feasible ? "feasible" : "infeasible"})`,
      );
      this.clearForm();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.note("conflict: measurement already recorded; refreshing");
      } else if (err instanceof ApiError && err.status === 422) {
        errorBox.innerHTML = `<li>server rejected: ${err.message}</li>`;
        return;
      } else {
        return this.note(`tell failed: ${err}`);
      }
    }
    await this.refresh();
  }

  clearForm() {
    for (const id of [
      "m-width", "m-mod", "m-burr", "m-front-cracks", "m-corner-cracks",
      "m-back-cracks", "m-separation", "m-chipouts", "m-front-strengths", "m-back-strengths",
    ]) {
      el<HTMLInputElement | HTMLTextAreaElement>(id).value = "";
    }
  }

  async stageSwitch() {
    if (!this.api) return;
    if (!window.confirm("Switch to stage 2? Destructive strength tests become required.")) return;
    try {
      await this.api.stageSwitch();
    } catch (err) {
      return this.note(`stage switch failed: ${err}`);
    }
    await this.refresh();
  }

  async redraw() {
    if (!this.api) return;
    const trace = await this.api.trace();
    const view = buildConvergenceView(trace.rows);
    el("chart-utility").innerHTML = utilityPanelSvg(view);
    el("chart-violations").innerHTML = violationPanelSvg(view);
    el("feasibility-badge").hidden = !view.feasibilityBadge;
    el("chart-meta").textContent =
      `${view.pointCount} iterations · ` +
      `${countMarks(el("chart-utility").innerHTML)} utility points rendered` +
      (view.stageSwitchIter ? ` · stage 2 from iteration ${view.stageSwitchIter}` : "");
  }

  readSliders(): SliderState {
    const state = {} as SliderState;
    for (const key of SLIDER_ORDER) {
      state[key] = Number(el<HTMLInputElement>(`w-${key}`).value);
    }
    return state;
  }

  applyPreset(name: string) {
    const preset = WHATIF_PRESETS[name];
    if (!preset) return;
    for (const key of SLIDER_ORDER) {
      el<HTMLInputElement>(`w-${key}`).value = String(preset[key]);
      el(`w-${key}-value`).textContent = String(preset[key]);
    }
    this.sliderInput();
  }

  sliderInput() {
    const error = validateSliders(this.readSliders());
    el("whatif-hint").textContent = error ?? "";
    el<HTMLButtonElement>("btn-whatif").disabled =
      error !== null || (this.status?.stage ?? 1) !== 2;
  }

  async whatIf() {
    if (!this.api) return;
    const sliders = this.readSliders();
    const error = validateSliders(sliders);
    if (error) {
      el("whatif-hint").textContent = error;
      return;
    }
    const level = Number(el<HTMLInputElement>("feasibility-level").value);
    el("whatif-result").innerHTML = "<p class='empty'>computing…</p>";
    try {
      const result = await this.api.mapEstimate(toWeights(sliders), level);
      el("whatif-result").innerHTML = mapCard(result);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && typeof err.detail === "object") {
        const best = (err.detail as { best_achievable?: number }).best_achievable;
        el("whatif-result").innerHTML =
          `<p class="warn">No configuration reaches that feasibility level; ` +
          `best achievable is ${((best ?? 0) * 100).toFixed(1)}%.</p>`;
      } else {
        el("whatif-result").innerHTML = `<p class="warn">what-if failed: ${err}</p>`;
      }
    }
  }

  note(message: string) {
    el("notices").textContent = message;
  }
}

const ui = new Console();
el("btn-create").addEventListener("click", () => void ui.create());
el("btn-refresh").addEventListener("click", () => void ui.refresh());
el("btn-ask").addEventListener("click", () => void ui.ask());
el("btn-tell").addEventListener("click", () => void ui.tell());
el("btn-stage-switch").addEventListener("click", () => void ui.stageSwitch());
el("btn-whatif").addEventListener("click", () => void ui.whatIf());
for (const key of SLIDER_ORDER) {
  const input = el<HTMLInputElement>(`w-${key}`);
  input.addEventListener("input", () => {
    el(`w-${key}-value`).textContent = input.value;
    ui.sliderInput();
  });
}
for (const name of Object.keys(WHATIF_PRESETS)) {
  const button = document.querySelector(`[data-preset="${name}"]`);
  button?.addEventListener("click", () => ui.applyPreset(name));
}
