// Client-side measurement validation, mirroring the service's 422 rules so
// a payload the server would reject never leaves the browser.  Fractions are
// entered as percentages (0-100) and converted to [0, 1] on the wire.

import type { OpticalPayload, TellPayload } from "./types.js";

export interface MeasurementForm {
  dicing_width: string;
  mod_width: string;
  burr: string;
  front_cracks_pct: string;
  corner_cracks_pct: string;
  back_cracks_pct: string;
  separation_pct: string;
  chipouts_pct: string; // blank when the material has no chipout channel
  front_strengths: string; // comma/space/newline separated MPa values
  back_strengths: string;
}

export interface ValidationResult {
  ok: boolean;
  errors: Partial<Record<keyof MeasurementForm, string>>;
  payload?: TellPayload;
}

function parseNumber(raw: string): number | null {
  const value = Number(raw.trim());
  return raw.trim() === "" || !Number.isFinite(value) ? null : value;
}

function parsePercent(raw: string): number | null {
  const value = parseNumber(raw);
  if (value === null || value < 0 || value > 100) return null;
  return value / 100;
}

export function parseStrengthList(raw: string): number[] | null {
  const parts = raw
    .split(/[\s,;]+/)
    .map((p) => p.trim())
    .filter((p) => p.length > 0);
  if (parts.length === 0) return [];
  const values = parts.map(Number);
  if (values.some((v) => !Number.isFinite(v) || v <= 0)) return null;
  return values;
}

export function validateMeasurements(
  form: MeasurementForm,
  configId: string,
  options: { chipoutsRequired: boolean; stage: number; repetitions: number },
): ValidationResult {
  const errors: ValidationResult["errors"] = {};

  const optic: Partial<OpticalPayload> = {};
  for (const field of ["dicing_width", "mod_width", "burr"] as const) {
    const value = parseNumber(form[field]);
    if (value === null || value < 0) {
      errors[field] = "required, a non-negative number in um";
    } else {
      optic[field] = value;
    }
  }
  const fractions: [keyof OpticalPayload, keyof MeasurementForm][] = [
    ["front_cracks", "front_cracks_pct"],
    ["corner_cracks", "corner_cracks_pct"],
    ["back_cracks", "back_cracks_pct"],
    ["separation", "separation_pct"],
  ];
  for (const [target, source] of fractions) {
    const value = parsePercent(form[source]);
    if (value === null) {
      errors[source] = "required percentage between 0 and 100";
    } else {
      (optic as Record<string, number>)[target] = value;
    }
  }
  if (options.chipoutsRequired) {
    const value = parsePercent(form.chipouts_pct);
    if (value === null) {
      errors.chipouts_pct = "required percentage between 0 and 100";
    } else {
      optic.chipouts = value;
    }
  } else if (form.chipouts_pct.trim() !== "") {
    const value = parsePercent(form.chipouts_pct);
    if (value === null) {
      errors.chipouts_pct = "percentage between 0 and 100, or leave blank";
    } else {
      optic.chipouts = value;
    }
  }

  const front = parseStrengthList(form.front_strengths);
  const back = parseStrengthList(form.back_strengths);
  if (front === null) errors.front_strengths = "positive MPa values only";
  if (back === null) errors.back_strengths = "positive MPa values only";
  let destructive: TellPayload["destructive"];
  if (front !== null && back !== null) {
    const anyGiven = front.length > 0 || back.length > 0;
    if (anyGiven) {
      if (front.length !== back.length) {
        errors.back_strengths = "front and back need the same number of tests";
      } else if (options.stage === 2 && front.length !== options.repetitions) {
        errors.front_strengths = `expected ${options.repetitions} tests per side`;
      } else {
        destructive = { front_strengths: front, back_strengths: back };
      }
    }
    // Blank destructive fields during stage 1 simply omit the section.
  }

  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  const payload: TellPayload = {
    config_id: configId,
    optical: optic as OpticalPayload,
  };
  if (destructive) payload.destructive = destructive;
  return { ok: true, errors: {}, payload };
}
