// Wire types mirroring the campaign service JSON payloads.
// Units are physical: W, um, deg, Hz, MPa; failure fractions in [0, 1].

export interface ProcessConfig {
  trench_power: number;
  trench_step: number;
  trench_angle: number;
  dice_power: number;
  dice_focus: number;
  dice_step: number;
  dice_frequency: number;
  recov_power: number;
  recov_focus: number;
  recov_step: number;
  recov_frequency: number;
}

export const PARAMETER_ORDER: (keyof ProcessConfig)[] = [
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

export interface BatchEntry {
  config_id: string;
  config: ProcessConfig;
}

export interface OpticalPayload {
  dicing_width: number;
  mod_width: number;
  burr: number;
  front_cracks: number;
  corner_cracks: number;
  back_cracks: number;
  separation: number;
  chipouts?: number | null;
}

export interface DestructivePayload {
  front_strengths: number[];
  back_strengths: number[];
}

export interface TellPayload {
  config_id: string;
  optical: OpticalPayload;
  destructive?: DestructivePayload;
}

export interface TellResponse {
  config_id: string;
  iteration: number;
  feasible: boolean;
  violations: Record<string, number>;
  stage: number;
  status: CampaignStatus;
}

export interface CampaignStatus {
  campaign_id: string;
  stage: number;
  tau: number;
  terminated: boolean;
  complete: boolean;
  iteration: number;
  pending: BatchEntry[];
  incumbent: {
    config_id: string;
    config: ProcessConfig;
    utility: number | null;
    iteration: number;
  } | null;
  observation_count: number;
  feasible_count: number;
  destructive_count: number;
  stage_switch_iteration: number | null;
}

export interface TraceRow {
  iter: number;
  stage: number;
  tau: number;
  utility_best: number | null;
  viol_front: number;
  viol_corner: number;
  viol_back: number;
  viol_sep: number;
  viol_chip: number | null;
  [extra: string]: number | boolean | null | undefined;
}

export interface TraceResponse {
  columns: string[];
  rows: TraceRow[];
}

export interface UtilityWeights {
  w_width: number;
  w_mod: number;
  w_burr: number;
  w_throughput: number;
  w_front: number;
  w_back: number;
  strength_base: number;
  width_target: number;
  mod_target: number;
}

export interface MapResult {
  config: ProcessConfig;
  utility: number;
  throughput: number;
  feasibility_level: number;
  predicted: Record<string, number>;
}
