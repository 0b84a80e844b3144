// Thin fetch client for the campaign service.  Every helper either returns
// the parsed JSON body or throws ApiError carrying the HTTP status, so the
// UI can branch on conflicts (409) and validation rejections (422).

import type {
  BatchEntry,
  CampaignStatus,
  MapResult,
  TellPayload,
  TellResponse,
  TraceResponse,
  UtilityWeights,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${base}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const text = await response.text();
  const body = text ? JSON.parse(text) : null;
  if (!response.ok) {
    throw new ApiError(response.status, body?.detail ?? body);
  }
  return body as T;
}

export class CampaignApi {
  constructor(
    public base: string,
    public campaignId: string,
  ) {}

  static async create(
    base: string,
    campaignId: string,
    config: Record<string, unknown>,
  ): Promise<{ api: CampaignApi; batch: BatchEntry[] }> {
    const body = await request<{ campaign_id: string; batch: BatchEntry[] }>(base, "/campaigns", {
      method: "POST",
      body: JSON.stringify({ campaign_id: campaignId, config }),
    });
    return { api: new CampaignApi(base, body.campaign_id), batch: body.batch };
  }

  ask(q?: number): Promise<{ batch: BatchEntry[] }> {
    const query = q === undefined ? "" : `?q=${q}`;
    return request(this.base, `/campaigns/${this.campaignId}/ask${query}`);
  }

  tell(payload: TellPayload): Promise<TellResponse> {
    return request(this.base, `/campaigns/${this.campaignId}/tell`, {
      method: "POST",
      body: JSON.stringify(payload),
    });
  }

  status(): Promise<CampaignStatus> {
    return request(this.base, `/campaigns/${this.campaignId}/status`);
  }

  trace(): Promise<TraceResponse> {
    return request(this.base, `/campaigns/${this.campaignId}/trace`);
  }

  stageSwitch(): Promise<CampaignStatus> {
    return request(this.base, `/campaigns/${this.campaignId}/stage-switch`, { method: "POST" });
  }

  mapEstimate(
    weights: UtilityWeights | string,
    feasibilityLevel: number,
    poolSize?: number,
  ): Promise<MapResult> {
    return request(this.base, `/campaigns/${this.campaignId}/map`, {
      method: "POST",
      body: JSON.stringify({
        weights,
        feasibility_level: feasibilityLevel,
        ...(poolSize ? { pool_size: poolSize } : {}),
      }),
    });
  }
}
