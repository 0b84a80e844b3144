// Thin fetch client for the campaign service.  Every helper either returns
// the parsed JSON body or throws ApiError carrying the HTTP status, so the
// UI can branch on conflicts (409) and validation rejections (422).
export class ApiError extends Error {
    constructor(status, detail) {
        super(typeof detail === "string" ? detail : JSON.stringify(detail));
        this.status = status;
        this.detail = detail;
    }
}
async function request(base, path, init) {
    const response = await fetch(`${base}${path}`, {
        headers: { "Content-Type": "application/json" },
        ...init,
    });
    const text = await response.text();
    const body = text ? JSON.parse(text) : null;
    if (!response.ok) {
        throw new ApiError(response.status, body?.detail ?? body);
    }
    return body;
}
export class CampaignApi {
    constructor(base, campaignId) {
        this.base = base;
        this.campaignId = campaignId;
    }
    static async create(base, campaignId, config) {
        const body = await request(base, "/campaigns", {
            method: "POST",
            body: JSON.stringify({ campaign_id: campaignId, config }),
        });
        return { api: new CampaignApi(base, body.campaign_id), batch: body.batch };
    }
    ask(q) {
        const query = q === undefined ? "" : `?q=${q}`;
        return request(this.base, `/campaigns/${this.campaignId}/ask${query}`);
    }
    tell(payload) {
        return request(this.base, `/campaigns/${this.campaignId}/tell`, {
            method: "POST",
            body: JSON.stringify(payload),
        });
    }
    status() {
        return request(this.base, `/campaigns/${this.campaignId}/status`);
    }
    trace() {
        return request(this.base, `/campaigns/${this.campaignId}/trace`);
    }
    stageSwitch() {
        return request(this.base, `/campaigns/${this.campaignId}/stage-switch`, { method: "POST" });
    }
    mapEstimate(weights, feasibilityLevel, poolSize) {
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
