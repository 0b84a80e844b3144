"""Ask/tell HTTP service for human-in-the-loop campaigns.

Thin JSON layer over the campaign operations: every mutation loads the
record, applies exactly one campaign operation under the campaign's lock,
and commits atomically; reads serve the last committed snapshot without
locking.  Physical units only on the wire (W, um, Hz, deg, MPa, fractions
in [0,1]); normalization never leaks out.
"""

from __future__ import annotations

import threading
from collections import defaultdict

from fastapi import Body, FastAPI, HTTPException

from .acquisition import WEIGHT_PRESETS, UtilityWeights
from .campaign import Campaign, CampaignConfig
from .errors import (
    CampaignCompleteError,
    ConfigurationError,
    IntegrityError,
    KerfoptError,
    LifecycleError,
    MigrationError,
    NoFeasibleCandidatesError,
    NoFeasibleIncumbentError,
    PendingBatchError,
    ThresholdTooStrictError,
    UnknownConfigError,
    ValidationError,
)
from .observations import ConstraintObservation, ObjectiveObservation
from .persistence import CampaignStore, TRACE_CSV_COLUMNS
from .simulator import campaign_config_for_preset
from .space import Configuration

__all__ = ["create_app", "parse_weights", "parse_tell_payload", "config_from_payload"]

OPTICAL_FIELDS = (
    "dicing_width",
    "mod_width",
    "burr",
    "front_cracks",
    "corner_cracks",
    "back_cracks",
    "separation",
)


def parse_weights(payload) -> UtilityWeights:
    if isinstance(payload, str):
        if payload not in WEIGHT_PRESETS:
            raise ValidationError(
                f"unknown weight preset '{payload}'; choose from {sorted(WEIGHT_PRESETS)}"
            )
        return WEIGHT_PRESETS[payload]
    if not isinstance(payload, dict):
        raise ValidationError("weights must be a preset name or an object")
    try:
        return UtilityWeights.from_dict(payload)
    except TypeError as err:
        raise ValidationError(f"malformed weights: {err}") from err


def config_from_payload(payload: dict) -> CampaignConfig:
    if not isinstance(payload, dict):
        raise ValidationError("config must be an object")
    payload = dict(payload)
    preset = payload.pop("preset", None)
    if preset is not None:
        if "weights" in payload:
            payload["weights"] = parse_weights(payload["weights"])
        try:
            return campaign_config_for_preset(preset, **payload)
        except TypeError as err:
            raise ValidationError(f"malformed config: {err}") from err
    try:
        return CampaignConfig.from_dict(payload)
    except (KeyError, TypeError) as err:
        raise ValidationError(f"malformed config: {err}") from err


def parse_tell_payload(payload: dict) -> tuple[str, ObjectiveObservation, ConstraintObservation]:
    if "config_id" not in payload:
        raise ValidationError("tell payload needs a config_id")
    optical = payload.get("optical")
    if not isinstance(optical, dict):
        raise ValidationError("tell payload needs an 'optical' object")
    missing = [f for f in OPTICAL_FIELDS if f not in optical]
    if missing:
        raise ValidationError(f"optical payload missing fields: {missing}")
    destructive = payload.get("destructive") or {}
    front = tuple(destructive.get("front_strengths") or ())
    back = tuple(destructive.get("back_strengths") or ())
    objective = ObjectiveObservation(
        dicing_width=float(optical["dicing_width"]),
        mod_width=float(optical["mod_width"]),
        burr=float(optical["burr"]),
        front_strengths=front,
        back_strengths=back,
    )
    constraints = ConstraintObservation(
        front_cracks=float(optical["front_cracks"]),
        corner_cracks=float(optical["corner_cracks"]),
        back_cracks=float(optical["back_cracks"]),
        separation=float(optical["separation"]),
        chipouts=None if optical.get("chipouts") is None else float(optical["chipouts"]),
    )
    return str(payload["config_id"]), objective, constraints


def _batch_json(batch: list[tuple[str, Configuration]]) -> list[dict]:
    return [{"config_id": cid, "config": cfg.as_dict()} for cid, cfg in batch]


def _http_error(err: KerfoptError) -> HTTPException:
    if isinstance(err, (ValidationError, ConfigurationError)):
        return HTTPException(status_code=422, detail=str(err))
    if isinstance(err, UnknownConfigError):
        return HTTPException(status_code=404, detail=str(err))
    if isinstance(
        err,
        (PendingBatchError, CampaignCompleteError, LifecycleError, NoFeasibleCandidatesError),
    ):
        detail = str(err)
        if isinstance(err, PendingBatchError):
            detail += " (tell the pending configurations, then retry)"
        return HTTPException(status_code=409, detail=detail)
    if isinstance(err, ThresholdTooStrictError):
        return HTTPException(
            status_code=409,
            detail={"message": str(err), "best_achievable": err.best_achievable},
        )
    if isinstance(err, (IntegrityError, MigrationError)):
        return HTTPException(status_code=500, detail=str(err))
    if isinstance(err, NoFeasibleIncumbentError):
        return HTTPException(status_code=409, detail=str(err))
    return HTTPException(status_code=500, detail=str(err))


def create_app(data_dir: str) -> FastAPI:
    app = FastAPI(title="kerfopt campaign service")
    store = CampaignStore(data_dir)
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def load_or_404(campaign_id: str) -> Campaign:
        if not store.exists(campaign_id):
            raise HTTPException(status_code=404, detail=f"unknown campaign '{campaign_id}'")
        return store.load(campaign_id)

    @app.post("/campaigns", status_code=201)
    def create_campaign(payload: dict = Body(...)):
        try:
            config = config_from_payload(payload.get("config") or {})
            campaign_id = str(payload.get("campaign_id") or f"campaign-{len(store.list_ids()) + 1:04d}")
            if store.exists(campaign_id):
                raise HTTPException(status_code=409, detail=f"campaign '{campaign_id}' exists")
            seeds = [Configuration.from_dict(c) for c in payload.get("seed_configs") or []]
            campaign = Campaign(config, campaign_id=campaign_id)
            batch = campaign.initialize(seeds or None)
            store.save(campaign)
        except KerfoptError as err:
            raise _http_error(err) from err
        return {"campaign_id": campaign_id, "batch": _batch_json(batch)}

    @app.get("/campaigns/{campaign_id}/ask")
    def ask(campaign_id: str, q: int | None = None):
        with locks[campaign_id]:
            campaign = load_or_404(campaign_id)
            try:
                batch = campaign.ask(q=q)
                store.save(campaign)
            except KerfoptError as err:
                raise _http_error(err) from err
        return {"batch": _batch_json(batch)}

    @app.post("/campaigns/{campaign_id}/tell")
    def tell(campaign_id: str, payload: dict = Body(...)):
        with locks[campaign_id]:
            campaign = load_or_404(campaign_id)
            try:
                config_id, objective, constraints = parse_tell_payload(payload)
                if any(r.config_id == config_id for r in campaign.observations):
                    raise HTTPException(
                        status_code=409,
                        detail=f"'{config_id}' was already told (refresh status and retry)",
                    )
                record = campaign.tell(config_id, objective, constraints)
                store.save(campaign)
            except KerfoptError as err:
                raise _http_error(err) from err
        return {
            "config_id": record.config_id,
            "iteration": record.iteration,
            "feasible": record.feasible,
            "violations": record.violations,
            "stage": campaign.stage,
            "status": campaign.status(),
        }

    @app.get("/campaigns/{campaign_id}/status")
    def status(campaign_id: str):
        return load_or_404(campaign_id).status()

    @app.get("/campaigns/{campaign_id}/trace")
    def trace(campaign_id: str):
        campaign = load_or_404(campaign_id)
        return {"columns": list(TRACE_CSV_COLUMNS), "rows": campaign.trace}

    @app.post("/campaigns/{campaign_id}/map")
    def map_estimate(campaign_id: str, payload: dict = Body(...)):
        campaign = load_or_404(campaign_id)
        try:
            weights = parse_weights(payload.get("weights"))
            level = float(payload.get("feasibility_level", 0.9))
            pool = int(payload.get("pool_size", 100_000))
            result = campaign.map_estimate(weights, feasibility_level=level, pool_size=pool)
        except KerfoptError as err:
            raise _http_error(err) from err
        return {
            "config": result["config"].as_dict(),
            "utility": result["utility"],
            "throughput": result["throughput"],
            "feasibility_level": result["feasibility_level"],
            "predicted": result["predicted"],
        }

    @app.post("/campaigns/{campaign_id}/stage-switch")
    def stage_switch(campaign_id: str):
        with locks[campaign_id]:
            campaign = load_or_404(campaign_id)
            try:
                campaign.switch_stage()
                store.save(campaign)
            except KerfoptError as err:
                raise _http_error(err) from err
        return campaign.status()

    return app
