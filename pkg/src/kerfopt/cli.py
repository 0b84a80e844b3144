"""Command-line interface: campaign management, manual ask/tell, autonomous
simulator runs, the brute-force oracle, trace export, and the HTTP server.

Exit codes: 0 success, 1 domain/validation error, 2 internal error.
The data directory comes from --data-dir, the KERFOPT_DATA_DIR environment
variable, or ./kerfopt_data, in that order.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click

from .acquisition import WEIGHT_PRESETS
from .campaign import Campaign, run_autonomous
from .errors import KerfoptError
from .persistence import CampaignStore, trace_to_csv
from .service import config_from_payload, parse_tell_payload, parse_weights
from .simulator import (
    PRESET_NAMES,
    SimulatorBlackbox,
    campaign_config_for_preset,
    get_preset,
    oracle_best,
    throughput,
)
from .space import Configuration


def _store(data_dir: str | None) -> CampaignStore:
    directory = data_dir or os.environ.get("KERFOPT_DATA_DIR") or "kerfopt_data"
    return CampaignStore(directory)


def _load_preset(name: str, preset_file: str | None):
    from .simulator import WaferPreset

    if preset_file is None:
        return get_preset(name)
    return WaferPreset.from_dict(json.loads(Path(preset_file).read_text()))


def _fail(err: BaseException, code: int):
    click.echo(f"error: {err}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map domain errors to exit 1 and anything unexpected to exit 2."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KerfoptError as err:
            _fail(err, 1)
        except click.ClickException:
            raise
        except Exception as err:  # noqa: BLE001 - the CLI boundary
            _fail(err, 2)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


data_dir_option = click.option("--data-dir", default=None, help="Campaign record directory.")


@click.group()
def main():
    """Laser-dicing process optimization campaigns."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--id", "campaign_id", required=True)
@click.option("--seed-config", "seed_paths", multiple=True, type=click.Path(exists=True))
@data_dir_option
@_guard
def init(config_path, campaign_id, seed_paths, data_dir):
    """Create a campaign from a JSON config file and print the initial batch."""
    store = _store(data_dir)
    if store.exists(campaign_id):
        raise click.ClickException(f"campaign '{campaign_id}' already exists")
    payload = json.loads(Path(config_path).read_text())
    config = config_from_payload(payload)
    seeds = []
    for path in seed_paths:
        raw = json.loads(Path(path).read_text())
        entries = raw if isinstance(raw, list) else [raw]
        seeds.extend(Configuration.from_dict(entry) for entry in entries)
    campaign = Campaign(config, campaign_id=campaign_id)
    batch = campaign.initialize(seeds or None)
    store.save(campaign)
    click.echo(json.dumps({"campaign_id": campaign_id, "batch": [
        {"config_id": cid, "config": cfg.as_dict()} for cid, cfg in batch
    ]}, indent=1))


@main.command()
@click.option("--id", "campaign_id", required=True)
@click.option("--q", type=int, default=None, help="Batch size override.")
@data_dir_option
@_guard
def ask(campaign_id, q, data_dir):
    """Propose the next batch of configurations."""
    store = _store(data_dir)
    campaign = store.load(campaign_id)
    batch = campaign.ask(q=q)
    store.save(campaign)
    click.echo(json.dumps({"batch": [
        {"config_id": cid, "config": cfg.as_dict()} for cid, cfg in batch
    ]}, indent=1))


@main.command()
@click.option("--id", "campaign_id", required=True)
@click.option("--config-id", required=True)
@click.option("--measurements", "measurements_path", type=click.Path(exists=True),
              help="JSON file with 'optical' and optional 'destructive' sections.")
@click.option("--width", type=float, help="Dicing width (um).")
@click.option("--mod-width", type=float)
@click.option("--burr", type=float)
@click.option("--front-cracks", type=float)
@click.option("--corner-cracks", type=float)
@click.option("--back-cracks", type=float)
@click.option("--separation", type=float)
@click.option("--chipouts", type=float, default=None)
@click.option("--front-strengths", default=None, help="Comma-separated MPa values.")
@click.option("--back-strengths", default=None)
@data_dir_option
@_guard
def tell(campaign_id, config_id, measurements_path, width, mod_width, burr, front_cracks,
         corner_cracks, back_cracks, separation, chipouts, front_strengths, back_strengths,
         data_dir):
    """Report measurements for one pending configuration."""
    store = _store(data_dir)
    campaign = store.load(campaign_id)
    if measurements_path:
        payload = json.loads(Path(measurements_path).read_text())
        payload["config_id"] = config_id
    else:
        optical = {
            "dicing_width": width,
            "mod_width": mod_width,
            "burr": burr,
            "front_cracks": front_cracks,
            "corner_cracks": corner_cracks,
            "back_cracks": back_cracks,
            "separation": separation,
            "chipouts": chipouts,
        }
        missing = [k for k, v in optical.items() if v is None and k != "chipouts"]
        if missing:
            raise click.ClickException(f"missing required optical fields: {missing}")
        payload = {"config_id": config_id, "optical": optical}
        destructive = {}
        if front_strengths:
            destructive["front_strengths"] = [float(v) for v in front_strengths.split(",")]
        if back_strengths:
            destructive["back_strengths"] = [float(v) for v in back_strengths.split(",")]
        if destructive:
            payload["destructive"] = destructive
    cid, objective, constraints = parse_tell_payload(payload)
    record = campaign.tell(cid, objective, constraints)
    store.save(campaign)
    click.echo(json.dumps({
        "config_id": record.config_id,
        "iteration": record.iteration,
        "feasible": record.feasible,
        "violations": record.violations,
        "stage": campaign.stage,
    }, indent=1))


@main.command("stage-switch")
@click.option("--id", "campaign_id", required=True)
@data_dir_option
@_guard
def stage_switch(campaign_id, data_dir):
    """Manually trigger the switch to destructive-fidelity stage 2."""
    store = _store(data_dir)
    campaign = store.load(campaign_id)
    campaign.switch_stage()
    store.save(campaign)
    click.echo(json.dumps(campaign.status(), indent=1))


@main.command()
@click.option("--id", "campaign_id", required=True)
@data_dir_option
@_guard
def status(campaign_id, data_dir):
    """Print stage, trust-region size, incumbent, and counts."""
    click.echo(json.dumps(_store(data_dir).load(campaign_id).status(), indent=1))


@main.command("map")
@click.option("--id", "campaign_id", required=True)
@click.option("--weights", required=True, help="Preset name or JSON object.")
@click.option("--feasibility-level", type=float, default=0.9)
@click.option("--pool-size", type=int, default=100_000)
@data_dir_option
@_guard
def map_cmd(campaign_id, weights, feasibility_level, pool_size, data_dir):
    """Posterior what-if: best configuration under alternative weights."""
    campaign = _store(data_dir).load(campaign_id)
    parsed = parse_weights(weights if not weights.strip().startswith("{") else json.loads(weights))
    result = campaign.map_estimate(parsed, feasibility_level=feasibility_level, pool_size=pool_size)
    click.echo(json.dumps({
        "config": result["config"].as_dict(),
        "utility": result["utility"],
        "throughput": result["throughput"],
        "feasibility_level": result["feasibility_level"],
        "predicted": result["predicted"],
    }, indent=1))


@main.command("run-sim")
@click.option("--preset", type=click.Choice(PRESET_NAMES), required=True)
@click.option("--preset-file", type=click.Path(exists=True), default=None,
              help="JSON wafer-preset definition overriding the named preset's surfaces.")
@click.option("--budget", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--id", "campaign_id", default=None)
@click.option("--n-init", type=int, default=9)
@click.option("--q", type=int, default=None, help="Batch size (default 2 bare / 3 product).")
@click.option("--candidates", type=int, default=1000)
@data_dir_option
@_guard
def run_sim(preset, preset_file, budget, seed, campaign_id, n_init, q, candidates, data_dir):
    """Autonomous closed loop against the synthetic wafer."""
    store = _store(data_dir)
    campaign_id = campaign_id or f"sim-{preset}-{seed}"
    if store.exists(campaign_id):
        raise click.ClickException(f"campaign '{campaign_id}' already exists")
    overrides = dict(
        n_init=n_init,
        candidate_count=candidates,
        deterministic_clock=True,
    )
    if q is not None:
        overrides["batch_size"] = q
    wafer = _load_preset(preset, preset_file)
    config = campaign_config_for_preset(preset, seed=seed, **overrides)
    if preset_file:
        config = dataclasses.replace(
            config, thresholds=wafer.thresholds, machine=wafer.machine, throughput=wafer.throughput
        )
    campaign = Campaign(config, campaign_id=campaign_id)
    blackbox = SimulatorBlackbox(wafer, seed=seed)
    trace = run_autonomous(campaign, blackbox, budget=budget)
    store.save(campaign)
    summary = campaign.status()
    click.echo(json.dumps({
        "campaign_id": campaign_id,
        "evaluations": len(trace),
        "stage": summary["stage"],
        "tau": summary["tau"],
        "feasible_count": summary["feasible_count"],
        "incumbent": summary["incumbent"],
    }, indent=1))


@main.command()
@click.option("--preset", type=click.Choice(PRESET_NAMES), required=True)
@click.option("--preset-file", type=click.Path(exists=True), default=None)
@click.option("--weights", default=None, help="Preset name or JSON object; defaults to the material preset.")
@click.option("--samples", type=int, default=100_000)
@click.option("--seed", type=int, default=0)
@_guard
def oracle(preset, preset_file, weights, samples, seed):
    """Noise-free brute-force optimum of the synthetic wafer."""
    wafer = _load_preset(preset, preset_file)
    if weights is None:
        parsed = WEIGHT_PRESETS[preset]
    else:
        parsed = parse_weights(weights if not weights.strip().startswith("{") else json.loads(weights))
    config, utility, feasible = oracle_best(wafer, parsed, samples=samples, seed=seed)
    click.echo(json.dumps({
        "config": config.as_dict(),
        "utility": utility,
        "throughput": throughput(config, wafer),
        "feasible": feasible,
    }, indent=1))


@main.command("export-trace")
@click.option("--id", "campaign_id", required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--output", type=click.Path(), default=None, help="Write to a file instead of stdout.")
@data_dir_option
@_guard
def export_trace(campaign_id, fmt, output, data_dir):
    """Dump the per-iteration series (best-so-far utility, violations, tau)."""
    campaign = _store(data_dir).load(campaign_id)
    if fmt == "csv":
        text = trace_to_csv(campaign.trace)
    else:
        text = json.dumps({"rows": campaign.trace}, indent=1) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@data_dir_option
@_guard
def serve(port, host, data_dir):
    """Run the ask/tell HTTP service."""
    import uvicorn

    from .service import create_app

    directory = data_dir or os.environ.get("KERFOPT_DATA_DIR") or "kerfopt_data"
    uvicorn.run(create_app(directory), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
