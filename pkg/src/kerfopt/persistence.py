"""Campaign records on disk.

One JSON file per campaign: schema version, full state snapshot, and the
append-only event log.  Writes go through a temp file and an atomic rename,
so a crash mid-write can never corrupt the previous record.  Campaigns run
for weeks with humans in the loop; a text format keeps them auditable.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .campaign import Campaign
from .errors import IntegrityError, MigrationError, UnknownConfigError

__all__ = ["SCHEMA_VERSION", "CampaignStore", "save_record", "load_record"]

SCHEMA_VERSION = 1


def save_record(campaign: Campaign, path: Path):
    """Atomic write: serialize to a temp file in the same directory, then
    rename over the destination."""
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "campaign_id": campaign.campaign_id,
        "state": campaign.to_dict(),
    }
    text = json.dumps(payload, indent=1)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_record(path: Path) -> Campaign:
    path = Path(path)
    if not path.exists():
        raise UnknownConfigError(f"no campaign record at {path}")
    text = path.read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise IntegrityError(f"corrupt campaign record {path}: {err.msg}", offset=err.pos) from err
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MigrationError(
            f"record {path} has schema version {version}, this build reads {SCHEMA_VERSION}"
        )
    if "state" not in payload or "campaign_id" not in payload:
        raise IntegrityError(f"record {path} is missing required sections", offset=0)
    return Campaign.from_dict(payload["state"])


TRACE_CSV_COLUMNS = (
    "iter",
    "stage",
    "tau",
    "utility_best",
    "viol_front",
    "viol_corner",
    "viol_back",
    "viol_sep",
    "viol_chip",
)


def trace_to_csv(trace: list[dict]) -> str:
    """Pinned-column CSV of the per-iteration series; None becomes an empty
    field, floats use repr so re-import is lossless."""

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = [",".join(TRACE_CSV_COLUMNS)]
    for row in trace:
        lines.append(",".join(cell(row.get(col)) for col in TRACE_CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str) -> list[dict]:
    lines = [line for line in text.splitlines() if line]
    if not lines or lines[0] != ",".join(TRACE_CSV_COLUMNS):
        raise IntegrityError("trace CSV header does not match the pinned columns", offset=0)
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for col, cell in zip(TRACE_CSV_COLUMNS, cells):
            if cell == "":
                row[col] = None
            elif col in ("iter", "stage"):
                row[col] = int(cell)
            else:
                row[col] = float(cell)
        rows.append(row)
    return rows


class CampaignStore:
    """Directory of campaign records, one file per campaign id."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, campaign_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in campaign_id)
        return self.directory / f"{safe}.json"

    def save(self, campaign: Campaign):
        save_record(campaign, self.path_for(campaign.campaign_id))

    def load(self, campaign_id: str) -> Campaign:
        return load_record(self.path_for(campaign_id))

    def exists(self, campaign_id: str) -> bool:
        return self.path_for(campaign_id).exists()

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))
