"""Machine-readable reports with a canonical JSON encoding."""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .runtime import OpCounts

SCHEMA_VERSION = "1.0"
SCHEMA_PATH = Path(__file__).resolve().parents[2] / "docs" / "report.schema.json"


def jsonable(obj):
    """Convert numpy scalars/arrays, OpCounts and dataclasses into plain JSON types."""
    if isinstance(obj, OpCounts):
        return obj.as_dict()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, two-space indent, ASCII only, trailing newline; NaN is rejected."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def make_report(command: str, config: dict, seed: int, exit_code: int = 0, **sections) -> dict:
    rep = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "exit_code": exit_code,
    }
    rep.update(sections)
    return jsonable(rep)


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
