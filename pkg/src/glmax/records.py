"""Reproducible experiment records.

A RunRecord is a deterministic function of (experiment id, config, seed):
the same inputs reproduce the statistics payload bit-exactly.  Wall-clock
timing is carried separately and excluded from the deterministic payload
and its digest.  Records serialize to JSON (stable key order, full float
round-trip via repr) plus flat CSV tables whose file names embed the
experiment id and seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "glmax-runrecord-v1"

__all__ = ["RunRecord", "SCHEMA_VERSION", "jsonable", "format_float"]


def format_float(x: float) -> str:
    """Full round-trip decimal representation with '.' separator."""
    return repr(float(x))


def jsonable(obj):
    """Recursively convert numpy scalars/arrays to plain python."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class RunRecord:
    """Seeded experiment output: config snapshot, statistics, checks, tables."""

    experiment: str
    config: dict
    seed: int
    replicas: int
    rng: str
    statistics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> {"columns": [...], "rows": [[...]]}
    timing: dict = field(default_factory=dict)
    schema: str = SCHEMA_VERSION

    def add_check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})

    def add_table(self, name: str, columns: list[str], rows) -> None:
        self.tables[name] = {"columns": list(columns), "rows": jsonable(rows)}

    @property
    def all_checks_passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def deterministic_payload(self) -> dict:
        return {
            "schema": self.schema,
            "experiment": self.experiment,
            "config": jsonable(self.config),
            "seed": self.seed,
            "replicas": self.replicas,
            "rng": self.rng,
            "statistics": jsonable(self.statistics),
            "checks": jsonable(self.checks),
            "tables": self.tables,
        }

    def to_json_bytes(self) -> bytes:
        payload = self.deterministic_payload()
        payload["timing"] = jsonable(self.timing)
        return json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")

    def digest(self) -> str:
        blob = json.dumps(self.deterministic_payload(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def write(self, out_dir) -> list[Path]:
        """Write record JSON and one CSV per table; returns written paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.experiment}_seed{self.seed}"
        paths = [out / f"{stem}_record.json"]
        paths[0].write_bytes(self.to_json_bytes())
        for name, tab in self.tables.items():
            p = out / f"{stem}_{name}.csv"
            lines = [",".join(tab["columns"])]
            for row in tab["rows"]:
                cells = [format_float(c) if isinstance(c, float) else str(c) for c in row]
                lines.append(",".join(cells))
            p.write_text("\n".join(lines) + "\n", encoding="utf-8")
            paths.append(p)
        return paths
