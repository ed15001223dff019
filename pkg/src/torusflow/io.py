"""Run-directory persistence: CSV series, JSON documents and the manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "flow_columns",
    "format_value",
    "write_csv",
    "write_json",
    "config_digest",
    "RunManifest",
    "write_manifest",
]

MANIFEST_NAME = "manifest.json"


def flow_columns(d: int) -> list:
    """Per-step CSV header for a flow of ``S^d`` in ``T^{d+1}``."""
    return (
        ["t"]
        + [f"center_{i}" for i in range(d + 1)]
        + [
            "rho_min",
            "rho_mean",
            "rho_max",
            "H_min",
            "H_max",
            "pinch_sup",
            "min_kappa1",
            "min_Z",
            "diameter",
            "functional",
            "sup_residual",
            "dt",
        ]
    )


def flow_rows(records, d: int) -> list:
    rows = []
    for r in records:
        rows.append(
            [r["t"]]
            + list(r["center"])
            + [r[c] for c in flow_columns(d)[d + 2 :]]
        )
    return rows


def format_value(v) -> str:
    """Shortest round-tripping text; identical inputs give identical bytes."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path}: row has {len(row)} fields, header has {len(header)}")
            w.writerow([format_value(v) for v in row])
    return os.fspath(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, doc) -> str:
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return os.fspath(path)


def config_digest(cfg: dict, n: int = 12) -> str:
    blob = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:n]


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time: float
    status: str
    files: list
    metrics: dict
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
            "status": self.status,
            "files": sorted(self.files),
            "metrics": self.metrics,
            "checks": self.checks,
            "passed": self.passed,
        }


def write_manifest(outdir, manifest: RunManifest) -> str:
    return write_json(os.path.join(outdir, MANIFEST_NAME), manifest.to_json())
