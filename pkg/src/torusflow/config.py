"""Experiment configuration: schema validation and explicit defaults."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .errors import ConfigurationError
from .forcing import TrigFunction
from .torus import FlatTorus

__all__ = ["KINDS", "DEFAULTS", "ExperimentConfig", "load_schema", "validate", "resolve", "load_config"]

KINDS = (
    "oracle",
    "flow",
    "hopf",
    "morse",
    "concentrate-elliptic",
    "concentrate-parabolic",
    "asymptotics",
    "homology",
)

_COSINE = {"constant": 0.0, "cosine_sum": 1.0, "terms": []}

DEFAULTS = {
    "oracle": {
        "torus": {"dimension": 3, "side": 10.0},
        "function": {"constant": 1.0, "cosine_sum": None, "terms": []},
        "initial": {"radius": 2.0, "center": None, "perturbation": 0.0},
        "grid": {"max_degree": 8},
        "time": {"t_max": 1.0 + math.log(2.0), "max_dt": 0.01, "cfl": 0.4},
        "checks": {"max_rel_error": 1e-3},
    },
    "flow": {
        "torus": {"dimension": 3, "side": 6.0},
        "function": {
            "constant": 1.0,
            "cosine_sum": None,
            "terms": [
                {"k": [1, 0, 0], "amp": 5e-4, "phase": 0.0},
                {"k": [0, 1, 1], "amp": 5e-4, "phase": 0.3},
            ],
        },
        "initial": {"radius": 1.0, "center": None, "perturbation": 0.02},
        "grid": {"max_degree": 12},
        "time": {"t_max": 0.5, "max_dt": 0.005, "cfl": 0.4, "keep_every": 1},
        "tolerances": {"endpoint": 1e-8, "t_hold": 1.0, "lambda_margin": 1.01},
        "checks": {"monotonicity_violations": 0},
    },
    "hopf": {
        "torus": {"dimension": 3, "side": 6.0},
        "function": {"constant": 1.0, "cosine_sum": None, "terms": []},
        "initial": {"radius": 1.0, "center": None, "perturbation": 0.1},
        "grid": {"max_degree": 8},
        "time": {"t_max": 20.0, "max_dt": 0.05},
        "tolerances": {"endpoint": 1e-8},
        "checks": {"hausdorff": 1e-3, "pinch_excess": 1e-3},
    },
    "morse": {
        "torus": {"dimension": 2, "side": 1.0},
        "function": dict(_COSINE),
        "options": {"n_dirs": 4096, "delta": 1e-4},
        "checks": {},
    },
    "concentrate-elliptic": {
        "torus": {"dimension": 3, "side": 1.0},
        "function": dict(_COSINE),
        "kappas": [0.2, 0.1, 0.05],
        "grid": {"max_degree": 12},
        "checks": {"residual": 1e-10, "min_slope": 2.7},
    },
    "concentrate-parabolic": {
        "torus": {"dimension": 2, "side": 1.0},
        "function": dict(_COSINE),
        "kappas": [0.2, 0.1, 0.05],
        "grid": {"max_degree": 16},
        "time": {"window": [-0.1, 0.1], "dt_factor": 4.0},
        "options": {"source": 0, "target": 1},
        "checks": {"center_slope": 2.7, "drift_slope": 2.7},
    },
    "asymptotics": {
        "torus": {"dimension": 2, "side": 1.0},
        "function": dict(_COSINE),
        "kappas": [0.2, 0.1, 0.05, 0.025],
        "grid": {"max_degree": 12, "time_nodes": 801},
        "options": {"source": 0, "target": 1, "orders": [0, 1, 2]},
        "checks": {"slope_margin": 0.7},
    },
    "homology": {
        "torus": {"dimension": 3, "side": 1.0},
        "function": dict(_COSINE),
        "kappa": 0.05,
        "options": {"n_dirs": 4096, "delta": 1e-4},
        "checks": {},
    },
}


def load_schema() -> dict:
    with resources.files("torusflow").joinpath("schema/config.schema.json").open() as fh:
        return json.load(fh)


def validate(doc: dict) -> None:
    """Raise :class:`ConfigurationError` with the schema message on failure."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {exc.message}") from exc


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("checks",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(doc: dict) -> dict:
    """Validate and fill every default explicitly."""
    validate(doc)
    kind = doc["kind"]
    out = _merge(DEFAULTS[kind], doc)
    if "checks" in doc:
        out["checks"] = _merge(DEFAULTS[kind].get("checks", {}), doc["checks"])
    out.setdefault("seed", 0)
    out.setdefault("output", None)
    if "kappa" in out and "kappas" in out and "kappa" in doc and "kappas" not in doc:
        out["kappas"] = [out["kappa"]]
    tor = out["torus"]
    if "lattice" in tor:
        dim = len(tor["lattice"])
        tor.pop("side", None)
        tor["dimension"] = dim
    validate(out)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return resolve(doc)


@dataclass
class ExperimentConfig:
    """Resolved configuration with the torus and function materialised."""

    raw: dict

    @property
    def kind(self) -> str:
        return self.raw["kind"]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def torus(self) -> FlatTorus:
        tor = self.raw["torus"]
        if "lattice" in tor:
            return FlatTorus.from_config(tor["lattice"])
        return FlatTorus.cube(int(tor["dimension"]), float(tor["side"]))

    def function(self) -> TrigFunction:
        fn = self.raw["function"]
        torus = self.torus()
        terms = list(fn.get("terms", []))
        amp = fn.get("cosine_sum")
        if amp is not None:
            dim = torus.dimension_plus_one
            terms += [{"k": [int(i == j) for j in range(dim)], "amp": amp, "phase": 0.0} for i in range(dim)]
        return TrigFunction(terms, torus, fn.get("constant", 0.0))

    def kappas(self) -> list:
        if "kappas" in self.raw:
            return [float(k) for k in self.raw["kappas"]]
        return [float(self.raw["kappa"])]

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})
