"""Experiment configuration: JSON schema validation, model construction, defaults.

The schema lives next to this module in ``config_schema.json``.  Parsing
collects every violation (schema errors with their JSON paths, then model
invariants) before reporting, so a broken document is fixed in one pass.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

from jsonschema import Draft202012Validator

from .lattice import Lattice
from .models import LayerKinetics, ModelError, ModelSpec, nearest_neighbour_pi

__all__ = ["ConfigError", "RunConfig", "ExperimentConfig", "parse_config", "load_schema", "KINDS"]

KINDS = ("simulate", "check-duality", "check-exact", "check-invariance", "couple", "spread", "mixing")


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` holds one message per problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    out: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    kind: str
    params: dict
    run: RunConfig
    document: dict

    @property
    def digest(self) -> str:
        """SHA-256 of the filled-in model, experiment and seed (worker count and output path excluded)."""
        core = {"model": self.document["model"], "experiment": self.document["experiment"],
                "seed": self.run.seed}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@lru_cache(maxsize=1)
def load_schema() -> dict:
    return json.loads(resources.files("ipslab").joinpath("config_schema.json").read_text())


def _path(error) -> str:
    out = "$"
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _build_model(doc: dict) -> tuple[ModelSpec | None, list[str]]:
    problems = []
    d = doc["d"]
    pis, velocities = [], []
    for k, layer in enumerate(doc["layers"]):
        table: dict[tuple[int, ...], float] = {}
        if "nn_rate" in layer:
            table.update(nearest_neighbour_pi(d, layer["nn_rate"]))
        for jump in layer.get("jumps", []):
            u = tuple(jump["u"])
            table[u] = table.get(u, 0.0) + float(jump["rate"])
        if not table:
            problems.append(f"$.model.layers[{k}]: needs nn_rate or jumps")
        pis.append(table)
        velocities.append(layer.get("velocity"))
    m = len(pis)
    if "c" in doc:
        c = doc["c"]
    elif m == 1:
        c = [[0.0]]
    else:
        problems.append("$.model.c: a switch matrix is required with more than one layer")
        c = [[0.0] * m for _ in range(m)]
    given = [v is not None for v in velocities]
    if any(given) and not all(given):
        problems.append("$.model.layers: give a velocity for every layer or for none")
    vel = [tuple(v) for v in velocities] if all(given) else None
    s = doc["s"]
    alpha = doc.get("alpha", 1)
    try:
        kin = LayerKinetics(pi=pis, c=c, velocity=vel, kappa=doc.get("kappa", 1.0), lam=doc.get("lambda", 0.0))
        lattice = Lattice(d, doc["L"], m)
        model = ModelSpec(s, alpha, kin, lattice)
    except ModelError as exc:
        return None, problems + [f"$.model: {v}" for v in exc.violations]
    except ValueError as exc:
        return None, problems + [f"$.model: {exc}"]
    return (None if problems else model), problems


def _site_index(model: ModelSpec, site, where: str, problems: list[str]) -> int:
    lat = model.lattice
    if isinstance(site, int):
        if site >= lat.size:
            problems.append(f"{where}: site {site} outside [0, {lat.size})")
        return site
    x, layer = site["x"], site.get("layer", 0)
    if len(x) != lat.d or layer >= lat.num_layers:
        problems.append(f"{where}: site {site} does not fit d={lat.d}, layers={lat.num_layers}")
        return 0
    return lat.index(lat.site(x, layer))


def _defaults(kind: str, model: ModelSpec) -> dict[str, Any]:
    n = model.num_sites
    first = list(range(min(n, 3)))
    xis = [first[:1], first[:2], first[:3]]
    common = {"times": [1.0], "replicas": 1000}
    table = {
        "simulate": {"eta": first[:2], "times": [0.5, 1.0], "replicas": 1000},
        "check-duality": {"xis": xis, "etas": [list(range(min(n, 4)))], "times": [0.5, 1.0],
                          "replicas": 100_000, "z_threshold": 4.0},
        "check-exact": {"default_instances": True, "checks": None, "sectors": [1, 2],
                        "rhos": [0.3, 0.5, 0.8], "cap": 200_000, "threshold": 1e-10},
        "check-invariance": {"rho": 0.4, "xis": xis, "times": [0.0, 1.0], "replicas": 100_000,
                             "z_threshold": 4.0},
        "couple": {"x1": [0], "x2": [n // 2], "replicas": 1000, "h0": 1.0, "max_horizon": 4096.0,
                   "target": 0.95, "spread0": 1.0, "spread_cap": None, "route": "auto"},
        "spread": {"xi": [0], "xi_prime": [0], "times": [1.0, 5.0, 25.0, 50.0], "replicas": 10_000},
        "mixing": {"rho": 0.4, "xi": [0], "xi_prime": [0], "times": [0.0, 1.0, 2.0, 4.0],
                   "replicas": 10_000},
    }
    return dict(table.get(kind, common))


_PARTICLE_KEYS = ("eta", "xi", "xi_prime", "x1", "x2")
_PARTICLE_LIST_KEYS = ("xis", "etas")


def parse_config(document, kind: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a configuration document (dict or JSON text) and fill defaults.

    ``kind`` (the subcommand) fills in ``experiment.kind`` when absent and
    must agree with it otherwise.  ``overrides`` may set ``seed``,
    ``workers``, ``out`` and ``replicas``.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"$: not valid JSON ({exc})"]) from None
    if not isinstance(document, dict):
        raise ConfigError(["$: the configuration must be a JSON object"])
    doc = copy.deepcopy(document)
    exp = doc.setdefault("experiment", {})
    if kind is not None and isinstance(exp, dict):
        if exp.setdefault("kind", kind) != kind:
            raise ConfigError([f"$.experiment.kind: {exp['kind']!r} does not match subcommand {kind!r}"])
    validator = Draft202012Validator(load_schema())
    problems = [f"{_path(e)}: {e.message}" for e in sorted(validator.iter_errors(doc), key=_path)]
    if problems:
        raise ConfigError(problems)
    model, problems = _build_model(doc["model"])
    if model is None:
        raise ConfigError(problems)
    kind = doc["experiment"]["kind"]
    params = _defaults(kind, model)
    params.update({k: v for k, v in doc["experiment"].items() if k != "kind"})
    run = dict(doc.get("run", {}))
    overrides = overrides or {}
    for key in ("seed", "workers", "out"):
        if overrides.get(key) is not None:
            run[key] = overrides[key]
    if overrides.get("replicas") is not None:
        params["replicas"] = int(overrides["replicas"])
    run_cfg = RunConfig(int(run.get("seed", 0)), int(run.get("workers", 1)), str(run.get("out", "out")))
    if run_cfg.workers < 1 or params.get("replicas", 1) < 1:
        problems.append("$.run: workers and replicas must be >= 1")
    resolved = dict(params)
    for key in _PARTICLE_KEYS:
        if key in resolved:
            resolved[key] = [_site_index(model, s, f"$.experiment.{key}", problems) for s in resolved[key]]
    for key in _PARTICLE_LIST_KEYS:
        if key in resolved:
            resolved[key] = [[_site_index(model, s, f"$.experiment.{key}[{i}]", problems) for s in group]
                             for i, group in enumerate(resolved[key])]
    for i, f in enumerate(resolved.get("f_profiles") or []):
        if len(f) != model.num_sites or any(not 0 <= v <= 1 for v in f):
            problems.append(f"$.experiment.f_profiles[{i}]: need {model.num_sites} values in [0, 1]")
    if resolved.get("f_profiles") and model.kind != 0:
        problems.append("$.experiment.f_profiles: deterministic duality needs s=0")
    if problems:
        raise ConfigError(problems)
    filled = {"model": doc["model"], "experiment": {"kind": kind, **params},
              "run": {"seed": run_cfg.seed, "workers": run_cfg.workers, "out": run_cfg.out}}
    return ExperimentConfig(model, kind, resolved, run_cfg, filled)
