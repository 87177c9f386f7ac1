"""Run configuration: a JSON document validated against a published schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from ..gridding import Specification
from ..models import REGISTRY, Box, NoiseFamily, Space, StochasticSystem, make_benchmark
from ..models.benchmarks import Benchmark


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one diagnostic per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_box = {
    "type": "object",
    "properties": {"lower": _vec, "upper": _vec},
    "required": ["lower", "upper"],
    "additionalProperties": False,
}
_space = {
    "type": "object",
    "properties": {"lower": _vec, "upper": _vec, "eta": _vec},
    "required": ["lower", "upper", "eta"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "imdpkit run",
    "type": "object",
    "properties": {
        "benchmark": {"type": "string"},
        "variant": {"type": "string"},
        "model": {
            "type": "object",
            "description": "inline affine model x' = A x + B u + c + noise",
            "properties": {
                "name": {"type": "string"},
                "A": {"type": "array", "items": _vec},
                "B": {"type": "array", "items": _vec},
                "c": _vec,
                "sigma": _vec,
                "state_space": _space,
                "input_space": _space,
            },
            "required": ["A", "B", "sigma", "state_space", "input_space"],
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {"eta": _vec},
            "additionalProperties": False,
        },
        "spec": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["reach", "safety", "reach-avoid"]},
                "target": {"type": "array", "items": _box},
                "avoid": {"type": "array", "items": _box},
                "horizon": {"type": ["integer", "null"], "minimum": 0},
            },
            "additionalProperties": False,
        },
        "engine": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": ["integer", "null"], "minimum": 0},
                "cap": {"type": "integer", "minimum": 1},
                "free_upper": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "montecarlo": {
            "type": "object",
            "properties": {
                "runs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
                "initial_points": {"type": "array", "items": _vec},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["json", "csv"]},
                "figures": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 1},
    },
    "oneOf": [{"required": ["benchmark"]}, {"required": ["model"]}],
    "additionalProperties": False,
}


@dataclass
class RunSpec:
    benchmark: Optional[str] = None
    variant: Optional[str] = None
    model: Optional[dict] = None
    grid: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)
    engine: dict = field(default_factory=dict)
    montecarlo: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    workers: int = 1

    @property
    def epsilon(self) -> float:
        return float(self.engine.get("epsilon", 1e-6))

    @property
    def runs(self) -> int:
        return int(self.montecarlo.get("runs", 10_000))

    @property
    def seed(self) -> int:
        return int(self.montecarlo.get("seed", 0))

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if v not in (None, {}, [])}
        return out


def validate_config(doc) -> RunSpec:
    """Check ``doc`` against :data:`SCHEMA` and semantic rules."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [
        f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
        for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if errors:
        raise ConfigError(errors)
    if "benchmark" in doc and doc["benchmark"] not in REGISTRY:
        raise ConfigError([f"benchmark: unknown id {doc['benchmark']!r}; known: {', '.join(sorted(REGISTRY))}"])
    if "benchmark" in doc and "variant" in doc:
        variants = REGISTRY[doc["benchmark"]][0]
        if doc["variant"] not in variants:
            raise ConfigError([f"variant: {doc['variant']!r} not in {sorted(variants)}"])
    return RunSpec(**doc)


def load_config(path) -> RunSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return validate_config(doc)


def _inline_benchmark(model: dict, spec: dict) -> Benchmark:
    A = np.asarray(model["A"], float)
    B = np.asarray(model["B"], float)
    n = A.shape[0]
    c = np.asarray(model.get("c", np.zeros(n)), float)
    if A.shape != (n, n) or B.shape[0] != n or c.shape != (n,):
        raise ConfigError([f"model: inconsistent shapes A{A.shape} B{B.shape} c{c.shape}"])
    xs = Space.make(**model["state_space"])
    us = Space.make(**model["input_space"])

    def mean(x, u, w, A=A, B=B, c=c):
        return x @ A.T + np.atleast_2d(u) @ B.T + c

    system = StochasticSystem(
        name=model.get("name", "inline"),
        state_dim=n,
        input_space=us,
        mean_fn=mean,
        noise=NoiseFamily.gaussian(model["sigma"]),
        affine_A=A,
    )
    return Benchmark(system.name, "inline", system, Specification(spec.get("kind", "reach")), xs, us, np.empty((0, n)))


def _boxes(items):
    return tuple(Box(b["lower"], b["upper"]) for b in items)


def resolve(run: RunSpec) -> Benchmark:
    """Benchmark described by ``run`` with grid/spec overrides applied."""
    if run.model is not None:
        bench = _inline_benchmark(run.model, run.spec)
    else:
        bench = make_benchmark(run.benchmark, run.variant)
    changes = {}
    if "eta" in run.grid:
        s = bench.state_space
        try:
            changes["state_space"] = Space.make(s.box.lower, s.box.upper, run.grid["eta"])
        except ValueError as exc:
            raise ConfigError([f"grid/eta: {exc}"]) from exc
    sp = bench.spec
    if run.spec or "horizon" in run.engine or "epsilon" in run.engine:
        try:
            sp = Specification(
                run.spec.get("kind", sp.kind),
                _boxes(run.spec["target"]) if "target" in run.spec else sp.target,
                _boxes(run.spec["avoid"]) if "avoid" in run.spec else sp.avoid,
                run.engine.get("horizon", run.spec.get("horizon", sp.horizon)),
                run.engine.get("epsilon", sp.epsilon),
            )
        except ValueError as exc:
            raise ConfigError([f"spec: {exc}"]) from exc
        changes["spec"] = sp
    if "initial_points" in run.montecarlo:
        changes["initial_points"] = np.asarray(run.montecarlo["initial_points"], float)
    if changes:
        bench = replace(bench, **changes)
    return bench
