"""Experiment configuration: JSON schema, defaults and game construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator

from .errors import ConfigError
from .graph import TOPOLOGIES, CommGraph, make_topology
from .model import (Agent, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets)
from .solver import MODES, RHO_VARIANTS, STEP_PROFILES, SolverParams

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}

_POLYTOPE = {
    "type": "object",
    "oneOf": [
        {"required": ["box"], "properties": {"box": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}},
        {"required": ["A", "b"]},
    ],
    "properties": {
        "box": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "dim": {"type": "integer", "minimum": 1},
        "A": _MAT, "b": _VEC, "Aeq": _MAT, "beq": _VEC,
    },
    "additionalProperties": False,
}

_COST = {
    "type": "object",
    "required": ["kind", "Q", "linear"],
    "properties": {
        "kind": {"enum": ["quadratic", "neighbor_average"]},
        "Q": _MAT,
        "linear": _VEC,
        "cross": {"type": "object", "patternProperties": {"^[0-9]+$": _MAT}, "additionalProperties": False},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["game", "graph"],
    "properties": {
        "name": {"type": "string"},
        "game": {
            "type": "object",
            "required": ["agents", "coupling", "uncertainty"],
            "properties": {
                "agents": {"type": "array", "minItems": 1, "items": {
                    "type": "object",
                    "required": ["n", "cost", "omega"],
                    "properties": {"n": {"type": "integer", "minimum": 1}, "cost": _COST, "omega": _POLYTOPE},
                    "additionalProperties": False,
                }},
                "coupling": {"type": "array", "items": {
                    "type": "object",
                    "required": ["a0", "P", "b0", "q"],
                    "properties": {"a0": _MAT, "P": {"type": "array", "items": _MAT}, "b0": _NUM, "q": _VEC},
                    "additionalProperties": False,
                }},
                "uncertainty": {
                    "type": "object",
                    "required": ["local", "global"],
                    "properties": {"local": {"type": "array", "items": _POLYTOPE}, "global": _POLYTOPE},
                    "additionalProperties": False,
                },
                "nominal": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "graph": {
            "type": "object",
            "required": ["topology"],
            "properties": {
                "topology": {"enum": [*TOPOLOGIES, "edges"]},
                "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                     "minItems": 2, "maxItems": 2}},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "sigma_bar": _NUM,
                "rho_variant": {"enum": list(RHO_VARIANTS)},
                "fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "step_profile": {"enum": list(STEP_PROFILES)},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 0},
                "mode": {"enum": [*MODES, "both"]},
                "residual_norm": {"enum": ["euclidean", "phi"]},
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "topologies": {"type": "array", "items": {"enum": list(TOPOLOGIES)}, "minItems": 1},
                "centralized": {"type": "boolean"},
                "centralized_tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "verification": {
            "type": "object",
            "properties": {
                "feasibility_tol": {"type": "number", "minimum": 0},
                "box_tol": {"type": "number", "minimum": 0},
                "gap_tol": {"type": "number", "minimum": 0},
                "consensus_tol": {"type": "number", "minimum": 0},
                "agreement_tol": {"type": "number", "minimum": 0},
                "kkt_factor": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "record_wall_time": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "solver": {"sigma_bar": 0.5, "rho_variant": "conservative", "fraction": 0.9, "step_profile": "uniform",
               "tolerance": 1e-6, "max_iter": 50_000, "mode": "ripfbf", "residual_norm": "euclidean"},
    "experiment": {"centralized": False, "centralized_tolerance": 1e-10},
    "verification": {"feasibility_tol": 1e-6, "box_tol": 1e-8, "gap_tol": 1e-4, "consensus_tol": 1e-5,
                     "agreement_tol": 1e-3, "kkt_factor": 10.0},
    "output": {"dir": "results", "record_wall_time": True},
    "seed": 0,
}

_VALIDATOR = Draft7Validator(SCHEMA)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def _first_error(data) -> ConfigError | None:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return None
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        return ConfigError(_pointer(path + missing[:1]), f"missing required field {missing[0]!r}")
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return ConfigError(_pointer(path + extra[:1]), f"unknown field {extra[0]!r}")
    return ConfigError(_pointer(path), err.message)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated configuration with every default filled in.

    ``data`` is the normalized JSON document; :meth:`to_dict` returns a deep
    copy, so ``from_dict(cfg.to_dict())`` reproduces ``cfg`` exactly.
    """

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        err = _first_error(raw)
        if err is not None:
            raise err
        data = copy.deepcopy(raw)
        for section in ("solver", "experiment", "verification", "output"):
            merged = dict(DEFAULTS[section])
            merged.update(data.get(section, {}))
            data[section] = merged
        data.setdefault("seed", DEFAULTS["seed"])
        data.setdefault("name", "experiment")
        data["game"].setdefault("nominal", False)
        _semantic_checks(data)
        return cls(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def replace(self, **sections) -> "ExperimentConfig":
        """New config with the given top-level sections merged in."""
        d = self.to_dict()
        for k, v in sections.items():
            if isinstance(v, dict) and isinstance(d.get(k), dict):
                d[k].update(v)
            else:
                d[k] = v
        return ExperimentConfig.from_dict(d)

    @property
    def n_agents(self) -> int:
        return len(self.data["game"]["agents"])

    @property
    def topologies(self) -> list[str]:
        return list(self.data["experiment"].get("topologies") or [self.data["graph"]["topology"]])

    @property
    def modes(self) -> list[str]:
        m = self.data["solver"]["mode"]
        return list(MODES) if m == "both" else [m]

    def solver_params(self, mode: str) -> SolverParams:
        s = self.data["solver"]
        return SolverParams(sigma_bar=s["sigma_bar"], rho_variant=s["rho_variant"], fraction=s["fraction"],
                            step_profile=s["step_profile"], max_iter=s["max_iter"], tol=s["tolerance"],
                            mode=mode, residual_norm=s["residual_norm"])


def _semantic_checks(data: dict) -> None:
    sb = data["solver"]["sigma_bar"]
    if not 0.0 <= sb < 1.0:
        raise ConfigError("/solver/sigma_bar",
                          f"sigma_bar = {sb} breaks the inertia bound 0 <= sigma_k <= sigma_bar < 1 "
                          "required for convergence")
    game = data["game"]
    N = len(game["agents"])
    if len(game["uncertainty"]["local"]) != N:
        raise ConfigError("/game/uncertainty/local", f"expected {N} local uncertainty sets")
    for k, row in enumerate(game["coupling"]):
        for key in ("a0", "P"):
            if len(row[key]) != N:
                raise ConfigError(f"/game/coupling/{k}/{key}", f"expected one entry per agent ({N})")
    if data["graph"]["topology"] == "edges" and "edges" not in data["graph"]:
        raise ConfigError("/graph/edges", "edge-list topology needs 'edges'")
    for i, a in enumerate(game["agents"]):
        if a["cost"]["kind"] == "neighbor_average" and "cross" in a["cost"]:
            raise ConfigError(f"/game/agents/{i}/cost/cross", "neighbor_average costs derive their cross terms")


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; schema errors carry a JSON pointer."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def shipped_config_path(name: str = "benchmark") -> Path:
    return Path(str(resources.files("robust_gnep") / "data" / f"{name}.json"))


def load_shipped(name: str = "benchmark") -> ExperimentConfig:
    return load_config(shipped_config_path(name))


def build_polytope(spec: dict, pointer: str, dim: int = 1) -> Polytope:
    """``{"box": [lo, hi], "dim": d}`` or explicit ``A, b`` (and optional ``Aeq, beq``) rows."""
    try:
        if "box" in spec:
            lo, hi = spec["box"]
            if lo > hi:
                raise ValueError(f"box bounds cross: {lo} > {hi}")
            return Polytope.box(lo, hi, spec.get("dim", dim))
        return Polytope(spec["A"], spec["b"], spec.get("Aeq"), spec.get("beq"))
    except ValueError as exc:
        raise ConfigError(pointer, str(exc)) from exc


def build_graph(cfg: ExperimentConfig, topology: str | None = None) -> CommGraph:
    g = cfg.data["graph"]
    kind = topology or g["topology"]
    try:
        return make_topology(kind, cfg.n_agents, g.get("edges") if kind == "edges" else None)
    except ValueError as exc:
        raise ConfigError("/graph", str(exc)) from exc


def build_game(cfg: ExperimentConfig, graph: CommGraph) -> UncertainGame:
    """Game described by ``cfg``; ``neighbor_average`` costs use ``graph``."""
    spec = cfg.data["game"]
    nbrs = graph.neighbors
    agents = []
    for i, a in enumerate(spec["agents"]):
        n = a["n"]
        c = a["cost"]
        try:
            if c["kind"] == "neighbor_average":
                cross = {j: np.eye(n, spec["agents"][j]["n"]) / len(nbrs[i]) for j in nbrs[i]}
            else:
                cross = {int(j): np.asarray(r, dtype=float) for j, r in c.get("cross", {}).items()}
            cost = QuadraticCost(np.asarray(c["Q"], dtype=float).reshape(n, n), c["linear"], cross)
        except ValueError as exc:
            raise ConfigError(f"/game/agents/{i}/cost", str(exc)) from exc
        omega = build_polytope(a["omega"], f"/game/agents/{i}/omega", dim=n)
        agents.append(Agent(n, cost, omega))
    rows = [UncertainConstraint(r["a0"], r["P"], r["b0"], r["q"]) for r in spec["coupling"]]
    unc = UncertaintySets(
        tuple(build_polytope(p, f"/game/uncertainty/local/{i}") for i, p in enumerate(spec["uncertainty"]["local"])),
        build_polytope(spec["uncertainty"]["global"], "/game/uncertainty/global"))
    try:
        game = UncertainGame(tuple(agents), tuple(rows), unc)
    except ValueError as exc:
        raise ConfigError("/game", str(exc)) from exc
    return game.nominal() if spec.get("nominal") else game
