"""YAML run configuration: schema, defaults and conversion to a scenario.

A config either names a catalogue scenario (other sections then override
its fields) or spells out ``model`` and ``datum`` itself.
"""
from __future__ import annotations

from dataclasses import fields
import copy
from pathlib import Path

import jsonschema
import yaml

from .exceptions import ConfigError
from .integrator import SolverConfig
from .mesh import DOMAIN_KINDS, DomainSpec
from .regularity import RegularityConfig
from .scenarios import CATALOGUE, PROFILES, TIERS, DatumSpec, ScenarioSpec

__all__ = ["CONFIG_SCHEMA", "DEFAULTS", "load_config", "validate_config", "defaults_yaml", "scenario_from_config"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_opt_pos = {"type": ["number", "null"], "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


CONFIG_SCHEMA = _obj({
    "schema": {"const": 1},
    "scenario": {"type": ["string", "null"], "enum": [None, *sorted(CATALOGUE)]},
    "tier": {"enum": sorted(TIERS)},
    "seed": {"type": "integer"},
    "mesh_factor": {"type": "integer", "minimum": 1},
    "model": _obj({
        "p": {"type": "number", "exclusiveMinimum": 1},
        "domain": _obj({"kind": {"enum": list(DOMAIN_KINDS)}, "N": {"type": "integer", "minimum": 1},
                        "R": _num, "R0": _num}, ["kind"]),
        "reaction_on": {"type": "boolean"},
        "diffusion_on": {"type": "boolean"},
    }),
    "datum": _obj({"profile": {"enum": sorted(PROFILES)}, "args": {"type": "object"}}, ["profile"]),
    "solver": _obj({f.name: ({"type": ["number", "integer", "null"]}) for f in fields(SolverConfig)}),
    "regularity": _obj({
        **{k: _opt_pos for k in ("eps0", "eps1", "eps3", "eps4")},
        "K": _pos, "n_scales": {"type": "integer", "minimum": 1},
        "r_list": {"type": ["array", "null"], "items": _pos},
        "q_list": {"type": "array", "items": _pos},
        "cylinder_slab": {"enum": ["scaled", "open"]},
        "calibration": {"enum": ["bounded", "flat"]},
        "calibration_factor": _pos, "flat_fraction": _pos, "resolve_nodes": _pos,
    }),
    "rescale": _obj({"a": {"type": ["number", "null"]}, "s_min": {"type": ["number", "null"]},
                     "s_max": {"type": ["number", "null"]}, "ds": _pos}),
    "bisect": _obj({"lambda_lo": _pos, "lambda_hi": _pos, "tol": _pos,
                    "budget": {"type": "integer", "minimum": 2}}),
    "expected": _obj({"collapse": {"type": "string"}, "type": {"type": "string"}, "dimension": _num}),
})

DEFAULTS = {
    "schema": 1,
    "scenario": None,
    "tier": "reference",
    "seed": 0,
    "mesh_factor": 1,
    "model": {"p": 3.0, "domain": {"kind": "interval", "N": 1, "R": 1.0, "R0": 0.0},
              "reaction_on": True, "diffusion_on": True},
    "datum": {"profile": "gaussian_bump", "args": {"amplitude": 10.0, "width": 0.2, "center": 0.5}},
    "solver": {f.name: f.default for f in fields(SolverConfig) if f.name != "rk_tolerance"},
    "regularity": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in RegularityConfig().to_dict().items()},
    "rescale": {"a": None, "s_min": None, "s_max": None, "ds": 0.1},
    "bisect": {"lambda_lo": 1.0, "lambda_hi": 100.0, "tol": 1e-3, "budget": 60},
    "expected": {},
}


def defaults_yaml() -> str:
    head = ("# blowuplab run configuration (schema 1).\n"
            "# 'scenario' picks a catalogue entry; other sections override it.\n"
            "# rk_tolerance and the node count come from 'tier' (coarse, reference, fine).\n")
    return head + yaml.safe_dump(DEFAULTS, sort_keys=False)


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming the offending key."""
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}",
                          {"path": where, "errors": [f"{'/'.join(map(str, x.absolute_path))}: {x.message}"
                                                     for x in errs]})


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, text: str | None = None) -> dict:
    """Read, validate and return the raw config (without defaults merged)."""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text or "") or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    validate_config(cfg)
    return cfg


def _merge_datum(base: dict, over: dict) -> dict:
    # arguments of one profile mean nothing to another
    if "profile" in over and over["profile"] != base.get("profile"):
        return {"profile": over["profile"], "args": copy.deepcopy(over.get("args", {}))}
    return {"profile": base["profile"], "args": {**base.get("args", {}), **over.get("args", {})}}


def scenario_from_config(cfg: dict) -> ScenarioSpec:
    """Scenario described by a validated config."""
    name = cfg.get("scenario")
    try:
        if name is not None:
            base = CATALOGUE[name].to_dict()
            over = {}
            if "model" in cfg:
                m = cfg["model"]
                for k in ("p", "reaction_on", "diffusion_on"):
                    if k in m:
                        over[k] = m[k]
                if "domain" in m:
                    over["domain"] = _merge(base["domain"], m["domain"])
            if "datum" in cfg:
                over["datum"] = _merge_datum(base["datum"], cfg["datum"])
            for k in ("solver", "regularity", "expected"):
                if k in cfg:
                    over[k] = _merge(base[k], cfg[k])
            if "mesh_factor" in cfg:
                over["mesh_factor"] = cfg["mesh_factor"]
            return ScenarioSpec.from_dict(_merge(base, over))
        full = _merge(DEFAULTS, {k: v for k, v in cfg.items() if k != "datum"})
        full["datum"] = _merge_datum(DEFAULTS["datum"], cfg.get("datum", {}))
        m = full["model"]
        dom = DomainSpec(**m["domain"])
        solver = {k: v for k, v in cfg.get("solver", {}).items()}
        return ScenarioSpec("custom", float(m["p"]), dom, DatumSpec(**full["datum"]),
                            solver=solver, regularity=dict(cfg.get("regularity", {})),
                            mesh_factor=int(full["mesh_factor"]), reaction_on=bool(m["reaction_on"]),
                            diffusion_on=bool(m["diffusion_on"]), expected=dict(full["expected"]))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"inconsistent config: {exc}") from exc
