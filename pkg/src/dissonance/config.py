"""Experiment configuration: JSON schema, semantic checks, IFS builders, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .conformal_maps import Inversion, MoebiusWord, PlanarAnalytic, Similarity
from .errors import ConfigInvalid, DissonanceError
from .ifs import IFS, cantor, four_corner, middle_thirds
from .lie import axis_angle, rotation_2d

KINDS = ("validate", "sample", "dim", "convolve", "project", "scenery",
         "check-conditions", "dissonance", "sweep")
MAX_COUNT = 10**8
MAX_DEPTH = 20

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}
_complex = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_count = {"type": "integer", "minimum": 1, "maximum": MAX_COUNT}

_MAP = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["type", "r"],
         "properties": {"type": {"const": "similarity"}, "r": {"type": "number", "exclusiveMinimum": 0},
                        "angle": _number, "turns": _number, "axis": _vector,
                        "matrix": {"type": "array", "items": _vector}, "a": _vector,
                        "d": {"type": "integer", "minimum": 1, "maximum": 16}}},
        {"type": "object", "additionalProperties": False, "required": ["type", "center"],
         "properties": {"type": {"const": "inversion"}, "center": _vector,
                        "radius": {"type": "number", "exclusiveMinimum": 0}}},
        {"type": "object", "additionalProperties": False, "required": ["type", "factors"],
         "properties": {"type": {"const": "word"},
                        "factors": {"type": "array", "items": {"$ref": "#/$defs/map"}, "minItems": 1}}},
        {"type": "object", "additionalProperties": False, "required": ["type"],
         "properties": {"type": {"const": "analytic"},
                        "numerator": {"type": "array", "items": _complex, "minItems": 1},
                        "denominator": {"type": "array", "items": _complex, "minItems": 1},
                        "moebius": {"type": "array", "items": _complex, "minItems": 4, "maxItems": 4}}},
    ]
}

_IFS = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["preset"],
         "properties": {"preset": {"enum": ["middle_thirds", "cantor", "four_corner"]},
                        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                        "probs": {"type": "array", "items": _number}}},
        {"type": "object", "additionalProperties": False, "required": ["maps"],
         "properties": {"maps": {"type": "array", "items": {"$ref": "#/$defs/map"}, "minItems": 2},
                        "probs": {"type": "array", "items": _number}}},
    ]
}

_ESTIMATOR = {
    "type": "object", "additionalProperties": False,
    "properties": {"method": {"enum": ["box", "correlation"]},
                   "min_count": {"type": "integer", "minimum": 1},
                   "max_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                   "n_shifts": {"type": "integer", "minimum": 1, "maximum": 64},
                   "min_neighbors": {"type": "integer", "minimum": 1},
                   "max_correlation": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                   "algorithm": {"enum": ["auto", "brute", "sorted", "tree"]}},
}

_PROPERTIES = {
    "kind": {"enum": list(KINDS)},
    "id": {"type": "string", "maxLength": 200},
    "description": {"type": "string"},
    "seed": _seed,
    "ifs": {"$ref": "#/$defs/ifs"},
    "psi": {"$ref": "#/$defs/ifs"},
    "cloud": {"type": "string"},
    "n": _count,
    "m": _count,
    "depth": {"type": "integer", "minimum": 0, "maximum": MAX_DEPTH},
    "estimator": _ESTIMATOR,
    "margins": {"type": "object", "additionalProperties": False,
                "properties": {"dissonant_tol": {"type": "number", "minimum": 0},
                               "resonant_gap": {"type": "number", "minimum": 0}}},
    "theorem": {"enum": ["T3", "C4", "C5", "T6", "T7"]},
    "word_len": {"type": "integer", "minimum": 1, "maximum": 12},
    "max_denominator": {"type": "integer", "minimum": 1, "maximum": 10**12},
    "projection": {
        "type": "object", "additionalProperties": False, "required": ["type"],
        "properties": {"type": {"enum": ["orthogonal", "lambda"]},
                       "basis": {"type": "array", "items": _vector, "minItems": 1},
                       "k": {"type": "integer", "minimum": 1},
                       "basis_seed": _seed,
                       "copies": {"type": "integer", "minimum": 1, "maximum": 8},
                       "t_interval": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                       "lambda_seed": _seed}},
    "scenery": {
        "type": "object", "additionalProperties": False,
        "properties": {"x": _vector, "point_index": {"type": "integer", "minimum": 0},
                       "T": {"type": "number", "minimum": 0, "maximum": 64},
                       "dt": {"type": "number", "exclusiveMinimum": 0},
                       "resolution": {"type": "integer", "minimum": 1, "maximum": 12}}},
    "base": {"type": "object"},
    "grid": {"type": "object", "additionalProperties": {"type": "array"}},
    "configs": {"type": "array", "items": {"type": "object"}},
}

_REQUIRED = {
    "validate": ["ifs"],
    "sample": ["ifs", "n"],
    "dim": ["n"],
    "convolve": ["ifs", "psi", "n"],
    "project": ["ifs", "n", "projection"],
    "scenery": ["ifs", "n", "scenery"],
    "check-conditions": ["ifs", "theorem"],
    "dissonance": ["ifs", "psi", "n"],
    "sweep": [],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": _PROPERTIES,
    "allOf": [{"if": {"properties": {"kind": {"const": k}}}, "then": {"required": req}}
              for k, req in _REQUIRED.items()],
    "$defs": {"map": _MAP, "ifs": _IFS},
}

_VALIDATOR = Draft202012Validator(SCHEMA)


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _deepest(error):
    # oneOf failures carry the useful detail in their sub-errors
    while error.context:
        error = max(error.context, key=lambda e: len(e.absolute_path))
    return error


def validate_config(cfg) -> dict:
    """Schema and semantic validation.  Raises ``ConfigInvalid`` with a ``$.a.b`` path."""
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config must be a JSON object", "$")
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = _deepest(errors[-1])
        raise ConfigInvalid(err.message, _path(err.absolute_path))
    for key in ("ifs", "psi"):
        if key in cfg:
            _check_probs(cfg[key], f"$.{key}")
    if cfg["kind"] == "dim" and ("ifs" in cfg) == ("cloud" in cfg):
        raise ConfigInvalid("dim needs exactly one of ifs or cloud", "$")
    if cfg["kind"] == "sweep":
        _validate_sweep(cfg)
    return cfg


def _check_probs(spec: dict, path: str) -> None:
    probs = spec.get("probs")
    if probs is None:
        return
    p = np.asarray(probs, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ConfigInvalid("probabilities must lie in (0, 1)", f"{path}.probs")
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-12:
        raise ConfigInvalid(f"probabilities sum to {total!r}, not 1", f"{path}.probs")


def _validate_sweep(cfg: dict) -> None:
    if ("base" in cfg) == ("configs" in cfg):
        raise ConfigInvalid("sweep needs exactly one of base (+grid) or configs", "$")
    rows = expand_sweep(cfg)
    kinds = {r.get("kind") for r in rows}
    if "sweep" in kinds:
        raise ConfigInvalid("sweeps cannot nest", "$")
    if len(kinds) > 1:
        raise ConfigInvalid(f"sweep rows mix kinds {sorted(map(str, kinds))}", "$")


def set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def get_path(cfg: dict, dotted: str):
    node = cfg
    for k in dotted.split("."):
        node = node[k]
    return node


def expand_sweep(cfg: dict) -> list[dict]:
    """Row configs of a sweep: explicit list, or the cartesian product of ``grid``."""
    if "configs" in cfg:
        return [copy.deepcopy(c) for c in cfg["configs"]]
    grid = cfg.get("grid", {})
    if any(len(v) == 0 for v in grid.values()):
        return []
    rows = [copy.deepcopy(cfg["base"])]
    for key, values in grid.items():
        nxt = []
        for row in rows:
            for v in values:
                r = copy.deepcopy(row)
                set_path(r, key, v)
                nxt.append(r)
        rows = nxt
    return rows


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON; key order and whitespace do not matter."""
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}", "$") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"invalid JSON: {exc}", "$") from exc
    return validate_config(cfg)


def bundled_configs() -> dict[str, dict]:
    """The example configs shipped with the package, by file stem."""
    out = {}
    root = resources.files("dissonance") / "configs"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = json.loads(entry.read_text())
    return out


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("dissonance") / "configs" / f"{name}.json"))


def build_map(spec: dict, path: str = "$"):
    kind = spec["type"]
    if kind == "similarity":
        a = spec.get("a")
        d = spec.get("d") or (len(a) if a is not None else None)
        O = None
        if "matrix" in spec:
            O = np.asarray(spec["matrix"], dtype=float)
        elif "angle" in spec or "turns" in spec:
            angle = spec.get("angle", 0.0) + 2.0 * math.pi * spec.get("turns", 0.0)
            O = axis_angle(spec["axis"], angle) if "axis" in spec else rotation_2d(angle)
        if d is None and O is not None:
            d = O.shape[0]
        return Similarity(spec["r"], O, a, d=d)
    if kind == "inversion":
        return Inversion(spec["center"], spec.get("radius", 1.0))
    if kind == "word":
        return MoebiusWord([build_map(f, path) for f in spec["factors"]])
    if kind == "analytic":
        if "moebius" in spec:
            return PlanarAnalytic.from_moebius(*[complex(*c) for c in spec["moebius"]])
        num = [complex(*c) for c in spec.get("numerator", [[1, 0], [0, 0]])]
        den = [complex(*c) for c in spec.get("denominator", [[1, 0]])]
        return PlanarAnalytic(num, den)
    raise ConfigInvalid(f"unknown map type {kind!r}", f"{path}.type")


def build_ifs(spec: dict, path: str = "$.ifs") -> IFS:
    """IFS from a config fragment; construction failures become ``ConfigInvalid``."""
    try:
        if "preset" in spec:
            preset = spec["preset"]
            if preset == "middle_thirds":
                ifs = middle_thirds()
            elif preset == "cantor":
                ifs = cantor(spec.get("ratio", 1 / 3))
            else:
                ifs = four_corner(spec.get("ratio", 0.25))
            if "probs" in spec:
                ifs = IFS(ifs.maps, spec["probs"])
            return ifs
        maps = [build_map(m, f"{path}.maps[{i}]") for i, m in enumerate(spec["maps"])]
        return IFS(maps, spec.get("probs"))
    except ConfigInvalid:
        raise
    except (DissonanceError, ValueError) as exc:
        raise ConfigInvalid(str(exc), path) from exc
