"""Strict JSON run configuration.

Top-level keys are the model parameters (``c_b``, ``c_u``, ``kappa``, ``F``,
``binding_density``), ``seed``, ``output_dir`` and mode blocks ``sim``,
``ode``, ``pde``, ``nl`` and ``sweep``. Unknown keys anywhere are errors.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ValidationError
from .model import FAMILIES, BindingDensity, ModelParams, validate_params

MODES = ("sim", "ode", "pde", "nl", "sweep")

REQUIRED = object()
NUM, INT, BOOL, STR, NUMLIST, OPTNUM = "number", "integer", "boolean", "string", "number list", "number or null"

MODEL_KEYS = {"c_b": (NUM, REQUIRED), "c_u": (NUM, REQUIRED), "kappa": (NUM, REQUIRED), "F": (NUM, 0.0)}

BLOCKS = {
    "sim": {
        "motors": (INT, 1001),
        "t_end": (NUM, 200.0),
        "burn_in": (NUM, 20.0),
        "sample_interval": (NUM, 0.5),
        "replicas": (INT, 1),
        "record_events": (BOOL, False),
    },
    "ode": {
        "t_end": (NUM, 10.0),
        "n_points": (INT, 201),
        "N0": (NUM, 0.0),
        "v0": (OPTNUM, None),
    },
    "pde": {
        "J": (INT, 4000),
        "cfl": (NUM, 0.5),
        "t_end": (NUM, 10.0),
        "x_min": (OPTNUM, None),
        "x_max": (OPTNUM, None),
        "snapshots": (NUMLIST, []),
        "stationary_check": (BOOL, True),
        "single_motor": (BOOL, False),
    },
    "nl": {
        "family": (STR, "sine"),
        "alpha": (NUM, 1.0),
        "t_end": (NUM, 50.0),
        "n_points": (INT, 501),
        "N0": (NUM, 0.0),
        "v0": (OPTNUM, None),
        "w0": (NUM, 0.0),
        "n_starts": (INT, 12),
        "cycle_t_max": (NUM, 400.0),
        "pde_check": (BOOL, False),
        "J": (INT, 2000),
        "cfl": (NUM, 0.5),
    },
    "sweep": {
        "param": (STR, REQUIRED),
        "mode": (STR, "meanfield"),
        "values": (NUMLIST, None),
        "lo": (OPTNUM, None),
        "hi": (OPTNUM, None),
        "count": (INT, None),
        "scale": (STR, "linear"),
    },
}

SWEEP_PARAMS = ("c_b", "c_u", "kappa", "F", "alpha")
SWEEP_MODES = {"meanfield": "ode", "simulate": "sim", "pde": "pde", "nonlinear": "nl"}


@dataclass
class RunConfig:
    params: ModelParams
    seed: int
    output_dir: str | None
    blocks: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def block(self, name):
        return self.blocks[name]


def _line_of(text, key):
    if not text:
        return None
    leaf = key.split(".")[-1]
    m = re.search(r'"%s"\s*:' % re.escape(leaf), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _fail(msg, key, text):
    line = _line_of(text, key)
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{key}{where}: {msg}", key=key)


def _coerce(kind, value, key, text):
    if kind == NUM:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            _fail(f"expected a finite number, got {value!r}", key, text)
        return float(value)
    if kind == OPTNUM:
        return None if value is None else _coerce(NUM, value, key, text)
    if kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            if value is None:
                return None
            _fail(f"expected an integer, got {value!r}", key, text)
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            _fail(f"expected true/false, got {value!r}", key, text)
        return value
    if kind == STR:
        if not isinstance(value, str):
            _fail(f"expected a string, got {value!r}", key, text)
        return value
    if kind == NUMLIST:
        if value is None:
            return None
        if not isinstance(value, list):
            _fail(f"expected a list of numbers, got {value!r}", key, text)
        return [_coerce(NUM, v, key, text) for v in value]
    raise AssertionError(kind)


def _parse_block(schema, data, prefix, text):
    if not isinstance(data, dict):
        _fail("expected an object", prefix, text)
    out = {}
    for k in data:
        if k not in schema:
            _fail(f"unknown key {k!r}", f"{prefix}.{k}", text)
    for k, (kind, default) in schema.items():
        if k in data:
            out[k] = _coerce(kind, data[k], f"{prefix}.{k}", text)
        elif default is REQUIRED:
            _fail("missing required key", f"{prefix}.{k}", text)
        else:
            out[k] = copy.deepcopy(default)
    return out


def _parse_density(data, text):
    key = "binding_density"
    if not isinstance(data, dict):
        _fail("expected an object", key, text)
    family = data.get("family")
    if family not in FAMILIES:
        _fail(f"family must be one of {sorted(FAMILIES)}, got {family!r}", f"{key}.family", text)
    names = FAMILIES[family]
    for k in data:
        if k != "family" and k not in names:
            _fail(f"unknown key {k!r} for family {family}", f"{key}.{k}", text)
    values = {}
    for k in names:
        if k not in data:
            _fail("missing required key", f"{key}.{k}", text)
        values[k] = _coerce(NUM, data[k], f"{key}.{k}", text)
    try:
        return BindingDensity(family, values)
    except ValidationError as e:
        _fail(str(e), e.key or key, text)


def _check_sweep(block, text):
    if block["param"] not in SWEEP_PARAMS:
        _fail(f"param must be one of {SWEEP_PARAMS}", "sweep.param", text)
    if block["mode"] not in SWEEP_MODES:
        _fail(f"mode must be one of {sorted(SWEEP_MODES)}", "sweep.mode", text)
    if block["scale"] not in ("linear", "log"):
        _fail("scale must be 'linear' or 'log'", "sweep.scale", text)
    if block["values"] is None:
        if block["lo"] is None or block["hi"] is None or block["count"] is None:
            _fail("give either values or lo, hi and count", "sweep.values", text)
        if block["count"] < 2:
            _fail("count must be >= 2", "sweep.count", text)
        if block["scale"] == "log" and not (block["lo"] > 0 and block["hi"] > 0):
            _fail("log grids need lo, hi > 0", "sweep.lo", text)
    elif len(block["values"]) < 2:
        _fail("need at least 2 grid values", "sweep.values", text)


def parse_config(data: dict, text: str = "", mode: str | None = None, seed_override=None) -> RunConfig:
    """Validate a decoded config. ``mode`` names the one required block."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = set(MODEL_KEYS) | {"binding_density", "seed", "output_dir"} | set(MODES)
    for k in data:
        if k not in allowed:
            _fail(f"unknown key {k!r}", k, text)
    model = {}
    for k, (kind, default) in MODEL_KEYS.items():
        if k in data:
            model[k] = _coerce(kind, data[k], k, text)
        elif default is REQUIRED:
            _fail("missing required key", k, text)
        else:
            model[k] = default
    if "binding_density" not in data:
        _fail("missing required key", "binding_density", text)
    density = _parse_density(data["binding_density"], text)
    seed = data.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        _fail(f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed", text)
    out_dir = data.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        _fail("expected a string", "output_dir", text)

    present = [m for m in MODES if m in data]
    if mode is not None:
        if present != [mode]:
            _fail(
                f"this command needs exactly one mode block '{mode}', found {present or 'none'}",
                mode,
                text,
            )
    blocks = {}
    for m in present:
        blk = data[m]
        if m == "sweep":
            if not isinstance(blk, dict):
                _fail("expected an object", "sweep", text)
            inner = {k: v for k, v in blk.items() if k in BLOCKS}
            outer = {k: v for k, v in blk.items() if k not in BLOCKS}
            parsed = _parse_block(BLOCKS["sweep"], outer, "sweep", text)
            _check_sweep(parsed, text)
            sub = SWEEP_MODES[parsed["mode"]]
            for k in inner:
                if k != sub:
                    _fail(f"sweep mode {parsed['mode']} takes a '{sub}' sub-block, not '{k}'", f"sweep.{k}", text)
            parsed[sub] = _parse_block(BLOCKS[sub], inner.get(sub, {}), f"sweep.{sub}", text)
            blocks[m] = parsed
        else:
            blocks[m] = _parse_block(BLOCKS[m], blk, m, text)

    params = ModelParams(model["c_b"], model["c_u"], model["kappa"], model["F"], density)
    try:
        validate_params(params)
    except ValidationError as e:
        _fail(str(e), e.key or "binding_density", text)
    raw = copy.deepcopy(data)
    raw["seed"] = seed
    return RunConfig(params, seed, out_dir, blocks, raw)


def load_config(path, mode=None, seed_override=None) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return parse_config(data, text, mode, seed_override)


DEFAULT_CONFIG = {
    "c_b": 1.0,
    "c_u": 1.0,
    "kappa": 1.0,
    "F": 0.0,
    "binding_density": {"family": "gaussian", "mu": 1.0, "sigma": 0.5},
    "seed": 7,
}
