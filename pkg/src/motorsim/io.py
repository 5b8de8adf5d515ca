"""CSV and JSON writers carrying reproducibility provenance."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from . import __version__


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(config: dict, seed) -> dict:
    return {"tool": "motorsim", "version": __version__, "config_hash": config_hash(config), "seed": seed}


def provenance_line(prov: dict) -> str:
    return f"# motorsim {prov['version']} config_hash={prov['config_hash']} seed={prov['seed']}"


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if value is None:
        return ""
    return repr(float(value))


def write_csv(path, header, rows, prov: dict):
    """Comma-separated, one '#' provenance line, one header row, repr floats."""
    path = Path(path)
    lines = [provenance_line(prov), ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Inverse of write_csv: returns (header, rows-as-strings)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def write_json(path, payload: dict, prov: dict):
    path = Path(path)
    body = {"provenance": prov, **_clean(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path
