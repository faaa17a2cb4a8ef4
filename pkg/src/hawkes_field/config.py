"""Model configuration files (TOML) and parameter hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from .core import FiringRate, InitialCondition, ModelParams, SynapticKernel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ALLOWED_KEYS", "parse_model_config", "load_model_config", "params_to_dict", "params_hash"]

SCHEMA_VERSION = 1

ALLOWED_KEYS = {
    "alpha",
    "rate.kind", "rate.f0", "rate.kappa", "rate.floor",
    "kernel.kind", "kernel.A", "kernel.sigma",
    "u0.kind", "u0.a", "u0.b", "u0.center", "u0.width",
}


class ConfigError(ValueError):
    pass


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_model_config(data: dict) -> ModelParams:
    """Build :class:`ModelParams` from a (possibly nested) mapping of documented keys."""
    flat = _flatten(data)
    unknown = sorted(set(flat) - ALLOWED_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    def section(name):
        return {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(name + ".")}

    try:
        f = FiringRate(**section("rate"))
        w = SynapticKernel(**section("kernel"))
        u0 = InitialCondition(**section("u0"))
        return ModelParams(f=f, w=w, u0=u0, alpha=float(flat.get("alpha", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_model_config(path) -> ModelParams:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_model_config(data)


def params_to_dict(params: ModelParams) -> dict:
    return dataclasses.asdict(params)


def params_hash(params: ModelParams) -> str:
    blob = json.dumps(params_to_dict(params), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``configs/<name>.toml``)."""
    return Path(__file__).parent / "configs" / f"{name}.toml"
