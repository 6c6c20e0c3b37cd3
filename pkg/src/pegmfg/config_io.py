"""Config file round-trip and dotted-path parameter addressing.

Configs are TOML with one section per parameter block ([market], [retail],
[arb], [garch], [sim]); all numbers parse as 64-bit floats and are written
back with 17 significant digits, so a round trip is exact.

Parameter addresses are dotted paths (``market.lambda0[2]``, ``garch.omega``,
``retail.share``). A vector field without an index sets every component.
Shorthand aliases mirror the common sweep axes: ``kappa_p`` (arbitrageur
primary frictions, all channels), ``kappa_r`` / ``kappa_a`` (secondary
frictions), ``pi_r`` / ``pi_a`` (population shares), and the special axis
``lambda_scale`` which multiplies every baseline venue impact uniformly.
Setting a population share renormalizes the complementary share to 1 - v.
"""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .params import (
    AgentParams,
    GarchParams,
    MarketParams,
    ModelParams,
    SimConfig,
)

__all__ = [
    "load_params",
    "save_params",
    "params_to_dict",
    "dict_to_params",
    "get_param",
    "set_param",
    "apply_overrides",
    "parse_axis_spec",
]

ALIASES = {
    "kappa_p": "arb.kappa_p",
    "kappa_r": "retail.kappa0",
    "kappa_a": "arb.kappa0",
    "pi_r": "retail.share",
    "pi_a": "arb.share",
    "lambda_scale": "lambda_scale",
}

_ADDR_RE = re.compile(r"^([a-z_]+)\.([a-z_0-9]+)(?:\[(\d+)\])?$")


def params_to_dict(params: ModelParams) -> dict:
    """Nested plain-Python dict mirroring the config sections."""
    d = asdict(params)
    for section in d.values():
        for key, val in section.items():
            if isinstance(val, np.ndarray):
                section[key] = [float(x) for x in val]
    return d


def dict_to_params(d: dict) -> ModelParams:
    return ModelParams(
        market=MarketParams(**d["market"]),
        retail=AgentParams(**d["retail"]),
        arb=AgentParams(**d["arb"]),
        garch=GarchParams(**d["garch"]),
        sim=SimConfig(**d["sim"]),
    )


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    try:
        return dict_to_params(data)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"config {path}: {exc}") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = "%.17g" % v
        # bare floats need a dot or exponent to stay floats in TOML
        if re.fullmatch(r"-?\d+", s):
            s += ".0"
        return s
    if isinstance(v, str):
        return '"%s"' % v.replace("\\", "\\\\").replace('"', '\\"')
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def save_params(params: ModelParams, path) -> None:
    d = params_to_dict(params)
    lines = []
    for section in ("market", "retail", "arb", "garch", "sim"):
        lines.append(f"[{section}]")
        for key, val in d[section].items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def _resolve(name: str) -> str:
    return ALIASES.get(name, name)


def get_param(params: ModelParams, name: str) -> float:
    """Scalar value at a dotted address (indexed vectors require an index)."""
    addr = _resolve(name)
    if addr == "lambda_scale":
        raise KeyError("lambda_scale is a write-only scale factor")
    m = _ADDR_RE.match(addr)
    if not m:
        raise KeyError(f"bad parameter address: {name!r}")
    section, field_name, idx = m.groups()
    d = params_to_dict(params)
    try:
        val = d[section][field_name]
    except KeyError:
        raise KeyError(f"unknown parameter: {name!r}") from None
    if isinstance(val, list):
        if idx is None:
            raise KeyError(f"{name!r} is a vector; use an [index]")
        return float(val[int(idx)])
    return float(val)


def set_param(params: ModelParams, name: str, value: float) -> ModelParams:
    """Return a new ModelParams with one addressed value replaced."""
    addr = _resolve(name)
    if addr == "lambda_scale":
        market = replace(params.market,
                         lambda0=params.market.lambda0 * float(value))
        return replace(params, market=market)
    m = _ADDR_RE.match(addr)
    if not m:
        raise KeyError(f"bad parameter address: {name!r}")
    section, field_name, idx = m.groups()
    d = params_to_dict(params)
    if section not in d or field_name not in d[section]:
        raise KeyError(f"unknown parameter: {name!r}")
    cur = d[section][field_name]
    if isinstance(cur, list):
        if idx is None:
            d[section][field_name] = [float(value)] * len(cur)
        else:
            i = int(idx)
            if not 0 <= i < len(cur):
                raise KeyError(f"{name!r}: index out of range")
            cur[i] = float(value)
    else:
        if idx is not None:
            raise KeyError(f"{name!r} is scalar; drop the [index]")
        if isinstance(cur, str):
            d[section][field_name] = str(value)
        elif isinstance(cur, int) and not isinstance(cur, bool) \
                and field_name in ("horizon", "seed", "max_iters",
                                   "n_venues", "n_channels"):
            d[section][field_name] = int(value)
        else:
            d[section][field_name] = float(value)
    # population shares stay complementary
    if (section, field_name) == ("retail", "share"):
        d["arb"]["share"] = 1.0 - float(value)
    elif (section, field_name) == ("arb", "share"):
        d["retail"]["share"] = 1.0 - float(value)
    return dict_to_params(d)


def apply_overrides(params: ModelParams, overrides) -> ModelParams:
    """Apply ``name=value`` strings (CLI --override / manifest replay)."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form name=value")
        name, _, raw = item.partition("=")
        name = name.strip()
        raw = raw.strip()
        if name.endswith(("shock_mode",)):
            params = _set_string(params, name, raw)
            continue
        try:
            value = float(raw)
        except ValueError:
            params = _set_string(params, name, raw)
            continue
        params = set_param(params, name, value)
    return params


def _set_string(params: ModelParams, name: str, raw: str) -> ModelParams:
    m = _ADDR_RE.match(_resolve(name))
    if not m or m.group(1) != "sim":
        raise ValueError(f"cannot assign string {raw!r} to {name!r}")
    d = params_to_dict(params)
    d["sim"][m.group(2)] = raw
    return dict_to_params(d)


def parse_axis_spec(spec: str) -> tuple[str, np.ndarray]:
    """Parse a CLI sweep axis ``name:lo:hi:n`` into (name, grid)."""
    parts = spec.split(":")
    if len(parts) != 4:
        raise ValueError(f"axis spec {spec!r} must be name:lo:hi:n")
    name, lo, hi, n = parts[0], float(parts[1]), float(parts[2]), int(parts[3])
    if n < 1:
        raise ValueError(f"axis spec {spec!r}: need at least one grid point")
    grid = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
    return name, grid
