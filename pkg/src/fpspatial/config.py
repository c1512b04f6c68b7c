"""JSON experiment configs: parsing, validation and ``key=value`` overrides.

Every validation failure raises :class:`ConfigError` naming the JSON path
of the offending entry, e.g. ``model.marginal``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .densities import TargetDensity, make_density
from .experiments import ExperimentConfig
from .fields import IID, MA, FieldModel
from .grid import SiteSet
from .mixing import MixingProfile

_MISSING = object()


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config file {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("", "config must be a JSON object")
    return obj


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply flat ``a.b.c=value`` overrides; values are parsed as JSON when possible."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for i, p in enumerate(parts[:-1]):
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(".".join(parts[:i + 1]), "cannot override inside a non-object")
            node = nxt
        node[parts[-1]] = _parse_value(text)
    return cfg


def get(obj: dict, key: str, path: str, kind=None, default=_MISSING):
    full = f"{path}.{key}" if path else key
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected a JSON object")
    if key not in obj:
        if default is _MISSING:
            raise ConfigError(full, f"missing required key '{key}'")
        return default
    value = obj[key]
    if kind is not None:
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, kind) or (kind in (int, float) and isinstance(value, bool)):
            raise ConfigError(full, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def parse_density(obj: dict, path: str) -> TargetDensity:
    name = get(obj, "density", path, str)
    params = get(obj, "params", path, list, [])
    try:
        return make_density(name, [float(p) for p in params])
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_model(obj: dict, path: str = "model") -> FieldModel:
    kind = get(obj, "kind", path, str)
    marginal = parse_density(get(obj, "marginal", path, dict), f"{path}.marginal")
    if kind == IID:
        return FieldModel.iid(marginal)
    if kind != MA:
        raise ConfigError(f"{path}.kind", f"unknown model kind {kind!r}; use '{IID}' or '{MA}'")
    m = get(obj, "m", path, int)
    d = get(obj, "d", path, int)
    weights = get(obj, "weights", path, default="ones")
    try:
        return FieldModel.moving_average(marginal, m, d, None if weights == "ones" else weights)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.weights", str(exc)) from None


def parse_region(obj: dict, path: str = "region") -> SiteSet:
    try:
        if "rectangle" in obj:
            return SiteSet.rectangle(get(obj, "rectangle", path, list), obj.get("origin"))
        if "sites" in obj:
            return SiteSet.from_json(obj)
        if "ball" in obj:
            ball = get(obj, "ball", path, dict)
            return SiteSet.ball(get(ball, "center", f"{path}.ball", list),
                                get(ball, "radius", f"{path}.ball", int))
        if "random_connected" in obj:
            rc = get(obj, "random_connected", path, dict)
            p = f"{path}.random_connected"
            return SiteSet.random_connected(get(rc, "d", p, int), get(rc, "size", p, int),
                                            get(rc, "seed", p, int))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid region: {exc}") from None
    raise ConfigError(path, "region needs one of 'rectangle', 'sites', 'ball', 'random_connected'")


def parse_bin_width(value, path: str = "bin_width") -> tuple[float | None, float | None]:
    """``(bin_width, gamma)``: a number, or ``{"rule": "power", "gamma": g}``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(path, "bin width must be positive")
        return float(value), None
    if isinstance(value, dict):
        rule = get(value, "rule", path, str)
        if rule != "power":
            raise ConfigError(f"{path}.rule", "only the 'power' rule b = N^-gamma is supported")
        gamma = get(value, "gamma", path, float)
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"{path}.gamma", "gamma must lie strictly between 0 and 1")
        return None, gamma
    raise ConfigError(path, "expected a positive number or a schedule rule object")


def parse_profile(obj: dict, path: str = "profile") -> MixingProfile:
    get(obj, "kind", path, str)
    get(obj, "decay", path, dict)
    try:
        return MixingProfile.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid mixing profile: {exc}") from None


def parse_experiment(cfg: dict, workers: int | None = None,
                     override_hypotheses: bool = False) -> ExperimentConfig:
    model = parse_model(get(cfg, "model", "", dict))
    region = parse_region(get(cfg, "region", "", dict))
    bin_width, gamma = parse_bin_width(get(cfg, "bin_width", ""))
    points = get(cfg, "eval_points", "", list)
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in points):
        raise ConfigError("eval_points", "expected a list of numbers")
    replicates = get(cfg, "replicates", "", int)
    seed = get(cfg, "master_seed", "", int)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("master_seed", "seed must be a 64-bit unsigned integer")
    profile = None
    if "mixing_profile" in cfg:
        profile = parse_profile(cfg["mixing_profile"], "mixing_profile")
    checks = get(cfg, "checks", "", dict, {})
    try:
        return ExperimentConfig(
            model=model, region=region, eval_points=tuple(points), replicates=replicates,
            master_seed=seed, bin_width=bin_width, gamma=gamma,
            workers=workers or get(cfg, "workers", "", int, 1),
            override_hypotheses=override_hypotheses or get(cfg, "override_hypotheses", "", bool, False),
            mixing_profile=profile, checks=checks, raw=cfg)
    except ValueError as exc:
        msg = str(exc)
        where = "eval_points" if "evaluation point" in msg else (
            "replicates" if "replicates" in msg else "")
        raise ConfigError(where, msg) from None
