"""Run configuration: YAML (or a previous run's manifest) plus flag overrides.

Precedence, lowest to highest: built-in defaults, config file, command-line
flags.  Unknown keys are rejected and every value is validated before any
command runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import ParameterError, SingularityError, UserParams, WorldParams
from .experiments import PRESETS, ExperimentConfig
from .interventions import InterventionProfile
from .planner import DEFAULT_GAMMA_APP

__all__ = ["ConfigError", "RunConfig", "load_config", "FORMATS"]

FORMATS = ("csv", "json", "svg")
_PROFILE_KEYS = {"maximal", "delta_B", "delta_D", "delta_gamma", "delta_p", "d_floor", "epsilon_B"}
_SCALARS = {
    "preset": str,
    "gamma_app": float,
    "seed": int,
    "resolution": int,
    "episodes": int,
    "horizon": int,
    "start_w": int,
    "trials": int,
    "workers": int,
    "out": str,
}


class ConfigError(ParameterError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class RunConfig:
    world: WorldParams = WorldParams()
    user: UserParams = UserParams()
    preset: Optional[str] = None
    profile: Any = "maximal"  # "maximal" or a dict of InterventionProfile fields
    gamma_app: float = DEFAULT_GAMMA_APP
    seed: int = 0
    resolution: int = 1000
    episodes: int = 10_000
    horizon: int = 1000
    start_w: int = 1
    trials: int = 20
    workers: int = 1
    formats: tuple = ("csv", "json")
    out: Optional[str] = None

    def theta(self) -> UserParams:
        """User parameters after applying the preset, if any."""
        if self.preset is None:
            return self.user
        return PRESETS[self.preset].params(self.user)

    def _profile_options(self) -> dict:
        return {} if self.profile == "maximal" else dict(self.profile)

    def make_profile(self, theta: UserParams) -> InterventionProfile:
        opts = self._profile_options()
        if opts.pop("maximal", self.profile == "maximal"):
            return InterventionProfile.maximal(theta, opts.get("d_floor"), opts.get("epsilon_B"))
        return InterventionProfile(**opts)

    def experiment(self) -> ExperimentConfig:
        opts = self._profile_options()
        return ExperimentConfig(
            world=self.world,
            base_user=self.user,
            gamma_app=self.gamma_app,
            d_floor=opts.get("d_floor"),
            epsilon_B=opts.get("epsilon_B"),
            resolution=self.resolution,
        )

    def to_dict(self) -> dict:
        """Resolved configuration as recorded in manifests (``out`` excluded)."""
        return {
            "world": asdict(self.world),
            "user": asdict(self.user),
            "preset": self.preset,
            "profile": self.profile if self.profile == "maximal" else dict(self.profile),
            "gamma_app": self.gamma_app,
            "seed": self.seed,
            "resolution": self.resolution,
            "episodes": self.episodes,
            "horizon": self.horizon,
            "start_w": self.start_w,
            "trials": self.trials,
            "workers": self.workers,
            "formats": list(self.formats),
        }


def _key_lines(node, prefix: str = "", out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}{key.value}"
            out[path] = key.start_mark.line + 1
            _key_lines(value, path + ".", out)
    return out


def _read(path: Path) -> tuple[dict, dict]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if isinstance(data, dict) and "config_hash" in data and "config" in data:
            data = data["config"]  # a manifest from an earlier run
        return data, {}
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: {problem}") from exc
    return ({} if data is None else data), lines


def _coerce(where: str, value, kind):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")


def _section(where, data, cls, base, lines, fname):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f.type for f in fields(cls)}
    updates = {}
    for key, value in data.items():
        loc = _loc(fname, lines, f"{where}.{key}")
        if key not in known:
            raise ConfigError(f"{loc}: unknown field (allowed: {', '.join(known)})")
        kind = int if key == "n_states" else float
        updates[key] = _coerce(loc, value, kind)
    try:
        return replace(base, **updates)
    except ParameterError as exc:
        # point at the offending key when the message names one
        named = [k for k in updates if k in str(exc)]
        key = f"{where}.{named[0]}" if named else where
        kind = SingularityError if isinstance(exc, SingularityError) else ConfigError
        raise kind(f"{_loc(fname, lines, key)}: {exc}") from exc


def _loc(fname: str, lines: dict, path: str) -> str:
    line = lines.get(path)
    return f"{fname}:{line}: {path}" if line else f"{fname}: {path}"


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a validated RunConfig from an optional file and flag overrides.

    ``overrides`` uses the same layout as the file; ``None`` values are ignored.
    """
    data, lines = ({}, {}) if path is None else _read(Path(path))
    fname = path or "<flags>"
    if not isinstance(data, dict):
        raise ConfigError(f"{fname}: top level must be a mapping")
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, dict):
            value = {k: v for k, v in value.items() if v is not None}
            if not value:
                continue
            merged.setdefault(key, {})
            if not isinstance(merged[key], dict):
                raise ConfigError(f"{fname}: {key}: expected a mapping")
            merged[key].update(value)
            for k in value:
                lines.pop(f"{key}.{k}", None)
        else:
            merged[key] = value
            lines.pop(key, None)
    cfg = RunConfig()
    updates: dict = {}
    for key, value in merged.items():
        loc = _loc(fname, lines, key)
        if key == "world":
            updates["world"] = _section("world", value, WorldParams, cfg.world, lines, fname)
        elif key == "user":
            updates["user"] = _section("user", value, UserParams, cfg.user, lines, fname)
        elif key == "profile":
            updates["profile"] = _profile(loc, value)
        elif key == "formats":
            updates["formats"] = _formats(loc, value)
        elif key in _SCALARS:
            if value is None and key in ("preset", "out"):
                continue
            updates[key] = _coerce(loc, value, _SCALARS[key])
        else:
            raise ConfigError(f"{loc}: unknown field")
    cfg = replace(cfg, **updates)
    _validate(cfg, fname, lines)
    return cfg


def _profile(loc: str, value):
    if value == "maximal":
        return "maximal"
    if not isinstance(value, dict):
        raise ConfigError(f"{loc}: expected 'maximal' or a mapping")
    extra = set(value) - _PROFILE_KEYS
    if extra:
        raise ConfigError(f"{loc}: unknown field(s) {sorted(extra)}")
    out = {}
    for k, v in value.items():
        if k == "maximal":
            if not isinstance(v, bool):
                raise ConfigError(f"{loc}.maximal: expected true or false")
            out[k] = v
        elif v is not None:
            out[k] = _coerce(f"{loc}.{k}", v, float)
    if out.get("maximal") and any(k.startswith("delta_") for k in out):
        raise ConfigError(f"{loc}: a maximal profile takes no explicit deltas")
    try:
        InterventionProfile(**{k: v for k, v in out.items() if k != "maximal"})
    except ParameterError as exc:
        raise ConfigError(f"{loc}: {exc}") from exc
    return out


def _formats(loc: str, value) -> tuple:
    items = [value] if isinstance(value, str) else value
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{loc}: expected a format name or a list of them")
    bad = [f for f in items if f not in FORMATS]
    if bad:
        raise ConfigError(f"{loc}: unknown format(s) {bad}; choose from {list(FORMATS)}")
    return tuple(dict.fromkeys(items))


def _validate(cfg: RunConfig, fname: str, lines: dict) -> None:
    def fail(key: str, msg: str):
        raise ConfigError(f"{_loc(fname, lines, key)}: {msg}")

    if cfg.preset is not None and cfg.preset not in PRESETS:
        fail("preset", f"unknown preset {cfg.preset!r} (choose from {', '.join(PRESETS)})")
    if not 0.0 <= cfg.gamma_app < 1.0:
        fail("gamma_app", "must lie in [0, 1)")
    if not 0 <= cfg.seed < 2**64:
        fail("seed", "must be a 64-bit unsigned integer")
    if cfg.resolution < 1000:
        fail("resolution", "must be at least 1000")
    for key in ("episodes", "horizon", "trials", "workers"):
        if getattr(cfg, key) < 1:
            fail(key, "must be at least 1")
    if not 1 <= cfg.start_w <= cfg.world.n_states - 1:
        fail("start_w", f"must be a progress state in 1..{cfg.world.n_states - 1}")
    try:
        theta = cfg.theta()
        cfg.make_profile(theta)
    except ParameterError as exc:
        fail("user", str(exc))
