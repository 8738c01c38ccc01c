"""Plain-text ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__


class UsageError(ValueError):
    """Bad or missing configuration; the message carries the schema."""


@dataclass
class ExperimentConfig:
    """All knobs of a run. Lists are comma-separated in the file."""

    experiment: str = "exp1"
    N_list: tuple = (128,)
    generator: str = "uniform"
    jitter: float = 0.1
    box: float = 1.0
    cloud: str = ""
    seed: int = 0
    seeds: int = 1
    gravity: tuple = (0.0, 0.0, -1.0)
    r0: float = 0.05
    solver: str = "reflections"
    scheme: str = "rk4"
    dt: float = 0.0
    steps: int = 20
    T: float = 0.0
    stride: int = 1
    lambda_policy: str = "half_dmin_floor"
    lambda_value: float = 0.0
    Mbar: float = 64.0
    E: float = 8.0
    jo_constant: float = 16.0
    p_max: int = 30
    rho0_family: str = "bump"
    rho0_scale: float = 1.0
    m_per_axis: int = 18
    delta_factor: float = 1.0
    snapshots: int = 5
    out: str = ""
    exact_M: bool = False

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_TUPLE_TYPES = {"N_list": int, "gravity": float}
_CHOICES = {
    "experiment": ("exp1", "exp2", "exp3", "exp4", "selftest"),
    "generator": ("uniform", "lattice", "rho0", "file"),
    "solver": ("first-order", "reflections", "dense"),
    "scheme": ("euler", "rk2", "rk4"),
    "lambda_policy": ("fixed", "cube_root", "half_dmin_floor"),
    "rho0_family": ("gaussian", "bump", "uniform"),
}


def schema() -> str:
    """Human-readable schema listing every key, its type and default."""
    lines = ["# key = value (one per line, '#' starts a comment)"]
    for f in fields(ExperimentConfig):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kind = f"list of {_TUPLE_TYPES[f.name].__name__}" if f.name in _TUPLE_TYPES else type(default).__name__
        extra = f"  one of {', '.join(_CHOICES[f.name])}" if f.name in _CHOICES else ""
        shown = ",".join(str(v) for v in default) if isinstance(default, tuple) else default
        lines.append(f"{f.name} = {shown}    # {kind}{extra}")
    return "\n".join(lines)


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if name in _TUPLE_TYPES:
            return tuple(_TUPLE_TYPES[name](v) for v in raw.split(",") if v.strip())
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise UsageError(f"bad value for {name}: {raw!r}\n\n{schema()}") from exc


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines. An empty file is a usage error."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key = value\n\n{schema()}")
        k, v = (s.strip() for s in line.split("=", 1))
        entries[k] = v
    if not entries:
        raise UsageError(f"empty configuration\n\n{schema()}")
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    for k, v in entries.items():
        if k not in known:
            raise UsageError(f"unknown key {k!r}\n\n{schema()}")
        setattr(cfg, k, _convert(k, v, getattr(ExperimentConfig(), k)))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    for k, opts in _CHOICES.items():
        if getattr(cfg, k) not in opts:
            raise UsageError(f"{k} must be one of {opts}\n\n{schema()}")
    if len(cfg.gravity) != 3:
        raise UsageError("gravity needs three components")
    if not cfg.N_list or min(cfg.N_list) < 1:
        raise UsageError("N_list must hold positive integers")
    if cfg.r0 < 0 or cfg.seeds < 1 or cfg.stride < 1 or cfg.steps < 1:
        raise UsageError("r0 >= 0, seeds >= 1, stride >= 1 and steps >= 1 are required")
    if cfg.generator == "file":
        if not cfg.cloud or not Path(cfg.cloud).exists():
            raise UsageError(f"cloud file {cfg.cloud!r} does not exist")


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def report_header(cfg: ExperimentConfig) -> dict:
    return {"version": __version__, "config_hash": cfg.hash(), "config": cfg.to_dict()}
