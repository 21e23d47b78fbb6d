"""Run configuration: flat key=value files, flag overrides, JSON manifests."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import InvalidParameter
from .model import KERNEL_SHAPES, ModelParams

COMMANDS = ("speed", "stationary", "simulate", "converge")
EXPERIMENTS = ("speed", "stationary", "solution", "spreading")


class ConfigError(InvalidParameter):
    """Malformed or invalid configuration (a usage error)."""


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _optional_floats(text):
    if text is None or (isinstance(text, str) and text.strip().lower() in ("", "none", "default")):
        return None
    return _floats(text)


def _optional_float(text):
    if text is None or (isinstance(text, str) and text.strip().lower() in ("", "none", "auto")):
        return None
    return float(text)


@dataclass(frozen=True)
class RunConfig:
    """Merged configuration. ``None`` means the experiment's own default."""

    command: str = "speed"
    # physics
    D: float = 5.0
    d: float = 1.0
    mu_bar: float = 1.0
    nu_bar: float = 1.0
    f_prime0: float = 1.0
    kernel: str = "cos2"
    independent: bool = False
    # dispersion
    mode: str = "local"
    eps: float = 0.1
    L: float = math.inf
    delta: float = 0.0
    dump_curves: bool = False
    curve_samples: int = 200
    # stationary
    eps_list: tuple | None = None
    Y: float = 20.0
    N: int = 1001
    dump_profile: bool = False
    # simulation
    model: str = "local"
    T: float | None = None
    dt: float | None = None
    grid: tuple | None = None
    refine: bool = True
    datum: str = "bump"
    datum_amp: float = 0.5
    datum_radius: float = 5.0
    snapshot_every: float | None = None
    # converge
    experiment: str = "speed"
    t_sample: float = 1.0
    probes: tuple | None = None
    # driver
    out_dir: str = "out"
    threads: int = 1

    def params(self) -> ModelParams:
        return ModelParams(self.D, self.d, self.mu_bar, self.nu_bar, self.f_prime0)

    def validate(self) -> "RunConfig":
        try:
            self.params()
        except InvalidParameter as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.command in COMMANDS, f"command must be one of {', '.join(COMMANDS)}"),
            (self.kernel in KERNEL_SHAPES, f"kernel must be one of {', '.join(KERNEL_SHAPES)}"),
            (self.mode in ("local", "nonlocal", "truncated"), "mode must be local, nonlocal or truncated"),
            (self.model in ("local", "nonlocal"), "model must be local or nonlocal"),
            (self.experiment in EXPERIMENTS, f"experiment must be one of {', '.join(EXPERIMENTS)}"),
            (self.datum in ("bump", "road", "field"), "datum must be bump, road or field"),
            (self.eps > 0, "eps must be > 0"),
            (self.L > 0, "L must be > 0"),
            (self.delta >= 0, "delta must be >= 0"),
            (self.T is None or self.T >= 0, "T must be >= 0"),
            (self.dt is None or self.dt > 0, "dt must be > 0"),
            (self.Y >= 10, "Y must be >= 10"),
            (self.N >= 3, "N must be >= 3"),
            (self.curve_samples >= 2, "curve_samples must be >= 2"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.grid is None or (len(self.grid) == 4 and all(g > 0 for g in self.grid)),
             "grid must be four positive numbers Lx,Ly,dx,dy"),
            (self.eps_list is None or all(e > 0 for e in self.eps_list), "eps_list entries must be > 0"),
            (self.snapshot_every is None or self.snapshot_every > 0, "snapshot_every must be > 0"),
            (self.t_sample >= 0.1, "t_sample must be >= 0.1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def to_manifest(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


_CONVERT = {
    "command": str, "kernel": str, "mode": str, "model": str, "experiment": str,
    "datum": str, "out_dir": str,
    "independent": _bool, "dump_curves": _bool, "dump_profile": _bool, "refine": _bool,
    "curve_samples": int, "N": int, "threads": int,
    "eps_list": _optional_floats, "grid": _optional_floats, "probes": _optional_floats,
    "dt": _optional_float, "T": _optional_float, "snapshot_every": _optional_float,
}
KEYS = tuple(f.name for f in fields(RunConfig))


def convert(key: str, value):
    """Convert a raw value for ``key``; unknown keys and bad values raise ConfigError."""
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    conv = _CONVERT.get(key, float)
    try:
        out = conv(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    if conv is float and isinstance(value, bool):
        raise ConfigError(f"bad value for {key}: {value!r}")
    return out


def read_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = convert(key, value)
    return out


def load_file(path) -> dict:
    """Key=value file, or a JSON manifest written by a previous run."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad manifest {path}: {exc}") from None
        raw = data.get("config", data)
        return {k: convert(k, v) for k, v in raw.items()}
    return read_key_values(text)


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (flag values)."""
    values = load_file(path) if path else {}
    for key, value in (overrides or {}).items():
        values[key] = convert(key, value)
    return replace(RunConfig(), **values).validate()
