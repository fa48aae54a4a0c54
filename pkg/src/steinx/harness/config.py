"""Experiment configuration: INI-style ``key = value`` lines under sections.

List entries of the form ``name(k=v, k=v)`` are separated by ``;``; plain
numeric lists by ``,``.  Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from ..errors import ConfigError

_ENTRY = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class FamilySpec:
    """A family id with numeric parameters, e.g. ``sinusoid(A=0.5, k=1)``."""

    name: str
    params: tuple = ()

    def get(self, key: str, default: float) -> float:
        return dict(self.params).get(key, default)

    @property
    def ident(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.name}({inner})"


def parse_family(text: str) -> FamilySpec:
    m = _ENTRY.match(text)
    if not m:
        raise ConfigError(f"cannot parse family entry {text!r}")
    name, inner = m.group(1), m.group(2)
    params = []
    if inner and inner.strip():
        for part in inner.split(","):
            if "=" not in part:
                raise ConfigError(f"parameter {part.strip()!r} in {text!r} needs the form key=value")
            k, v = (s.strip() for s in part.split("=", 1))
            try:
                params.append((k, float(v)))
            except ValueError as exc:
                raise ConfigError(f"parameter {k!r} in {text!r} is not a number") from exc
    return FamilySpec(name, tuple(params))


def parse_families(text: str) -> tuple:
    return tuple(parse_family(t) for t in text.split(";") if t.strip())


def parse_floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from exc


def parse_table(text: str) -> tuple:
    """``r:phi`` pairs separated by commas."""
    pairs = []
    for part in text.split(","):
        if not part.strip():
            continue
        if ":" not in part:
            raise ConfigError(f"table entry {part.strip()!r} needs the form r:phi")
        a, b = part.split(":", 1)
        try:
            pairs.append((float(a), float(b)))
        except ValueError as exc:
            raise ConfigError(f"table entry {part.strip()!r} is not numeric") from exc
    return tuple(pairs)


DEFAULT_DOMAINS = "halfspace; smoothabs(M=1, s=0.5); sinusoid(A=0.5, k=1)"
DEFAULT_FUNCTIONS = ("gauss(cx=0.2, cy=0.3, sigma=0.5); gauss(cx=-0.5, cy=0.6, sigma=0.7); "
                     "sine(kx=2, ky=1); power(cx=0.1, cy=0.4, e=3.5, R=2, m=4)")


@dataclass(frozen=True)
class ExperimentConfig:
    domains: tuple = field(default_factory=lambda: parse_families(DEFAULT_DOMAINS))
    functions: tuple = field(default_factory=lambda: parse_families(DEFAULT_FUNCTIONS))
    box: tuple = (-1.5, -1.5, 1.5, 1.5)
    resolutions: tuple = (128, 256)
    band: float = 2.0
    accuracy: int = 4
    lambda_max: float = 2.0
    moments: int = 2
    p: tuple = (1.0, 2.0)
    gamma: tuple = (0.0, 0.5, 1.0, 2.0)
    phi_table: tuple = ()
    delta: tuple = (0.1, 1.0, 10.0)
    order: int = 2
    seed: int = 0
    method: str = "mollified"
    max_depth: int = 12
    samples: int = 20000

    def __post_init__(self):
        if self.moments < self.order:
            raise ConfigError("kernel moments K must be at least the derivative order l")
        if self.order < 0 or self.order > 4:
            raise ConfigError("derivative order must lie in 0..4")
        for r in self.resolutions:
            if r < 32 or r > 512 or (int(r) & (int(r) - 1)):
                raise ConfigError(f"resolution {r} must be a power of two in [32, 512]")
        if any(d <= 0 for d in self.delta):
            raise ConfigError("delta values must be positive")
        if not self.delta:
            raise ConfigError("at least one delta is required")
        if len(self.box) != 4 or self.box[2] <= self.box[0] or self.box[3] <= self.box[1]:
            raise ConfigError("box must be x_lo, y_lo, x_hi, y_hi with lo < hi")
        if abs((self.box[2] - self.box[0]) - (self.box[3] - self.box[1])) > 1e-12:
            raise ConfigError("box must be square")
        if self.method not in ("whitney", "mollified"):
            raise ConfigError("regdist method must be 'whitney' or 'mollified'")
        if self.accuracy not in (2, 4, 6):
            raise ConfigError("finite difference accuracy must be 2, 4 or 6")
        if self.band < 0:
            raise ConfigError("band must be nonnegative")
        if not self.gamma and not self.phi_table:
            raise ConfigError("at least one gamma or a phi table is required")


# section -> key -> (field name, parser)
_SCHEMA = {
    "domain": {"families": ("domains", parse_families)},
    "function": {"families": ("functions", parse_families)},
    "grid": {
        "box": ("box", parse_floats),
        "resolutions": ("resolutions", lambda s: tuple(int(v) for v in parse_floats(s))),
        "band": ("band", float),
        "accuracy": ("accuracy", int),
    },
    "kernel": {"lambda_max": ("lambda_max", float), "moments": ("moments", int)},
    "morrey": {
        "p": ("p", parse_floats),
        "gamma": ("gamma", parse_floats),
        "phi_table": ("phi_table", parse_table),
        "delta": ("delta", parse_floats),
    },
    "run": {"order": ("order", int), "seed": ("seed", int)},
    "regdist": {
        "method": ("method", str.strip),
        "max_depth": ("max_depth", int),
        "samples": ("samples", int),
    },
}


def config_from_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kwargs = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name, parse = _SCHEMA[section][key]
            try:
                kwargs[name] = parse(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r} in [{section}]: {raw!r}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return config_from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def config_to_text(cfg: ExperimentConfig) -> str:
    """Inverse of ``config_from_text`` (round trips every field)."""
    fl = lambda xs: ", ".join(f"{x:g}" for x in xs)  # noqa: E731
    lines = [
        "[domain]", "families = " + "; ".join(d.ident for d in cfg.domains), "",
        "[function]", "families = " + "; ".join(f.ident for f in cfg.functions), "",
        "[grid]", f"box = {fl(cfg.box)}", f"resolutions = {fl(cfg.resolutions)}",
        f"band = {cfg.band:g}", f"accuracy = {cfg.accuracy}", "",
        "[kernel]", f"lambda_max = {cfg.lambda_max:g}", f"moments = {cfg.moments}", "",
        "[morrey]", f"p = {fl(cfg.p)}", f"gamma = {fl(cfg.gamma)}",
    ]
    if cfg.phi_table:
        lines.append("phi_table = " + ", ".join(f"{r:g}:{v:g}" for r, v in cfg.phi_table))
    lines += [
        f"delta = {fl(cfg.delta)}", "",
        "[run]", f"order = {cfg.order}", f"seed = {cfg.seed}", "",
        "[regdist]", f"method = {cfg.method}", f"max_depth = {cfg.max_depth}", f"samples = {cfg.samples}", "",
    ]
    return "\n".join(lines)
