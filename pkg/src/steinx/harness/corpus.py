"""Domain and test-function families addressed by id in configs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..geometry import (
    Constant,
    MinimallySmoothDomain,
    Sinusoid,
    SmoothAbs,
    SpecialLipschitzDomain,
    as_points,
    disk_domain,
    special_domain,
)
from .config import FamilySpec

DOMAIN_KEYS = {
    "halfspace": ("level",),
    "smoothabs": ("M", "s"),
    "sinusoid": ("A", "k", "phase"),
    "disk": ("radius", "eps"),
}
FUNCTION_KEYS = {
    "gauss": ("cx", "cy", "sigma", "amp"),
    "sine": ("kx", "ky", "phase", "amp"),
    "power": ("cx", "cy", "e", "R", "m"),
    "const": ("c",),
    "coord": ("k",),
}


def _check_keys(spec: FamilySpec, table: dict, what: str) -> None:
    if spec.name not in table:
        raise ConfigError(f"unknown {what} family {spec.name!r}; known: {', '.join(sorted(table))}")
    extra = {k for k, _ in spec.params} - set(table[spec.name])
    if extra:
        raise ConfigError(f"unknown parameter(s) {sorted(extra)} for {what} family {spec.name!r}")


def build_domain(spec: FamilySpec) -> SpecialLipschitzDomain | MinimallySmoothDomain:
    _check_keys(spec, DOMAIN_KEYS, "domain")
    g = spec.get
    if spec.name == "halfspace":
        return special_domain(Constant(g("level", 0.0)))
    if spec.name == "smoothabs":
        return special_domain(SmoothAbs(g("M", 1.0), g("s", 0.5)))
    if spec.name == "sinusoid":
        return special_domain(Sinusoid(g("A", 0.5), (g("k", 1.0),), g("phase", 0.0)))
    return disk_domain(radius=g("radius", 1.0), eps=g("eps", 0.15))


def is_bounded(domain) -> bool:
    return isinstance(domain, MinimallySmoothDomain)


@dataclass(frozen=True)
class CorpusFunction:
    ident: str
    func: Callable

    def __call__(self, points) -> np.ndarray:
        return self.func(as_points(points, 2))


def build_function(spec: FamilySpec) -> CorpusFunction:
    _check_keys(spec, FUNCTION_KEYS, "function")
    g = spec.get
    if spec.name == "gauss":
        cx, cy, sigma, amp = g("cx", 0.0), g("cy", 0.5), g("sigma", 0.5), g("amp", 1.0)
        if sigma <= 0:
            raise ConfigError("gauss sigma must be positive")

        def f(q):
            r2 = (q[:, 0] - cx) ** 2 + (q[:, 1] - cy) ** 2
            return amp * np.exp(-r2 / (2 * sigma**2))
    elif spec.name == "sine":
        kx, ky, phase, amp = g("kx", 1.0), g("ky", 1.0), g("phase", 0.0), g("amp", 1.0)

        def f(q):
            return amp * np.sin(kx * q[:, 0] + ky * q[:, 1] + phase)
    elif spec.name == "power":
        cx, cy, e, R, m = g("cx", 0.0), g("cy", 0.5), g("e", 3.5), g("R", 2.0), g("m", 4.0)
        if e <= 0 or R <= 0 or m < 0:
            raise ConfigError("power needs e > 0, R > 0 and m >= 0")

        def f(q):
            r = np.hypot(q[:, 0] - cx, q[:, 1] - cy)
            # explicit cutoff so that m = 0 still truncates at R
            return np.where(r < R, r**e * np.clip(1.0 - (r / R) ** 2, 0.0, None) ** m, 0.0)
    elif spec.name == "const":
        c = g("c", 1.0)

        def f(q):
            return np.full(len(q), c)
    else:
        k = g("k", 2.0)
        if k not in (1.0, 2.0):
            raise ConfigError("coord index k must be 1 or 2")
        j = int(k) - 1

        def f(q):
            return q[:, j].astype(float)
    return CorpusFunction(spec.ident, f)


def boundary_distance(domain, points) -> np.ndarray:
    """Distance-like quantity used for the near-boundary exclusion band:
    |gap| / sqrt(1 + M^2) for graph domains (a lower bound of the distance),
    the distance to the boundary for patch domains."""
    pts = as_points(points, 2)
    if is_bounded(domain):
        return np.abs(domain.distance_to_boundary(pts))
    return np.abs(domain.gap(pts)) / math.sqrt(1.0 + domain.M**2)
