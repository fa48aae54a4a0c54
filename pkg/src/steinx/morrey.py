"""Generalized Morrey and Sobolev norms of grid fields, the Hardy-type
inequality checker and the s_k series.

Ball (or cube) integrals for every grid centre at once are FFT convolutions
of |f|^p with a stencil whose entries are the fraction of each pixel covered
by the ball, times the pixel volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, SamplingError
from .grid import GridField
from .quadrature import adaptive_gauss_legendre

RADIUS_COUNT = 24
SUPERSAMPLE = 16


@dataclass(frozen=True)
class PhiFunction:
    """phi(r) = r**gamma, or linear interpolation in a positive table."""

    kind: str = "power"
    gamma: float = 0.0
    table_r: tuple = ()
    table_phi: tuple = ()

    def __post_init__(self):
        if self.kind == "power":
            if self.gamma < 0:
                raise DomainError("gamma must be nonnegative")
        elif self.kind == "table":
            r, v = np.asarray(self.table_r, float), np.asarray(self.table_phi, float)
            if len(r) < 2 or len(r) != len(v) or np.any(np.diff(r) <= 0):
                raise DomainError("phi table needs >= 2 strictly increasing radii")
            if np.any(v <= 0) or np.any(np.diff(v) < 0):
                raise DomainError("phi table values must be positive and nondecreasing")
        else:
            raise DomainError(f"unknown phi kind {self.kind!r}")

    @property
    def ident(self) -> str:
        return f"r^{self.gamma:g}" if self.kind == "power" else "table"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return r**self.gamma
        return np.interp(r, self.table_r, self.table_phi)


def power(gamma: float) -> PhiFunction:
    return PhiFunction("power", float(gamma))


@dataclass(frozen=True)
class MorreySpec:
    p: float
    phi: PhiFunction
    delta: float

    def __post_init__(self):
        if not 1.0 <= self.p <= 16.0:
            raise DomainError("p must lie in [1, 16]")
        if not self.delta > 0:
            raise DomainError("delta must be positive")


@dataclass(frozen=True)
class NormEstimate:
    value: float
    center: tuple
    radius: float
    center_count: int
    radius_count: int
    refinement_delta: float = float("nan")
    mask_fraction: float = 0.0

    def csv_row(self) -> list:
        return [self.value, *self.center, self.radius, self.refinement_delta]


# ---------------------------------------------------------------------------
# stencils


def _ball_coverage(h: float, r: float, n: int) -> np.ndarray:
    m = int(math.ceil(r / h + 0.5))
    ax = np.arange(-m, m + 1) * h
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    near = np.zeros(mesh[0].shape)
    far = np.zeros(mesh[0].shape)
    for c in mesh:
        a = np.abs(c)
        near += np.maximum(a - h / 2, 0.0) ** 2
        far += (a + h / 2) ** 2
    cov = np.where(far <= r * r, 1.0, 0.0)
    edge = (far > r * r) & (near < r * r)
    if edge.any():
        sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
        sm = np.meshgrid(*([sub * h] * n), indexing="ij")
        sub_pts = np.column_stack([s.ravel() for s in sm])
        centers = np.column_stack([c[edge] for c in mesh])
        d2 = np.sum((centers[:, None, :] + sub_pts[None, :, :]) ** 2, axis=2)
        cov[edge] = np.mean(d2 < r * r, axis=1)
    return cov


def _cube_coverage(h: float, r: float, n: int) -> np.ndarray:
    m = int(math.ceil(r / h + 0.5))
    ax = np.arange(-m, m + 1) * h
    one = np.clip(np.minimum(ax + h / 2, r) - np.maximum(ax - h / 2, -r), 0.0, None) / h
    out = one
    for _ in range(n - 1):
        out = np.multiply.outer(out, one)
    return out


@lru_cache(maxsize=512)
def _stencil(h: float, r: float, kind: str, n: int) -> np.ndarray:
    cov = _ball_coverage(h, r, n) if kind == "ball" else _cube_coverage(h, r, n)
    cov = cov * h**n
    cov.setflags(write=False)
    return cov


def local_integrals(values: np.ndarray, h: float, radii, kind: str = "ball") -> np.ndarray:
    """Integral of ``values`` over B_r(x) (or the cube of half-side r) for
    every grid point x and every r; shape (len(radii),) + values.shape."""
    if kind not in ("ball", "cube"):
        raise DomainError("shape must be 'ball' or 'cube'")
    n = values.ndim
    radii = list(radii)
    rmax = max(radii)
    m = int(math.ceil(rmax / h + 0.5))
    padded = tuple(sfft.next_fast_len(s + 2 * m + 1, real=True) for s in values.shape)
    vf = sfft.rfftn(values, s=padded)
    out = np.empty((len(radii),) + values.shape)
    for i, r in enumerate(radii):
        st = _stencil(float(h), float(r), kind, n)
        kshape = st.shape
        full = sfft.irfftn(vf * sfft.rfftn(st, s=padded), s=padded)
        off = [(k - 1) // 2 for k in kshape]
        sl = tuple(slice(o, o + s) for o, s in zip(off, values.shape))
        out[i] = full[sl]
    return out


def default_radii(field: GridField, delta: float, count: int = RADIUS_COUNT) -> np.ndarray:
    half_width = float(np.min(field.hi - field.lo)) / 2
    R = min(delta, half_width) * (1 - 1e-9)
    if R <= field.h:
        raise SamplingError("delta is not larger than the grid spacing")
    return np.geomspace(field.h, R, count + 1)[1:]


def membership_mask(field: GridField, membership) -> np.ndarray:
    if membership is None:
        return np.ones(field.shape, dtype=bool)
    if isinstance(membership, np.ndarray):
        return membership.reshape(field.shape).astype(bool)
    return np.asarray(membership(field.points()), dtype=bool).reshape(field.shape)


def _norm_once(field, omega, spec, kind, centers, radii):
    integrand = np.where(omega & field.mask, np.abs(field.values) ** spec.p, 0.0)
    if isinstance(centers, str) and centers == "domain":
        cmask = omega & field.mask
    elif isinstance(centers, str) and centers == "all":
        cmask = field.mask
    else:
        cmask = np.asarray(centers, dtype=bool).reshape(field.shape)
    if not cmask.any():
        raise SamplingError("empty centre set")
    if not np.any(integrand):
        return 0.0, tuple(field.points()[np.argmax(cmask.ravel())]), float(radii[0]), int(cmask.sum())
    ints = np.clip(local_integrals(integrand, field.h, radii, kind), 0.0, None)
    best, top = _top_per_radius(ints, cmask)
    value, center, radius = _reduce(field, spec.p, spec.phi, radii, best, top)
    return value, center, radius, int(cmask.sum())


def _top_per_radius(ints: np.ndarray, cmask: np.ndarray):
    """Largest local integral over the centre set for every radius."""
    flat = np.where(cmask[None], ints, -np.inf).reshape(len(ints), -1)
    best = flat.argmax(axis=1)
    return best, flat[np.arange(len(ints)), best]


def _reduce(field: GridField, p: float, phi, radii, best, top):
    vals = (top / np.asarray(phi(np.asarray(radii)), dtype=float)) ** (1.0 / p)
    ri = int(np.argmax(vals))
    idx = np.unravel_index(int(best[ri]), field.shape)
    center = tuple(float(field.axes[k][idx[k]]) for k in range(field.n))
    return float(vals[ri]), center, float(radii[ri])


def morrey_norm(field: GridField, membership, spec: MorreySpec, shape: str = "ball",
                centers="domain", radii=None, refine: bool = True) -> NormEstimate:
    """sup over centres and radii r < delta of (phi(r)^-1 int_{S_r(x) cap Omega} |f|^p)^(1/p).

    ``membership`` is a vectorised predicate, a boolean array on the grid, or
    None for the whole box.  ``centers`` is "domain" (grid points in Omega),
    "all" or a boolean array.  With ``refine`` the estimate is repeated on
    every second sample and the relative change is reported."""
    omega = membership_mask(field, membership)
    rad = default_radii(field, spec.delta) if radii is None else np.asarray(radii, dtype=float)
    if np.any(rad <= 0) or np.any(rad >= spec.delta):
        raise DomainError("radii must lie in (0, delta)")
    value, center, radius, count = _norm_once(field, omega, spec, shape, centers, rad)
    mask_fraction = float(1.0 - field.mask.mean())
    ref = float("nan")
    if refine and min(field.shape) >= 16:
        coarse = field.subsample(2)
        com = omega[tuple(slice(0, None, 2) for _ in range(field.n))]
        cc = centers if isinstance(centers, str) else np.asarray(centers)[tuple(slice(0, None, 2) for _ in range(field.n))]
        crad = rad if radii is not None else default_radii(coarse, spec.delta)
        crad = crad[crad > coarse.h] if radii is not None else crad
        try:
            cv = _norm_once(coarse, com, spec, shape, cc, crad)[0]
            ref = abs(value - cv) / value if value > 0 else abs(cv)
        except SamplingError:
            ref = float("nan")
    return NormEstimate(value, center, radius, count, len(rad), ref, mask_fraction)


def morrey_sweep(field: GridField, membership, p: float, phis, deltas, shape: str = "ball",
                 centers="domain") -> dict:
    """Norms for every (phi index, delta) pair from one set of local
    integrals per radius lattice; values equal those of ``morrey_norm`` with
    ``refine=False``.  Returns {(i, delta): NormEstimate}."""
    omega = membership_mask(field, membership)
    integrand = np.where(omega & field.mask, np.abs(field.values) ** p, 0.0)
    if isinstance(centers, str) and centers == "domain":
        cmask = omega & field.mask
    elif isinstance(centers, str) and centers == "all":
        cmask = field.mask
    else:
        cmask = np.asarray(centers, dtype=bool).reshape(field.shape)
    if not cmask.any():
        raise SamplingError("empty centre set")
    mask_fraction = float(1.0 - field.mask.mean())
    lattices: dict = {}
    for d in deltas:
        MorreySpec(p, phis[0], d)  # validates p and delta
        rad = default_radii(field, d)
        lattices.setdefault(tuple(rad), []).append(d)
    pts_first = tuple(field.points()[np.argmax(cmask.ravel())])
    out = {}
    for rad, ds in lattices.items():
        rad = np.asarray(rad)
        if np.any(integrand):
            ints = np.clip(local_integrals(integrand, field.h, rad, shape), 0.0, None)
            best, top = _top_per_radius(ints, cmask)
        for i, phi in enumerate(phis):
            if not np.any(integrand):
                est = NormEstimate(0.0, pts_first, float(rad[0]), int(cmask.sum()), len(rad), float("nan"), mask_fraction)
            else:
                value, center, radius = _reduce(field, p, phi, rad, best, top)
                est = NormEstimate(value, center, radius, int(cmask.sum()), len(rad), float("nan"), mask_fraction)
            for d in ds:
                out[(i, d)] = est
    return out


def norm_equivalence_check(field: GridField, membership, spec: MorreySpec, centers="domain"):
    """(ball norm, cube norm, cube/ball); the ratio is 1 when both vanish."""
    ball = morrey_norm(field, membership, spec, "ball", centers, refine=False).value
    cube = morrey_norm(field, membership, spec, "cube", centers, refine=False).value
    if ball == 0.0:
        return ball, cube, 1.0 if cube == 0.0 else math.inf
    return ball, cube, cube / ball


def lp_norm(field: GridField, p: float, membership=None) -> float:
    omega = membership_mask(field, membership) & field.mask
    return float((np.sum(np.abs(field.values[omega]) ** p) * field.h**field.n) ** (1.0 / p))


def sobolev_norm(fields, p: float, membership=None) -> float:
    """Sum over the given derivative fields of their masked L^p norms."""
    fields = list(fields)
    if not fields:
        return 0.0
    ref = fields[0].mask
    for f in fields[1:]:
        if f.shape != ref.shape or not np.array_equal(f.mask, ref):
            raise DomainError("all derivative fields must share the box and mask")
    return float(sum(lp_norm(f, p, membership) for f in fields))


# ---------------------------------------------------------------------------
# Hardy-type inequality


def hardy_constant(a, b, c, d, beta, p) -> float:
    e = beta + 1.0 + 1.0 / p
    lo, hi = 1.0 + c / b, 1.0 + d / a
    if abs(e - 1.0) < 1e-14:
        return math.log(hi / lo)
    return (hi ** (1.0 - e) - lo ** (1.0 - e)) / (1.0 - e)


def hardy_check(a, b, c, d, beta, p, f: Callable, tol: float = 1e-10):
    """(lhs, rhs, C) of the Hardy-type inequality, all by adaptive quadrature."""
    for name, v in (("a", a), ("b", b), ("c", c), ("d", d)):
        if not v > 0:
            raise DomainError(f"{name} must be positive")
    if not a < b or not c < d:
        raise DomainError("need a < b and c < d")
    if not 1.0 <= p < math.inf:
        raise DomainError("p must lie in [1, inf)")
    e = beta + 1.0 + 1.0 / p
    C, _ = adaptive_gauss_legendre(lambda t: t ** (-e), 1.0 + c / b, 1.0 + d / a, tol=tol * 1e-2)

    def inner(x):
        # int_{x+c}^{x+d} f(y) dy for a vector of x, via u in [0, 1]
        val, _ = adaptive_gauss_legendre(
            lambda u: (d - c) * np.asarray(f(x[None, :] + c + u[:, None] * (d - c)), dtype=float),
            0.0, 1.0, tol=tol * 1e-2)
        return val

    lhs_p, _ = adaptive_gauss_legendre(lambda x: (x**beta * inner(x)) ** p, a, b, tol=tol)
    rhs_p, _ = adaptive_gauss_legendre(lambda x: (np.asarray(f(x), dtype=float) * x ** (beta + 1.0)) ** p,
                                       a + c, b + d, tol=tol)
    return float(lhs_p) ** (1.0 / p), float(C) * float(rhs_p) ** (1.0 / p), float(C)


# ---------------------------------------------------------------------------
# s_k series


def sk_value(k: int, alpha: float) -> float:
    return alpha * (alpha + 2.0) / (2.0 * ((k + 1) * alpha + 1.0) ** 2)


@dataclass(frozen=True)
class SeriesResult:
    partial: float
    tail: float
    total: float
    terms: int


def sk_series(alpha: float, tail_tol: float = 1e-12) -> SeriesResult:
    """Sum over k >= 0 of alpha / ((k+1) alpha + 1)^2.

    Terms k <= K0 are summed exactly; the rest is bounded above by the
    Euler-Maclaurin estimate  1/u + g/2 + alpha^2/(6 u^3)  (u = (K0+2) alpha + 1,
    g = alpha/u^2) plus the remainder bound alpha^2/(6 u^3) <= tail_tol."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    need_u = (alpha * alpha / (6.0 * tail_tol)) ** (1.0 / 3.0)
    m = max(int(math.ceil((need_u - 1.0) / alpha)) - 1, 1)  # first tail index
    k = np.arange(m)
    partial = math.fsum((alpha / ((k + 1) * alpha + 1.0) ** 2).tolist())
    u = (m + 1) * alpha + 1.0
    g = alpha / u**2
    dg = -2.0 * alpha**2 / u**3
    remainder = alpha**2 / (6.0 * u**3)
    tail = 1.0 / u + g / 2.0 - dg / 12.0 + remainder
    return SeriesResult(partial, tail, partial + tail, m)
