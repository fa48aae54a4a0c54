"""Extension operators on special Lipschitz and minimally smooth domains.

Below the graph, Tf(x) = int_1^lam_max f(xbar, y + lam * dstar(x)) tau(lam) dlam
with dstar = 2 c3 Delta.  Above it Tf = f.  Patches of a minimally smooth
domain are glued with smooth partition functions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DomainError, OutOfRangeError
from .geometry import (
    BallUnionPatch,
    MinimallySmoothDomain,
    Rotation,
    SpecialLipschitzDomain,
    as_points,
    split,
)
from .kernel import MomentKernel, build_kernel
from .regdist import (
    DistanceConstants,
    MollifiedDistance,
    RegularizedDistance,
    build_mollified_distance,
    build_regularized_distance,
    estimate_constants,
)

QUAD_TOL = 1e-10
START_PANELS = 4
MAX_PANELS = 512


@dataclass(frozen=True, eq=False)
class ExtensionContext:
    domain: SpecialLipschitzDomain
    rd: RegularizedDistance | MollifiedDistance
    constants: DistanceConstants
    kernel: MomentKernel

    def __post_init__(self):
        if self.rd.domain is not self.domain:
            raise DomainError("regularized distance was built for a different domain")


def build_context(domain: SpecialLipschitzDomain, box, kernel: MomentKernel | None = None,
                  max_depth: int = 12, sample_count: int = 20000, seed: int = 0,
                  method: str = "whitney") -> ExtensionContext:
    """``method`` selects the regularized distance: the Whitney cube sum or the
    fixed point of the mollified vertical distance."""
    if method == "whitney":
        rd = build_regularized_distance(domain, box, max_depth)
        consts = estimate_constants(rd, domain, sample_count, seed)
    elif method == "mollified":
        rd = build_mollified_distance(domain, box)
        consts = estimate_constants(rd, domain, sample_count, seed, max_order=2)
    else:
        raise DomainError(f"unknown regularized distance method {method!r}")
    return ExtensionContext(domain, rd, consts, kernel or build_kernel(10.0, 3))


def delta_star(ctx: ExtensionContext, p):
    pts = as_points(p, ctx.domain.n)
    out = 2.0 * ctx.constants.c3 * ctx.rd.delta(pts)
    return float(out[0]) if np.ndim(p) == 1 else out


def _reflect_average(f, xbar, y, ds, kernel: MomentKernel, tol: float):
    """Composite Gauss-Legendre with panel doubling until successive values
    agree to ``tol`` at every point."""
    n = xbar.shape[1] + 1
    out = np.full(len(y), np.nan)
    todo = np.arange(len(y))
    prev = None
    panels = START_PANELS
    while len(todo):
        lam, w = kernel.rule(panels)
        yy = y[todo, None] + lam[None, :] * ds[todo, None]
        pts = np.empty((len(todo) * len(lam), n))
        pts[:, :-1] = np.repeat(xbar[todo], len(lam), axis=0)
        pts[:, -1] = yy.ravel()
        vals = np.asarray(f(pts), dtype=float).reshape(len(todo), len(lam)) @ w
        if prev is not None:
            done = np.abs(vals - prev) <= tol
            out[todo[done]] = vals[done]
            todo, vals = todo[~done], vals[~done]
        if panels >= MAX_PANELS:
            out[todo] = vals
            break
        prev = vals
        panels *= 2
    return out


def extend_special(ctx: ExtensionContext, f, p, tol: float = QUAD_TOL, unsupported: str = "raise"):
    """Tf at points p; ``unsupported='nan'`` returns NaN where Delta is not
    available (too close to the boundary or outside the Whitney box)."""
    pts = as_points(p, ctx.domain.n)
    xbar, y = split(pts)
    psi = ctx.domain.graph(xbar)
    out = np.empty(len(pts))
    inside = y >= psi
    if inside.any():
        out[inside] = np.asarray(f(pts[inside]), dtype=float)
    ext = ~inside
    if ext.any():
        ok = ctx.rd.admissible(pts[ext])
        if not ok.all() and unsupported == "raise":
            raise OutOfRangeError("point outside the region where the regularized distance is available")
        idx = np.nonzero(ext)[0]
        out[idx[~ok]] = np.nan
        good = idx[ok]
        if len(good):
            ds = 2.0 * ctx.constants.c3 * ctx.rd.delta(pts[good], check=False)
            if np.any(y[good] + ds <= psi[good]):
                raise ConsistencyError("reflection reach does not clear the graph; dstar sandwich violated")
            out[good] = _reflect_average(f, xbar[good], y[good], ds, ctx.kernel, tol)
    return float(out[0]) if np.ndim(p) == 1 else out


def extend_rotated(ctx: ExtensionContext, R: Rotation, f, p, tol: float = QUAD_TOL, unsupported: str = "raise"):
    """(T_D (f o R)) o R^-1."""
    pts = as_points(p, ctx.domain.n)

    def pulled(q):
        return f(R.apply(q))

    out = extend_special(ctx, pulled, R.inverse(pts), tol, unsupported)
    return float(np.atleast_1d(out)[0]) if np.ndim(p) == 1 else out


# ---------------------------------------------------------------------------
# partition of unity


def smoothstep(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    msd: MinimallySmoothDomain
    order: int
    bounds: dict = field(default_factory=dict)

    @property
    def eps(self) -> float:
        return self.msd.eps

    def depth(self, i: int, points) -> np.ndarray:
        patch = self.msd.patches[i].U
        return patch.radius - patch.nearest_center_distance(points)

    def lam(self, i: int, points) -> np.ndarray:
        # zero off {depth > eps/8}, one where depth >= eps/4
        e = self.eps
        return smoothstep((self.depth(i, points) - e / 8) / (e / 8))

    def lambdas(self, points) -> np.ndarray:
        pts = as_points(points, self.msd.n)
        return np.array([self.lam(i, pts) for i in range(len(self.msd.patches))])

    def minus(self, points) -> np.ndarray:
        s = self.msd.signed(points)
        e = self.eps
        return smoothstep((s - e / 4) / (e / 2))

    def plus(self, points) -> np.ndarray:
        s = self.msd.signed(points)
        e = self.eps
        return (1.0 - smoothstep((s - e / 4) / (e / 2))) * smoothstep((s + e / 2) / (e / 4))


def _fd_bound(func, pts, alpha, h):
    from .calculus import fd_derivative

    return float(np.max(np.abs(fd_derivative(func, alpha, pts, h))))


def build_partition(msd: MinimallySmoothDomain, order: int = 2, samples: int = 2000, seed: int = 0) -> PartitionOfUnity:
    if not msd.patches or not all(isinstance(p.U, BallUnionPatch) for p in msd.patches):
        raise DomainError("partition needs a regularized covering (ball-union patches)")
    for p in msd.patches:
        if p.U.radius < msd.eps * (1 - 1e-12):
            raise DomainError("patch too thin for the eps/2 erosion")
    pou = PartitionOfUnity(msd, order)
    rng = np.random.default_rng(seed)
    lo, hi = msd.bounds(margin=msd.eps)
    pts = rng.uniform(lo, hi, size=(samples, msd.n))
    h = msd.eps / 64
    table = {}
    alphas = [a for k in range(1, order + 1) for a in itertools.product(range(k + 1), repeat=msd.n) if sum(a) == k]
    for a in alphas:
        vals = [_fd_bound(lambda q, i=i: pou.lam(i, q), pts, a, h) for i in range(len(msd.patches))]
        table[("lambda",) + a] = max(vals)
        table[("plus",) + a] = _fd_bound(pou.plus, pts, a, h)
        table[("minus",) + a] = _fd_bound(pou.minus, pts, a, h)
    pou.bounds.update(table)
    return pou


@dataclass(frozen=True)
class PartitionReport:
    sum_ok: bool
    range_ok: bool
    minus_support_ok: bool
    plus_support_ok: bool
    cover_ok: bool
    erosion_ok: bool
    lambda_support_ok: bool
    max_sum_error: float
    min_square_sum: float

    @property
    def ok(self) -> bool:
        return all((self.sum_ok, self.range_ok, self.minus_support_ok, self.plus_support_ok,
                    self.cover_ok, self.erosion_ok, self.lambda_support_ok))


def check_partition(pou: PartitionOfUnity, samples: int = 10000, seed: int = 0) -> PartitionReport:
    """Sampled check of the partition invariants.  Points concentrate near
    the boundary where the conditions are non-trivial."""
    msd = pou.msd
    rng = np.random.default_rng(seed)
    lo, hi = msd.bounds(margin=msd.eps)
    uni = rng.uniform(lo, hi, size=(samples // 2, msd.n))
    b = msd.sample_boundary(samples - samples // 2, seed=seed + 1)
    near = b + rng.normal(scale=msd.eps / 2, size=b.shape)
    pts = np.vstack([uni, near])
    s = msd.signed(pts)
    inside = s > 0
    closure = s >= 0
    P, Mn = pou.plus(pts), pou.minus(pts)
    L = pou.lambdas(pts)
    err = np.abs(P + Mn - 1.0)[closure]
    max_err = float(err.max(initial=0.0))
    range_ok = bool(np.all(np.abs(P) <= 1) and np.all(np.abs(Mn) <= 1) and np.all(np.abs(L) <= 1))
    minus_ok = bool(np.all(Mn[~inside] == 0.0))
    d = np.abs(s)
    plus_ok = bool(np.all(P[(inside & (d > msd.eps)) | (~inside & (d > msd.eps / 2))] == 0.0))
    ext_plus = (~closure) & (P > 0)
    sq = np.sum(L**2, axis=0)
    min_sq = float(sq[ext_plus].min(initial=math.inf))
    cover_ok = bool(np.all(sq[ext_plus] >= 1.0 - 1e-12))
    # erosion: points whose eps/2-ball (sampled on its sphere) stays in the patch
    ang = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    ring = np.column_stack([np.cos(ang), np.sin(ang)]) if msd.n == 2 else rng.normal(size=(256, msd.n))
    ring = ring / np.linalg.norm(ring, axis=1, keepdims=True)
    erosion_ok = True
    support_ok = True
    for i, patch in enumerate(msd.patches):
        U = patch.U
        inU = U.contains(pts)
        support_ok &= bool(np.all(L[i][~inU] == 0.0))
        cand = pts[inU]
        if len(cand):
            probe = (cand[:, None, :] + msd.eps / 2 * ring[None, :, :]).reshape(-1, msd.n)
            eroded = U.contains(probe).reshape(len(cand), -1).all(axis=1)
            erosion_ok &= bool(np.all(L[i][inU][eroded] == 1.0))
    return PartitionReport(max_err <= 1e-10, range_ok, minus_ok, plus_ok, cover_ok, erosion_ok, support_ok,
                           max_err, min_sq)


# ---------------------------------------------------------------------------
# general operator


def build_patch_contexts(msd: MinimallySmoothDomain, kernel: MomentKernel, max_depth: int = 11,
                         sample_count: int = 20000, seed: int = 0, pad: float = 0.3,
                         method: str = "whitney") -> list:
    """One extension context per patch, built in the patch's own frame over a
    square box containing the rotated-back patch with padding."""
    cache: dict = {}
    contexts = []
    for patch in msd.patches:
        U = patch.U
        corners = np.array(list(itertools.product(*zip(*U.bounds()))))
        local = patch.rotation.inverse(corners)
        # snap outward to a 1/8 lattice so congruent patches share one context
        lo = np.floor((local.min(axis=0) - pad) * 8) / 8
        hi = np.ceil((local.max(axis=0) + pad) * 8) / 8
        side = float(np.max(hi - lo))
        mid = (lo + hi) / 2
        box = (mid - side / 2, mid + side / 2)
        key = (id(patch.domain), tuple(box[0]), tuple(box[1]))
        if key not in cache:
            cache[key] = build_context(patch.domain, box, kernel, max_depth, sample_count, seed, method)
        contexts.append(cache[key])
    return contexts


def extend_general(msd: MinimallySmoothDomain, pou: PartitionOfUnity, contexts, f, p,
                   tol: float = QUAD_TOL, unsupported: str = "raise"):
    pts = as_points(p, msd.n)
    out = np.zeros(len(pts))
    Pl = pou.plus(pts)
    Mn = pou.minus(pts)
    inside = msd.contains(pts)
    use_f = Mn != 0
    if use_f.any():
        out[use_f] += Mn[use_f] * np.asarray(f(pts[use_f]), dtype=float)
    act = np.nonzero(Pl != 0)[0]
    if not len(act):
        return float(out[0]) if np.ndim(p) == 1 else out
    q = pts[act]
    L = pou.lambdas(q)
    sq = np.sum(L**2, axis=0)
    if np.any(sq[~inside[act]] < 1.0 - 1e-12):
        raise ConsistencyError("sum of squared partition functions drops below 1 outside the domain")
    if np.any(sq == 0):
        raise ConsistencyError("no partition function is active where the boundary cutoff is nonzero")
    num = np.zeros(len(q))
    tiny = 1e-9
    for i, patch in enumerate(msd.patches):
        # active patches: the tiny ball at the point meets U_i, and lambda_i is nonzero
        sel = np.nonzero((L[i] != 0) & patch.U.intersects_ball(q, tiny))[0]
        if not len(sel):
            continue

        def g(x, i=i):
            lam = pou.lam(i, x)
            val = np.zeros(len(x))
            nz = lam != 0
            if nz.any():
                val[nz] = lam[nz] * np.asarray(f(x[nz]), dtype=float)
            return val

        Ti = extend_rotated(contexts[i], patch.rotation, g, q[sel], tol, unsupported)
        num[sel] += L[i][sel] * np.atleast_1d(Ti)
    out[act] += Pl[act] * num / sq
    return float(out[0]) if np.ndim(p) == 1 else out
