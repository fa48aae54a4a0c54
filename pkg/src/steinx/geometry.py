"""Domains, rotations, patch coverings and ball covers.

Points are numpy arrays of shape (N, n); the last coordinate is the vertical
one, ``x = (xbar, y)``.  Graph families are vectorised over rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial.distance import pdist

from .errors import DimensionError, DomainError, SamplingError


def as_points(p, n: int | None = None) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    if n is not None and pts.shape[1] != n:
        raise DimensionError(f"expected points of dimension {n}, got {pts.shape[1]}")
    if pts.shape[1] < 2:
        raise DimensionError("points need n >= 2 coordinates")
    if not np.all(np.isfinite(pts)):
        raise DomainError("point coordinates must be finite")
    return pts


def split(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return points[:, :-1], points[:, -1]


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# ---------------------------------------------------------------------------
# graph families


@dataclass(frozen=True)
class Constant:
    value: float = 0.0
    lipschitz: float = 0.0

    def __call__(self, xbar):
        return np.full(len(xbar), self.value)

    def grad(self, xbar):
        return np.zeros_like(xbar)


@dataclass(frozen=True)
class SmoothAbs:
    """M * (sqrt(|xbar|^2 + s^2) - s): a smoothed cone of slope M."""

    M: float = 1.0
    smoothing: float = 0.1

    @property
    def lipschitz(self) -> float:
        return self.M

    def __call__(self, xbar):
        r2 = np.sum(xbar**2, axis=1)
        return self.M * (np.sqrt(r2 + self.smoothing**2) - self.smoothing)

    def grad(self, xbar):
        r2 = np.sum(xbar**2, axis=1, keepdims=True)
        return self.M * xbar / np.sqrt(r2 + self.smoothing**2)


@dataclass(frozen=True)
class Sinusoid:
    """amplitude * sin(frequency . xbar + phase)."""

    amplitude: float = 0.5
    frequency: tuple[float, ...] = (1.0,)
    phase: float = 0.0

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude) * float(np.linalg.norm(self.frequency))

    def __call__(self, xbar):
        return self.amplitude * np.sin(xbar @ np.asarray(self.frequency) + self.phase)

    def grad(self, xbar):
        k = np.asarray(self.frequency)
        return self.amplitude * np.cos(xbar @ k + self.phase)[:, None] * k[None, :]


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation of a table (n = 2 only); constant beyond the ends."""

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.knots) != len(self.values) or len(self.knots) < 2:
            raise DomainError("piecewise-linear table needs matching knots and values (>= 2)")
        if np.any(np.diff(self.knots) <= 0):
            raise DomainError("knots must be strictly increasing")

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))

    def __call__(self, xbar):
        if xbar.shape[1] != 1:
            raise DimensionError("piecewise-linear graphs are one-dimensional")
        return np.interp(xbar[:, 0], self.knots, self.values)

    def grad(self, xbar):
        x = xbar[:, 0]
        k = np.asarray(self.knots)
        slopes = np.diff(self.values) / np.diff(k)
        idx = np.clip(np.searchsorted(k, x, side="right") - 1, 0, len(slopes) - 1)
        g = slopes[idx]
        g[(x < k[0]) | (x > k[-1])] = 0.0
        return g[:, None]


@dataclass(frozen=True)
class Arc:
    """Lower circular arc -sqrt(rho^2 - |xbar|^2) + offset for |xbar| <= a,
    continued linearly (radially) beyond ``a`` so the graph stays Lipschitz."""

    radius: float = 1.0
    half_width: float = 0.9
    offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.half_width < self.radius:
            raise DomainError("arc half-width must lie in (0, radius)")

    @property
    def lipschitz(self) -> float:
        a = self.half_width
        return a / math.sqrt(self.radius**2 - a**2)

    def __call__(self, xbar):
        r = np.sqrt(np.sum(xbar**2, axis=1))
        a, rho = self.half_width, self.radius
        inner = -np.sqrt(np.maximum(rho**2 - np.minimum(r, a) ** 2, 0.0))
        return inner + self.lipschitz * np.maximum(r - a, 0.0) + self.offset

    def grad(self, xbar):
        r = np.sqrt(np.sum(xbar**2, axis=1, keepdims=True))
        rc = np.minimum(r, self.half_width)
        inner = xbar / np.sqrt(self.radius**2 - rc**2)
        outer = self.lipschitz * xbar / np.where(r > 0, r, 1.0)
        return np.where(r <= self.half_width, inner, outer)


@dataclass(frozen=True)
class LipschitzGraph:
    psi: object
    M: float
    n: int = 2
    check_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.M < 0:
            raise DomainError("Lipschitz bound must be nonnegative")
        if self.n < 2:
            raise DimensionError("n >= 2 required")
        rng = np.random.default_rng(self.seed)
        a = rng.uniform(-5, 5, size=(self.check_samples, self.n - 1))
        b = a + rng.normal(scale=rng.choice([1e-3, 0.1, 1.0, 3.0], size=(self.check_samples, 1)),
                           size=a.shape)
        lhs = np.abs(self.psi(a) - self.psi(b))
        rhs = self.M * np.linalg.norm(a - b, axis=1)
        if np.any(lhs > rhs * (1 + 1e-9) + 1e-12):
            raise DomainError(f"graph violates the Lipschitz bound M={self.M} on sampled pairs")

    def __call__(self, xbar):
        return self.psi(xbar)

    def grad(self, xbar):
        return self.psi.grad(xbar)


@dataclass(frozen=True)
class SpecialLipschitzDomain:
    """The open epigraph {y > psi(xbar)}."""

    graph: LipschitzGraph

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def M(self) -> float:
        return self.graph.M

    def gap(self, points) -> np.ndarray:
        """Vertical gap psi(xbar) - y (positive below the graph)."""
        pts = as_points(points, self.n)
        xbar, y = split(pts)
        return self.graph(xbar) - y

    def contains(self, points) -> np.ndarray:
        return self.gap(points) < 0.0

    def closure_contains(self, points) -> np.ndarray:
        return self.gap(points) <= 0.0


def contains(domain: SpecialLipschitzDomain, p) -> bool | np.ndarray:
    out = domain.contains(p)
    return bool(out[0]) if np.ndim(p) == 1 else out


def special_domain(psi, n: int = 2) -> SpecialLipschitzDomain:
    return SpecialLipschitzDomain(LipschitzGraph(psi, float(psi.lipschitz), n))


# ---------------------------------------------------------------------------
# rotations and balls


@dataclass(frozen=True)
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", R)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DimensionError("rotation matrix must be square")
        if np.max(np.abs(R.T @ R - np.eye(len(R)))) > 1e-12 or abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise DomainError("matrix is not a proper rotation")

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __eq__(self, other):
        return isinstance(other, Rotation) and np.array_equal(self.matrix, other.matrix)

    def apply(self, points):
        return as_points(points) @ self.matrix.T

    def inverse(self, points):
        return as_points(points) @ self.matrix

    @classmethod
    def identity(cls, n: int = 2) -> "Rotation":
        return cls(np.eye(n))

    @classmethod
    def planar(cls, theta: float) -> "Rotation":
        c, s = math.cos(theta), math.sin(theta)
        # exact entries for multiples of a quarter turn keep boxes axis aligned
        c, s = (round(c) if abs(c - round(c)) < 1e-15 else c), (round(s) if abs(s - round(s)) < 1e-15 else s)
        return cls(np.array([[c, -s], [s, c]]))


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")

    def contains(self, points, closed: bool = False) -> np.ndarray:
        d = np.linalg.norm(as_points(points) - self.center, axis=1)
        return d <= self.radius if closed else d < self.radius


# ---------------------------------------------------------------------------
# patches (finite unions of balls or axis-aligned boxes)


@dataclass(frozen=True)
class BoxPatch:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def bounds(self):
        return self.lo, self.hi

    def contains(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.all((pts > self.lo) & (pts < self.hi), axis=1)

    def contains_ball(self, centers, r: float) -> np.ndarray:
        c = as_points(centers)
        return np.all((c - r >= self.lo) & (c + r <= self.hi), axis=1)

    def intersects_ball(self, centers, r: float) -> np.ndarray:
        c = as_points(centers)
        nearest = np.clip(c, self.lo, self.hi)
        return np.linalg.norm(c - nearest, axis=1) < r

    def has_eps_ball(self, points, eps: float) -> np.ndarray:
        """Whether each point lies in some open eps-ball contained in the box."""
        pts = as_points(points)
        if np.any(self.hi - self.lo < 2 * eps):
            return np.zeros(len(pts), dtype=bool)
        c = np.clip(pts, self.lo + eps, self.hi - eps)
        return self.contains(pts) & (np.linalg.norm(pts - c, axis=1) < eps)


@dataclass(frozen=True, eq=False)
class BallUnionPatch:
    centers: np.ndarray
    radius: float
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        c = as_points(self.centers)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "_tree", cKDTree(c))

    def bounds(self):
        return self.centers.min(axis=0) - self.radius, self.centers.max(axis=0) + self.radius

    def nearest_center_distance(self, points) -> np.ndarray:
        return self._tree.query(as_points(points))[0]

    def contains(self, points) -> np.ndarray:
        return self.nearest_center_distance(points) < self.radius

    def contains_ball(self, centers, r: float) -> np.ndarray:
        # sufficient test: inside a single generating ball
        return self.nearest_center_distance(centers) + r <= self.radius

    def intersects_ball(self, centers, r: float) -> np.ndarray:
        return self.nearest_center_distance(centers) < self.radius + r

    def has_eps_ball(self, points, eps: float) -> np.ndarray:
        # a generating ball holds the point; any smaller ball inside it qualifies too
        return self.contains(points) & (eps <= self.radius * (1 + 1e-12))


@dataclass(frozen=True, eq=False)
class Patch:
    U: object
    rotation: Rotation
    domain: SpecialLipschitzDomain

    def local_contains(self, points) -> np.ndarray:
        """Membership in R(D)."""
        return self.domain.contains(self.rotation.inverse(points))


@dataclass(frozen=True)
class ValidationReport:
    lipschitz_ok: bool
    eps_ball_ok: bool
    multiplicity_ok: bool
    local_graph_ok: bool
    max_multiplicity: int
    uncovered_boundary: int
    mismatched_probes: int

    @property
    def ok(self) -> bool:
        return self.lipschitz_ok and self.eps_ball_ok and self.multiplicity_ok and self.local_graph_ok


@dataclass(frozen=True, eq=False)
class MinimallySmoothDomain:
    """A domain described by finitely many rotated special Lipschitz patches.

    ``membership`` decides x in Omega.  ``signed_distance`` (positive inside)
    and ``boundary_sampler(count, rng)`` are optional but needed for the
    partition of unity and the covering diagnostics.
    """

    patches: tuple[Patch, ...]
    eps: float
    N: int
    M: float
    membership: Callable[[np.ndarray], np.ndarray]
    signed_distance: Callable[[np.ndarray], np.ndarray] | None = None
    boundary_sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None
    n: int = 2

    def contains(self, points) -> np.ndarray:
        return np.asarray(self.membership(as_points(points, self.n)), dtype=bool)

    def sample_boundary(self, count: int, seed: int = 0) -> np.ndarray:
        if self.boundary_sampler is None:
            raise SamplingError("domain has no boundary sampler")
        return as_points(self.boundary_sampler(count, np.random.default_rng(seed)), self.n)

    def bounds(self, margin: float = 0.0):
        lo = np.min([p.U.bounds()[0] for p in self.patches], axis=0)
        hi = np.max([p.U.bounds()[1] for p in self.patches], axis=0)
        if self.boundary_sampler is not None:
            b = self.sample_boundary(2048)
            lo, hi = np.minimum(lo, b.min(axis=0)), np.maximum(hi, b.max(axis=0))
        return lo - margin, hi + margin

    def distance_to_boundary(self, points) -> np.ndarray:
        pts = as_points(points, self.n)
        if self.signed_distance is not None:
            return np.abs(self.signed_distance(pts))
        tree = _boundary_tree(self)
        return tree.query(pts)[0]

    def signed(self, points) -> np.ndarray:
        pts = as_points(points, self.n)
        if self.signed_distance is not None:
            return np.asarray(self.signed_distance(pts), dtype=float)
        d = self.distance_to_boundary(pts)
        return np.where(self.contains(pts), d, -d)

    def multiplicity(self, points) -> np.ndarray:
        pts = as_points(points, self.n)
        return np.sum([p.U.contains(pts) for p in self.patches], axis=0)

    def validate(self, boundary_sample, probes) -> ValidationReport:
        b = as_points(boundary_sample, self.n)
        q = as_points(probes, self.n)
        lip_ok = all(p.domain.M <= self.M * (1 + 1e-12) for p in self.patches)
        inside_some = np.zeros(len(b), dtype=bool)
        for p in self.patches:
            inside_some |= p.U.contains_ball(b, self.eps)
        mult = self.multiplicity(q)
        member = self.contains(q)
        mismatched = 0
        for p in self.patches:
            m = p.U.contains(q)
            if m.any():
                mismatched += int(np.sum(p.local_contains(q[m]) != member[m]))
        return ValidationReport(
            lip_ok,
            bool(inside_some.all()),
            bool(mult.max(initial=0) <= self.N),
            mismatched == 0,
            int(mult.max(initial=0)),
            int((~inside_some).sum()),
            mismatched,
        )


_TREES: dict[int, cKDTree] = {}


def _boundary_tree(msd: MinimallySmoothDomain) -> cKDTree:
    key = id(msd)
    if key not in _TREES:
        _TREES[key] = cKDTree(msd.sample_boundary(1 << 14))
    return _TREES[key]


def disk_domain(
    radius: float = 1.0,
    eps: float = 0.15,
    half_width: float = 0.9,
    depth_in: float = 0.75,
    depth_out: float = 0.45,
) -> MinimallySmoothDomain:
    """Planar disk with four axis-aligned box patches (bottom, right, top, left).

    The bottom patch sees the disk as the epigraph of a lower arc; the other
    three are quarter-turn rotations of it.
    """
    arc = Arc(radius, half_width)
    D = special_domain(arc)
    base = BoxPatch([-half_width, -radius - depth_out], [half_width, -radius + depth_in])
    patches = []
    for q in range(4):
        R = Rotation.planar(q * math.pi / 2)
        corners = R.apply(np.array([base.lo, base.hi]))
        patches.append(Patch(BoxPatch(corners.min(axis=0), corners.max(axis=0)), R, D))

    def membership(x):
        return np.sum(x**2, axis=1) < radius**2

    def signed_distance(x):
        return radius - np.sqrt(np.sum(x**2, axis=1))

    def sampler(count, rng):
        t = np.sort(rng.uniform(0, 2 * math.pi, count))
        return radius * np.column_stack([np.cos(t), np.sin(t)])

    return MinimallySmoothDomain(tuple(patches), eps, 2, D.M, membership, signed_distance, sampler, 2)


# ---------------------------------------------------------------------------
# covers


@dataclass(frozen=True)
class BallCover:
    balls: tuple[Ball, ...]

    @property
    def count(self) -> int:
        return len(self.balls)

    def covers(self, points) -> np.ndarray:
        pts = as_points(points)
        if not self.balls:
            return np.zeros(len(pts), dtype=bool)
        centers = np.array([b.center for b in self.balls])
        radii = np.array([b.radius for b in self.balls])
        d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
        return np.any(d <= radii[None, :], axis=1)


def lattice_bound(n: int, k: int) -> int:
    return (math.ceil(k * math.sqrt(n)) + 1) ** n


def point_set_diameter(points) -> float:
    pts = as_points(points)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 2000:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:  # degenerate (flat) sets: fall back to all pairs
            pass
    return float(pdist(pts).max())


def cover_by_balls(points, k: int) -> BallCover:
    """Cover a finite set by balls of radius D/k centred at points of the set.

    Lattice construction: cells of side D/(k sqrt n) over the bounding box,
    one ball per occupied cell centred at the first point in that cell, then
    a pass that drops balls whose points are all covered by other balls.
    The count never exceeds (ceil(k sqrt n) + 1)^n.  Coverage is closed
    (|x - c| <= r); same-cell points are strictly inside.
    """
    if k < 1:
        raise DomainError("k must be a positive integer")
    pts = as_points(points)
    n = pts.shape[1]
    D = point_set_diameter(pts)
    if D == 0.0:
        return BallCover((Ball(pts[0], 1.0),))
    radius = D / k
    spacing = D / (k * math.sqrt(n)) * (1 - 1e-12)
    cells = np.floor((pts - pts.min(axis=0)) / spacing).astype(np.int64)
    _, first = np.unique(cells, axis=0, return_index=True)
    centers = pts[np.sort(first)]
    d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
    inside = d <= radius
    counts = inside.sum(axis=1)
    keep = np.ones(len(centers), dtype=bool)
    for j in range(len(centers)):
        mine = inside[:, j]
        if np.all(counts[mine] >= 2):
            keep[j] = False
            counts[mine] -= 1
    return BallCover(tuple(Ball(c, radius) for c in centers[keep]))


# ---------------------------------------------------------------------------
# regular coverings and active patches


def regularize_covering(msd: MinimallySmoothDomain, boundary_sample=None, per_patch: int | None = None,
                        seed: int = 0) -> MinimallySmoothDomain:
    """Replace each patch by the union of eps-balls around sampled boundary
    points whose eps-ball fits in the patch; patches left empty are dropped."""
    if boundary_sample is None:
        count = (per_patch or 64 * msd.n) * len(msd.patches)
        boundary_sample = msd.sample_boundary(count, seed)
    b = as_points(boundary_sample, msd.n)
    if len(b) == 0:
        raise SamplingError("boundary sample is empty")
    new = []
    for p in msd.patches:
        ok = p.U.contains_ball(b, msd.eps)
        if ok.any():
            new.append(Patch(BallUnionPatch(b[ok], msd.eps), p.rotation, p.domain))
    if not new:
        raise SamplingError("no sampled boundary point yields a nonempty patch; sample the boundary more densely")
    return MinimallySmoothDomain(tuple(new), msd.eps, msd.N, msd.M, msd.membership,
                                 msd.signed_distance, msd.boundary_sampler, msd.n)


def active_indices(msd: MinimallySmoothDomain, b: Ball) -> list[int]:
    c = b.center[None, :]
    return [i for i, p in enumerate(msd.patches) if bool(p.U.intersects_ball(c, b.radius)[0])]


@dataclass(frozen=True)
class XiEstimate:
    volume: float
    stderr: float
    xi: float
    xi_upper: float
    samples: int


def xi_bound(msd: MinimallySmoothDomain, samples: int = 10**6, seed: int = 0, chunk: int = 1 << 18) -> XiEstimate:
    """Monte Carlo estimate of N |Omega^eps| / (eps^n omega_n), inflated by
    three standard errors in ``xi_upper``."""
    lo, hi = msd.bounds(margin=msd.eps)
    box_vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.uniform(lo, hi, size=(m, msd.n))
        hits += int(np.sum(msd.signed(x) > -msd.eps))
        done += m
    frac = hits / samples
    vol = box_vol * frac
    se = box_vol * math.sqrt(frac * (1 - frac) / samples)
    denom = msd.eps**msd.n * unit_ball_volume(msd.n)
    return XiEstimate(vol, se, msd.N * vol / denom, msd.N * (vol + 3 * se) / denom, samples)


def read_points_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_points_csv(path, points: Sequence) -> None:
    np.savetxt(path, np.atleast_2d(points), delimiter=",", fmt="%.17g")
