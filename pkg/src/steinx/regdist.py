"""Regularized distance to the closure of a special Lipschitz domain.

A Whitney decomposition of the exterior part of a computational box is
built top-down from dyadic cubes.  Each retained cube Q carries a tensor
product polynomial bump b_Q supported in the concentric cube of twice the
side; phi_Q = b_Q / sum b is a partition of unity on the covered set, and

    Delta(x) = sum_Q diam(Q) * phi_Q(x).

Derivatives of the numerator and denominator are products of
one-dimensional polynomial derivatives; D^alpha Delta follows from the
Leibniz rule applied to Delta * sum b = sum diam(Q) b_Q.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DomainError, OutOfRangeError, SamplingError, UnsupportedOrderError
from .geometry import SpecialLipschitzDomain, as_points, split

BUMP_POWER = 6  # (1 - t^2)^6 is C^5 across the support edge
SUPPORT_SCALE = 2.0  # phi_Q lives on the cube of side 2*side(Q)
MAX_ORDER = 4


# ---------------------------------------------------------------------------
# Euclidean distance to the closure


def distance_to_closure(domain: SpecialLipschitzDomain, points, starts: int = 20, iters: int = 100) -> np.ndarray:
    """d(x, closure) for exterior points by projected gradient descent.

    Minimises |t - xbar|^2 + (psi(t) - y)^2 over |t - xbar| <= gap with
    several starts.  Values outside the sandwich
    gap / sqrt(1 + M^2) <= d <= gap fall back to the sandwich midpoint.
    Points in the closure get 0.
    """
    pts = as_points(points, domain.n)
    xbar, y = split(pts)
    gap = domain.graph(xbar) - y
    out = np.zeros(len(pts))
    ext = gap > 0
    if not ext.any():
        return out
    xb, yy, g = xbar[ext], y[ext], gap[ext]
    M = domain.M
    lower = g / math.sqrt(1.0 + M * M)
    if M == 0.0:
        out[ext] = g
        return out
    m = len(xb)
    dim = xb.shape[1]
    rng = np.random.default_rng(12345)
    if dim == 1:
        offs = np.linspace(-1.0, 1.0, starts)[:, None]
    else:
        offs = rng.uniform(-1.0, 1.0, size=(starts, dim)) / math.sqrt(dim)
    offs = np.vstack([np.zeros((1, dim)), offs])
    S = len(offs)
    t = (xb[:, None, :] + g[:, None, None] * offs[None, :, :]).reshape(m * S, dim)
    xr = np.repeat(xb, S, axis=0)
    yr = np.repeat(yy, S)
    gr = np.repeat(g, S)
    graph = domain.graph

    def objective(tt):
        return np.sum((tt - xr) ** 2, axis=1) + (graph(tt) - yr) ** 2

    def project(tt):
        v = tt - xr
        nv = np.linalg.norm(v, axis=1)
        scale = np.where(nv > gr, gr / np.where(nv > 0, nv, 1.0), 1.0)
        return xr + v * scale[:, None]

    F = objective(t)
    step = 0.5 / (1.0 + M * M) * np.ones(m * S)
    for _ in range(iters):
        grad = 2.0 * (t - xr) + 2.0 * (graph(t) - yr)[:, None] * graph.grad(t)
        trial = project(t - step[:, None] * grad)
        Ft = objective(trial)
        ok = Ft <= F
        t = np.where(ok[:, None], trial, t)
        F = np.where(ok, Ft, F)
        step = np.where(ok, step * 1.5, step * 0.5)
    d = np.sqrt(F.reshape(m, S).min(axis=1))
    bad = (d < lower * (1 - 1e-9)) | (d > g * (1 + 1e-9)) | ~np.isfinite(d)
    d[bad] = 0.5 * (lower[bad] + g[bad])
    out[ext] = np.minimum(d, g)
    return out


# ---------------------------------------------------------------------------
# Whitney decomposition


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    lo: np.ndarray
    hi: np.ndarray
    root_side: float
    max_depth: int
    levels: dict  # level -> (sorted keys, int index array, centers, cell distances)
    dims: dict  # level -> per-axis cell counts

    @property
    def n(self) -> int:
        return len(self.lo)

    def side(self, level: int) -> float:
        return self.root_side / 2**level

    @property
    def finest_side(self) -> float:
        used = [lv for lv, v in self.levels.items() if len(v[0])]
        return self.side(max(used)) if used else self.root_side

    def cells(self):
        """List of (center, side) pairs."""
        out = []
        for lv in sorted(self.levels):
            _, _, centers, _ = self.levels[lv]
            s = self.side(lv)
            out.extend((c, s) for c in centers)
        return out

    @property
    def cell_count(self) -> int:
        return sum(len(v[0]) for v in self.levels.values())

    def whitney_ratios(self) -> np.ndarray:
        """dist(Q, closure) / diam(Q) per cell (surrogate distance)."""
        r = []
        for lv in sorted(self.levels):
            _, _, _, dist = self.levels[lv]
            r.append(dist / (self.side(lv) * math.sqrt(self.n)))
        return np.concatenate(r) if r else np.zeros(0)

    def _keys(self, level: int, idx: np.ndarray) -> np.ndarray:
        dims = self.dims[level]
        key = np.zeros(len(idx), dtype=np.int64)
        for k in range(self.n):
            key = key * dims[k] + idx[:, k]
        return key

    def lookup(self, level: int, idx: np.ndarray) -> np.ndarray:
        """Row into the level's cell arrays for each index vector, or -1."""
        keys, _, _, _ = self.levels[level]
        dims = np.asarray(self.dims[level])
        valid = np.all((idx >= 0) & (idx < dims), axis=1)
        out = np.full(len(idx), -1, dtype=np.int64)
        if not len(keys) or not valid.any():
            return out
        q = self._keys(level, idx[valid])
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, len(keys) - 1)
        hit = keys[pos_c] == q
        sub = np.full(len(q), -1, dtype=np.int64)
        sub[hit] = pos_c[hit]
        out[valid] = sub
        return out

    def covered(self, points) -> np.ndarray:
        pts = as_points(points, self.n)
        res = np.zeros(len(pts), dtype=bool)
        for lv in self.levels:
            idx = np.floor((pts - self.lo) / self.side(lv)).astype(np.int64)
            res |= self.lookup(lv, idx) >= 0
        return res


def build_whitney(domain: SpecialLipschitzDomain, lo, hi, max_depth: int) -> WhitneyDecomposition:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = domain.n
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
        raise DomainError("box must be given as lo < hi with n coordinates each")
    if not 4 <= max_depth <= 16:
        raise DomainError("max_depth must lie in [4, 16]")
    widths = hi - lo
    root = float(widths.min())
    counts = widths / root
    if np.any(np.abs(counts - np.round(counts)) > 1e-9):
        raise DomainError("box side lengths must be integer multiples of the shortest side")
    counts = np.round(counts).astype(np.int64)
    idx = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=np.int64)
    M = domain.M
    levels: dict = {}
    dims: dict = {}
    for level in range(max_depth + 1):
        side = root / 2**level
        diam = side * math.sqrt(n)
        dims[level] = tuple(int(c) * 2**level for c in counts)
        if len(idx) == 0:
            levels[level] = (np.zeros(0, dtype=np.int64), np.zeros((0, n), dtype=np.int64),
                             np.zeros((0, n)), np.zeros(0))
            continue
        centers = lo + (idx + 0.5) * side
        gap = domain.gap(centers)
        d = distance_to_closure(domain, centers)
        dist = d - diam / 2
        ratio = dist / diam
        inside = (gap < 0) & (-gap > (1 + M) * diam / 2)  # cell lies in the open domain
        accept = (gap > 0) & (ratio >= 1.0) & (ratio <= 4.0)
        split_me = ~inside & ~accept & (ratio < 1.0) & (level < max_depth)
        acc_idx = idx[accept]
        tmp = WhitneyDecomposition(lo, hi, root, max_depth, {}, dims)
        keys = tmp._keys(level, acc_idx)
        order = np.argsort(keys)
        levels[level] = (keys[order], acc_idx[order], centers[accept][order], dist[accept][order])
        parents = idx[split_me]
        offsets = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
        idx = (2 * parents[:, None, :] + offsets[None, :, :]).reshape(-1, n)
    wd = WhitneyDecomposition(lo, hi, root, max_depth, levels, dims)
    if wd.cell_count == 0:
        raise DomainError("no exterior region: the box has no cells outside the closure")
    return wd


# ---------------------------------------------------------------------------
# bump profile


@lru_cache(maxsize=None)
def _bump_poly(order: int) -> np.ndarray:
    base = P.polypow([1.0, 0.0, -1.0], BUMP_POWER)
    return P.polyder(base, order) if order else base


def bump_1d(t: np.ndarray, order: int = 0) -> np.ndarray:
    """d^order/dt^order of (1 - t^2)^m on |t| < 1, zero outside."""
    val = P.polyval(t, _bump_poly(order))
    return np.where(np.abs(t) < 1.0, val, 0.0)


@dataclass(frozen=True, eq=False)
class RegularizedDistance:
    domain: SpecialLipschitzDomain
    decomposition: WhitneyDecomposition
    support_scale: float = SUPPORT_SCALE
    margin: float = field(init=False)
    min_gap: float = field(init=False)

    def __post_init__(self):
        fs = self.decomposition.finest_side
        object.__setattr__(self, "margin", 2.0 * fs)
        # the finest level is truncated, so stay two finest diameters off the closure
        object.__setattr__(self, "min_gap", 2.0 * fs * math.sqrt(self.n) * math.sqrt(1.0 + self.domain.M**2))

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def sample_box(self) -> tuple[np.ndarray, np.ndarray]:
        wd = self.decomposition
        return wd.lo + self.margin, wd.hi - self.margin

    def admissible(self, points) -> np.ndarray:
        pts = as_points(points, self.n)
        wd = self.decomposition
        in_box = np.all((pts >= wd.lo + self.margin) & (pts <= wd.hi - self.margin), axis=1)
        res = np.zeros(len(pts), dtype=bool)
        gap = self.domain.gap(pts)
        cand = in_box & (gap >= self.min_gap)
        if cand.any():
            res[cand] = wd.covered(pts[cand])
        return res

    def _check(self, pts: np.ndarray) -> None:
        if np.any(self.domain.gap(pts) <= 0):
            raise DomainError("point lies in the closure of the domain")
        if not np.all(self.admissible(pts)):
            raise OutOfRangeError("point is outside the region covered by the Whitney cells")

    def _raw(self, pts: np.ndarray, alphas) -> tuple[dict, dict]:
        """Derivatives of N = sum diam(Q) b_Q and S = sum b_Q for every
        multi-index below one of ``alphas``."""
        wd = self.decomposition
        n = self.n
        need = sorted({b for a in alphas for b in _below(a)}, key=lambda a: (sum(a), a))
        top = max(max(a) for a in need)
        N = {a: np.zeros(len(pts)) for a in need}
        S = {a: np.zeros(len(pts)) for a in need}
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int64)
        for lv in sorted(wd.levels):
            keys, _, centers, _ = wd.levels[lv]
            if not len(keys):
                continue
            side = wd.side(lv)
            half = self.support_scale * side / 2
            base = np.floor((pts - wd.lo) / side).astype(np.int64)
            diam = side * math.sqrt(n)
            for off in offsets:
                rows = wd.lookup(lv, base + off)
                hit = np.nonzero(rows >= 0)[0]
                if not len(hit):
                    continue
                t = (pts[hit] - centers[rows[hit]]) / half
                tab = [[bump_1d(t[:, k], o) / half**o for o in range(top + 1)] for k in range(n)]
                for a in need:
                    val = tab[0][a[0]]
                    for k in range(1, n):
                        val = val * tab[k][a[k]]
                    S[a][hit] += val
                    N[a][hit] += diam * val
        return N, S

    def derivatives(self, points, alphas, check: bool = True) -> dict:
        """D^alpha Delta for each requested multi-index, by the quotient rule
        applied to Delta * S = N."""
        alphas = [tuple(int(x) for x in a) for a in alphas]
        for a in alphas:
            if len(a) != self.n or min(a) < 0:
                raise DomainError("multi-index length must match the dimension")
            if sum(a) > MAX_ORDER:
                raise UnsupportedOrderError(f"derivative order {sum(a)} exceeds {MAX_ORDER}")
        pts = as_points(points, self.n)
        if check:
            self._check(pts)
        N, S = self._raw(pts, alphas)
        zero = (0,) * self.n
        if np.any(S[zero] <= 0):
            raise OutOfRangeError("point is outside the support of the Whitney bumps")
        out: dict = {}
        for a in sorted(N, key=lambda a: (sum(a), a)):
            acc = N[a].copy()
            for b in _below(a):
                if b != a:
                    acc -= _mcomb(a, b) * out[b] * S[tuple(x - y for x, y in zip(a, b))]
            out[a] = acc / S[zero]
        return {a: out[a] for a in alphas}

    def delta(self, points, check: bool = True) -> np.ndarray:
        zero = (0,) * self.n
        return self.derivatives(points, [zero], check)[zero]

    def derivative(self, points, alpha, check: bool = True) -> np.ndarray:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise DomainError("multi-index length must match the dimension")
        return self.derivatives(points, [alpha], check)[alpha]


def _below(a):
    return list(itertools.product(*[range(x + 1) for x in a]))


def _mcomb(a, b) -> int:
    out = 1
    for x, y in zip(a, b):
        out *= math.comb(x, y)
    return out


def build_regularized_distance(domain: SpecialLipschitzDomain, box, max_depth: int = 10) -> RegularizedDistance:
    lo, hi = box
    return RegularizedDistance(domain, build_whitney(domain, lo, hi, max_depth))


# ---------------------------------------------------------------------------
# alternative: fixed point of the mollified vertical distance


MOLLIFIER_ORDER = 48
FD_RELATIVE_STEP = 0.05


@lru_cache(maxsize=None)
def _mollifier_rule(m: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes z in the unit ball of R^m and weights w with sum w g(z) ~ int g eta
    for eta = c exp(-1/(1 - |z|^2))."""
    x, w = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    z = np.column_stack([g.ravel() for g in grids])
    wz = np.ones(len(z))
    for k, g in enumerate(np.meshgrid(*([w] * m), indexing="ij")):
        wz = wz * g.ravel()
    r2 = np.sum(z * z, axis=1)
    inside = r2 < 1.0
    z, wz, r2 = z[inside], wz[inside], r2[inside]
    eta = np.exp(-1.0 / (1.0 - r2))
    wz = wz * eta
    return z, wz / wz.sum()


@dataclass(frozen=True, eq=False)
class MollifiedDistance:
    """Delta solving Delta = Psi(xbar, kappa * Delta) - y, where Psi(., s) is
    psi mollified at scale s and kappa * M = 1/2.

    The map t -> Psi(xbar, kappa t) - y is a contraction with rate kappa*M, so
    Delta lies between gap / (1 + kappa M) and gap / (1 - kappa M).  Delta is
    smooth wherever the mollification scale is positive; derivatives are taken
    by central differences with steps proportional to the gap.  ``lo``/``hi``
    only bound the sampling region.
    """

    domain: SpecialLipschitzDomain
    lo: np.ndarray
    hi: np.ndarray
    order: int = MOLLIFIER_ORDER
    kappa: float = field(init=False)
    min_gap: float = field(init=False)

    def __post_init__(self):
        M = self.domain.M
        object.__setattr__(self, "kappa", 0.5 / M if M > 0 else 1.0)
        object.__setattr__(self, "min_gap", 1e-4 * float(np.max(self.hi - self.lo)))

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def contraction(self) -> float:
        return self.kappa * self.domain.M

    @property
    def c3_bound(self) -> float:
        return 1.0 + self.contraction

    @property
    def sample_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    def admissible(self, points) -> np.ndarray:
        return self.domain.gap(as_points(points, self.n)) > 0

    def _psi_mollified(self, xbar: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Psi(xbar, s) and its derivative in s."""
        z, w = _mollifier_rule(self.n - 1, self.order)
        m = self.n - 1
        pts = (xbar[:, None, :] - s[:, None, None] * z[None, :, :]).reshape(-1, m)
        vals = self.domain.graph(pts).reshape(len(xbar), len(z))
        grads = self.domain.graph.grad(pts).reshape(len(xbar), len(z), m)
        ds = -np.einsum("pqk,qk,q->p", grads, z, w)
        return vals @ w, ds

    def delta(self, points, check: bool = True) -> np.ndarray:
        pts = as_points(points, self.n)
        gap = self.domain.gap(pts)
        if check and np.any(gap <= 0):
            raise DomainError("point lies in the closure of the domain")
        xbar, y = split(pts)
        t = gap.copy()
        if self.domain.M == 0:
            return t
        # Newton on g(t) = Psi(xbar, kappa t) - y - t; g' lies in [-1 - kappa M, -1 + kappa M]
        todo = np.arange(len(t))
        for _ in range(60):
            val, ds = self._psi_mollified(xbar[todo], self.kappa * t[todo])
            g = val - y[todo] - t[todo]
            step = g / (1.0 - self.kappa * ds)
            t[todo] += step
            todo = todo[np.abs(step) > 4e-16 * np.abs(t[todo])]
            if not len(todo):
                break
        return t

    def derivatives(self, points, alphas, check: bool = True) -> dict:
        from .calculus import fd_weights

        alphas = [tuple(int(x) for x in a) for a in alphas]
        for a in alphas:
            if len(a) != self.n or min(a) < 0:
                raise DomainError("multi-index length must match the dimension")
            if sum(a) > MAX_ORDER:
                raise UnsupportedOrderError(f"derivative order {sum(a)} exceeds {MAX_ORDER}")
        pts = as_points(points, self.n)
        gap = self.domain.gap(pts)
        if check and np.any(gap <= 0):
            raise DomainError("point lies in the closure of the domain")
        step = FD_RELATIVE_STEP * gap / (1.0 + self.domain.M)
        out: dict = {}
        for a in alphas:
            if not any(a):
                out[a] = self.delta(pts, check=False)
                continue
            stencils = []
            for k, m in enumerate(a):
                if m == 0:
                    stencils.append([(0, 1.0)])
                    continue
                half = (m + 1) // 2 + 1
                nodes = np.arange(-half, half + 1)
                w = fd_weights(0.0, nodes, m)
                stencils.append([(int(o), float(c)) for o, c in zip(nodes, w) if c != 0.0])
            acc = np.zeros(len(pts))
            for combo in itertools.product(*stencils):
                off = np.array([o for o, _ in combo], dtype=float)
                coef = math.prod(c for _, c in combo)
                acc += coef * self.delta(pts + step[:, None] * off[None, :], check=False)
            out[a] = acc / step ** sum(a)
        return out

    def derivative(self, points, alpha, check: bool = True) -> np.ndarray:
        alpha = tuple(int(x) for x in alpha)
        return self.derivatives(points, [alpha], check)[alpha]


def build_mollified_distance(domain: SpecialLipschitzDomain, box, order: int = MOLLIFIER_ORDER) -> MollifiedDistance:
    lo, hi = box
    return MollifiedDistance(domain, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), order)


def _scalar_or_array(p, values):
    return float(values[0]) if np.ndim(p) == 1 else values


def eval_delta(rd: RegularizedDistance, p):
    return _scalar_or_array(p, rd.delta(p))


def eval_delta_derivative(rd: RegularizedDistance, p, alpha):
    return _scalar_or_array(p, rd.derivative(p, alpha))


# ---------------------------------------------------------------------------
# constants


def multi_indices(n: int, max_order: int):
    """All multi-indices of length n with |alpha| <= max_order, graded order."""
    out = []
    for order in range(max_order + 1):
        out.extend(a for a in itertools.product(range(order + 1), repeat=n) if sum(a) == order)
    return sorted(out, key=lambda a: (sum(a), tuple(-x for x in a)))


@dataclass(frozen=True)
class DistanceConstants:
    c1: float
    c2: float
    c3: float
    B: dict = field(hash=False)
    sample_count: int = 0

    def Balpha(self, alpha) -> float:
        return self.B[tuple(alpha)]

    def Border(self, order: int) -> float:
        return max(v for a, v in self.B.items() if sum(a) == order)


def sample_exterior(rd: RegularizedDistance, count: int, seed: int = 0, max_tries: int = 50) -> np.ndarray:
    """Admissible exterior probes: half uniform in the box, half graded toward
    the boundary with log-uniform vertical gaps."""
    rng = np.random.default_rng(seed)
    lo, hi = rd.sample_box
    got: list[np.ndarray] = []
    have = 0
    gmin = rd.min_gap
    gmax = float(np.max(hi - lo))
    for _ in range(max_tries):
        m = max(2 * (count - have), 256)
        uni = rng.uniform(lo, hi, size=(m // 2, rd.n))
        xb = rng.uniform(lo[:-1], hi[:-1], size=(m - m // 2, rd.n - 1))
        g = np.exp(rng.uniform(math.log(gmin), math.log(gmax), size=len(xb)))
        graded = np.column_stack([xb, rd.domain.graph(xb) - g])
        cand = np.vstack([uni, graded])
        cand = cand[rd.admissible(cand)]
        got.append(cand)
        have += len(cand)
        if have >= count:
            break
    pts = np.vstack(got) if got else np.zeros((0, rd.n))
    if len(pts) == 0:
        raise SamplingError("no admissible exterior sample points")
    return pts[:count]


def estimate_constants(rd: RegularizedDistance, domain: SpecialLipschitzDomain | None = None,
                       sample_count: int = 20000, seed: int = 0, inflate: float = 1.05,
                       max_order: int = MAX_ORDER) -> DistanceConstants:
    domain = domain or rd.domain
    if sample_count < 1000:
        raise SamplingError("sample_count must be at least 1000")
    pts = sample_exterior(rd, sample_count, seed)
    d = distance_to_closure(domain, pts)
    keep = d > 0
    pts, d = pts[keep], d[keep]
    if len(pts) == 0:
        raise SamplingError("all sample points were rejected")
    delta = rd.delta(pts, check=False)
    gap = domain.gap(pts)
    ratio = delta / d
    B = {}
    alphas = multi_indices(rd.n, max_order)
    ders = rd.derivatives(pts, alphas, check=False)
    for a in alphas:
        B[a] = inflate * float((np.abs(ders[a]) * d ** (sum(a) - 1)).max())
    return DistanceConstants(
        c1=float(ratio.min()) * (2.0 - inflate),
        c2=float(ratio.max()) * inflate,
        c3=float((gap / delta).max()) * inflate,
        B=B,
        sample_count=len(pts),
    )


def dump_cells_csv(rd: RegularizedDistance, path) -> None:
    rows = [np.concatenate([c, [s]]) for c, s in rd.decomposition.cells()]
    np.savetxt(path, np.array(rows), delimiter=",", fmt="%.17g")
