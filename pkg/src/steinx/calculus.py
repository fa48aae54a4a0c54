"""Chain-term enumeration, finite differences and the cone mollifier.

Chain terms expand D^alpha of g(x) = f(xbar, y + lam*h(x)) as a finite sum
of c * lam^s * D^beta f(xbar, y + lam*h(x)) * prod (D^gamma h(x))^m.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy

from .errors import DomainError, OutOfRangeError, UnsupportedOrderError
from .geometry import as_points
from .grid import GridField
from .quadrature import composite_rule

MAX_CHAIN_ORDER = 4


# ---------------------------------------------------------------------------
# chain terms


@dataclass(frozen=True, order=True)
class ChainTerm:
    s: int
    beta: tuple
    factors: tuple  # sorted ((gamma, multiplicity), ...)
    c: Fraction

    def order_gap(self) -> int:
        return sum(m * (sum(g) - 1) for g, m in self.factors)

    def check(self, alpha) -> None:
        if self.order_gap() != sum(alpha) - sum(self.beta):
            raise AssertionError(f"order invariant fails for {self}")
        if (self.s == 0) != (len(self.factors) == 0):
            raise AssertionError(f"lambda power invariant fails for {self}")

    def as_row(self) -> tuple:
        fac = ";".join(f"{'.'.join(map(str, g))}^{m}" for g, m in self.factors)
        return (str(self.c), self.s, ".".join(map(str, self.beta)), fac)


def _add_factor(factors: tuple, gamma: tuple, k: int = 1) -> tuple:
    d = dict(factors)
    d[gamma] = d.get(gamma, 0) + k
    return tuple(sorted((g, m) for g, m in d.items() if m > 0))


def _inc(t: tuple, i: int) -> tuple:
    return tuple(v + (j == i) for j, v in enumerate(t))


@lru_cache(maxsize=None)
def enumerate_chain_terms(alpha: tuple) -> tuple:
    alpha = tuple(int(a) for a in alpha)
    if min(alpha, default=0) < 0 or len(alpha) < 2:
        raise DomainError("alpha must be a multi-index of length n >= 2")
    if sum(alpha) > MAX_CHAIN_ORDER:
        raise UnsupportedOrderError(f"|alpha| = {sum(alpha)} exceeds {MAX_CHAIN_ORDER}")
    n = len(alpha)
    en = tuple(int(j == n - 1) for j in range(n))
    terms: dict = {(0, (0,) * n, ()): Fraction(1)}
    for i, times in enumerate(alpha):
        ei = tuple(int(j == i) for j in range(n))
        for _ in range(times):
            new: dict = {}

            def put(key, c):
                new[key] = new.get(key, Fraction(0)) + c

            for (s, beta, factors), c in terms.items():
                put((s, _inc(beta, i), factors), c)
                put((s + 1, tuple(b + e for b, e in zip(beta, en)), _add_factor(factors, ei)), c)
                for gamma, m in factors:
                    reduced = _add_factor(factors, gamma, -1)
                    put((s, beta, _add_factor(reduced, _inc(gamma, i))), c * m)
            terms = {k: v for k, v in new.items() if v != 0}
    out = sorted(ChainTerm(s, beta, factors, c) for (s, beta, factors), c in terms.items())
    return tuple(out)


class SymbolicFunction:
    """A smooth evaluator backed by a sympy expression, with cached derivatives."""

    def __init__(self, expr, n: int):
        self.symbols = sympy.symbols(f"x1:{n + 1}")
        self.n = n
        self.expr = expr(*self.symbols) if callable(expr) else expr
        self._cache: dict = {}

    def derivative(self, alpha, points) -> np.ndarray:
        alpha = tuple(alpha)
        if alpha not in self._cache:
            e = self.expr
            for s, k in zip(self.symbols, alpha):
                if k:
                    e = sympy.diff(e, s, k)
            self._cache[alpha] = sympy.lambdify(self.symbols, e, "numpy")
        pts = as_points(points, self.n)
        val = self._cache[alpha](*pts.T)
        return np.broadcast_to(np.asarray(val, dtype=float), (len(pts),)).copy()

    def __call__(self, points) -> np.ndarray:
        return self.derivative((0,) * self.n, points)


class DerivativeTable:
    """Explicit table alpha -> vectorised evaluator."""

    def __init__(self, table: dict, n: int):
        self.table = {tuple(k): v for k, v in table.items()}
        self.n = n

    def derivative(self, alpha, points) -> np.ndarray:
        alpha = tuple(alpha)
        if alpha not in self.table:
            raise UnsupportedOrderError(f"missing derivative {alpha}")
        pts = as_points(points, self.n)
        return np.broadcast_to(np.asarray(self.table[alpha](pts), dtype=float), (len(pts),)).copy()

    def __call__(self, points):
        return self.derivative((0,) * self.n, points)


def eval_chain_expansion(terms, f, h, lam: float, x) -> np.ndarray | float:
    """Sum of the chain terms at points x; f and h expose ``derivative(alpha, pts)``."""
    pts = as_points(x)
    n = pts.shape[1]
    hx = h.derivative((0,) * n, pts)
    shifted = pts.copy()
    shifted[:, -1] = pts[:, -1] + lam * hx
    total = np.zeros(len(pts))
    for t in terms:
        val = float(t.c) * lam**t.s * f.derivative(t.beta, shifted)
        for gamma, m in t.factors:
            val = val * h.derivative(gamma, pts) ** m
        total += val
    return float(total[0]) if np.ndim(x) == 1 else total


# ---------------------------------------------------------------------------
# finite differences


def fd_weights(x0: float, nodes, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at x0 from the given nodes."""
    z = np.asarray(nodes, dtype=float)
    N = len(z)
    if m >= N:
        raise DomainError("need more nodes than the derivative order")
    C = np.zeros((N, m + 1))
    c1 = 1.0
    c4 = z[0] - x0
    C[0, 0] = 1.0
    for i in range(1, N):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = z[i] - x0
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    C[i, k] = c1 * (k * C[i - 1, k - 1] - c5 * C[i - 1, k]) / c2
                C[i, 0] = -c1 * c5 * C[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                C[j, k] = (c4 * C[j, k] - k * C[j, k - 1]) / c3
            C[j, 0] = c4 * C[j, 0] / c3
        c1 = c2
    return C[:, m]


def central_offsets(m: int, accuracy: int = 2) -> np.ndarray:
    half = (m + 1) // 2 + accuracy // 2 - 1
    return np.arange(-half, half + 1)


def one_sided_offsets(m: int, accuracy: int = 2, forward: bool = True) -> np.ndarray:
    k = np.arange(m + accuracy)
    return k if forward else -k[::-1]


def _axis_choice(m, accuracy, x, step, lo=None, hi=None) -> np.ndarray:
    """Per point: 0 central, 1 forward, 2 backward stencil along one axis."""
    x = np.asarray(x, dtype=float)
    offs = central_offsets(m, accuracy)
    fw = one_sided_offsets(m, accuracy, True)
    choice = np.zeros(len(x), dtype=int)
    slack = 1e-12 * step
    if lo is not None:
        choice[x + offs[0] * step < lo - slack] = 1
    if hi is not None:
        choice[(choice == 0) & (x + offs[-1] * step > hi + slack)] = 2
    bad = np.zeros(len(x), dtype=bool)
    if lo is not None:
        bad |= (choice == 1) & (x + fw[-1] * step > hi + slack) if hi is not None else False
    if hi is not None:
        bad |= (choice == 2) & (x - fw[-1] * step < lo - slack) if lo is not None else False
    if np.any(bad):
        raise OutOfRangeError("finite-difference stencil leaves the evaluable region")
    return choice


def _stencil_for(m, accuracy, choice, step):
    if choice == 0:
        offs = central_offsets(m, accuracy)
    else:
        offs = one_sided_offsets(m, accuracy, forward=choice == 1)
    return offs, fd_weights(0.0, offs.astype(float), m) / step**m


def fd_derivative(func, alpha, x, step: float, accuracy: int = 2, bounds=None):
    """Tensor-product finite-difference approximation of D^alpha at points x.

    ``func`` is a vectorised evaluator or a GridField (then ``x`` and
    ``step`` are ignored in favour of the grid; see ``grid_derivative``).
    ``bounds = (lo, hi)`` switches to one-sided stencils at the box edge.
    """
    if isinstance(func, GridField):
        return grid_derivative(func, alpha, accuracy)
    if step <= 0:
        raise DomainError("step must be positive")
    pts = as_points(x)
    n = pts.shape[1]
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != n:
        raise DomainError("multi-index length must match the dimension")
    lo, hi = (None, None) if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float))
    choices = np.zeros((len(pts), n), dtype=int)
    for k in range(n):
        if alpha[k]:
            choices[:, k] = _axis_choice(alpha[k], accuracy, pts[:, k], step,
                                         None if lo is None else lo[k], None if hi is None else hi[k])
    out = np.zeros(len(pts))
    for combo in {tuple(c) for c in choices}:
        rows = np.nonzero(np.all(choices == combo, axis=1))[0]
        axes = [(np.array([0]), np.array([1.0])) if alpha[k] == 0 else _stencil_for(alpha[k], accuracy, combo[k], step)
                for k in range(n)]
        offs = np.array(list(itertools.product(*[a[0] for a in axes])), dtype=float)
        w = np.prod(np.array(list(itertools.product(*[a[1] for a in axes]))), axis=1)
        keep = w != 0
        offs, w = offs[keep], w[keep]
        sample = (pts[rows, None, :] + step * offs[None, :, :]).reshape(-1, n)
        vals = np.asarray(func(sample), dtype=float).reshape(len(rows), len(w))
        # weights sum to zero: differencing against one sample makes constants exact
        out[rows] = (vals - vals[:, :1]) @ w if sum(alpha) else vals @ w
    return float(out[0]) if np.ndim(x) == 1 else out


def _grid_axis_derivative(values, mask, axis, m, h, accuracy):
    N = values.shape[axis]
    v = np.moveaxis(values, axis, 0)
    mk = np.moveaxis(mask, axis, 0)
    out = np.zeros_like(v)
    omask = np.zeros_like(mk)
    central = central_offsets(m, accuracy)
    cw = fd_weights(0.0, central.astype(float), m) / h**m
    half = -central[0]
    if N < len(one_sided_offsets(m, accuracy)):
        raise DomainError("grid too small for the requested stencil")
    inner = slice(half, N - half)
    acc = np.zeros_like(v[inner])
    am = np.ones_like(mk[inner])
    ref = v[inner]
    for o, w in zip(central, cw):
        sl = slice(half + o, N - half + o)
        if w != 0:
            acc = acc + w * (v[sl] - ref)
        am = am & mk[sl]
    out[inner] = acc
    omask[inner] = am
    for i in list(range(half)) + list(range(N - half, N)):
        offs = one_sided_offsets(m, accuracy, forward=i < half)
        w = fd_weights(0.0, offs.astype(float), m) / h**m
        idx = i + offs
        out[i] = np.tensordot(w, v[idx] - v[i], axes=(0, 0))
        omask[i] = np.all(mk[idx], axis=0)
    return np.moveaxis(out, 0, axis), np.moveaxis(omask, 0, axis)


def grid_derivative(field: GridField, alpha, accuracy: int = 2) -> GridField:
    """D^alpha of a grid field; a point is retained only when every stencil
    point is retained in the input."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != field.n:
        raise DomainError("multi-index length must match the dimension")
    vals = np.where(field.mask, field.values, 0.0)
    mask = field.mask.copy()
    for k, m in enumerate(alpha):
        if m:
            vals, mask = _grid_axis_derivative(vals, mask, k, m, field.h, accuracy)
    return field.with_values(np.where(mask, vals, 0.0), mask)


# ---------------------------------------------------------------------------
# cone mollifier


def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class ConeMollifier:
    """eta(z) = C * b(|zbar| / a) * b((z_n - center) / half), supported in the
    cone {M |zbar| < -z_n}."""

    M: float
    eps: float
    n: int = 2
    center: float = -1.0
    half: float = 0.25
    order: int = 16
    panels: int = 4

    def __post_init__(self):
        if self.eps <= 0:
            raise DomainError("eps must be positive")
        top = -(self.center + self.half)
        a = 0.5 * top / max(self.M, 1.0)
        object.__setattr__(self, "radius", a)
        # support box plus a margin of 10% of its diameter must sit in the cone
        diam = math.sqrt((2 * a) ** 2 * (self.n - 1) + (2 * self.half) ** 2)
        pad = 0.1 * diam
        if not (self.M * (a + pad) * math.sqrt(self.n - 1) < top - pad and top - pad > 0):
            raise DomainError("mollifier support does not fit inside the cone")
        nodes_x, w_x = composite_rule(-a, a, self.panels, self.order)
        nodes_y, w_y = composite_rule(self.center - self.half, self.center + self.half, self.panels, self.order)
        grids = [nodes_x] * (self.n - 1) + [nodes_y]
        wts = [w_x] * (self.n - 1) + [w_y]
        z = np.array(list(itertools.product(*grids)))
        w = np.prod(np.array(list(itertools.product(*wts))), axis=1)
        raw = self._shape(z)
        keep = raw > 0
        mass = float(np.sum(w[keep] * raw[keep]))
        object.__setattr__(self, "scale", 1.0 / mass)
        object.__setattr__(self, "nodes", z[keep])
        object.__setattr__(self, "weights", w[keep] * raw[keep] / mass)

    def _shape(self, z):
        zb = z[:, :-1]
        r = np.sqrt(np.sum(zb**2, axis=1)) / self.radius
        return _bump(r) * _bump((z[:, -1] - self.center) / self.half)

    def eta(self, z) -> np.ndarray:
        return self.scale * self._shape(as_points(z, self.n))

    def in_cone(self, z) -> np.ndarray:
        z = as_points(z, self.n)
        return (z[:, -1] < 0) & (self.M * np.linalg.norm(z[:, :-1], axis=1) < np.abs(z[:, -1]))

    def support_box(self):
        lo = np.array([-self.radius] * (self.n - 1) + [self.center - self.half])
        hi = np.array([self.radius] * (self.n - 1) + [self.center + self.half])
        return lo, hi

    def y_moment(self) -> float:
        return float(np.sum(self.weights * self.nodes[:, -1]))


def mollify(f, moll: ConeMollifier, x, domain=None):
    """f_eps(x) = int f(x - eps z) eta(z) dz by tensor Gauss-Legendre.

    With ``domain`` given, every sample must fall inside it."""
    pts = as_points(x, moll.n)
    shifts = moll.eps * moll.nodes
    out = np.zeros(len(pts))
    for start in range(0, len(pts), 256):
        blk = pts[start:start + 256]
        samples = (blk[:, None, :] - shifts[None, :, :]).reshape(-1, moll.n)
        if domain is not None and not np.all(domain.contains(samples)):
            raise OutOfRangeError("mollifier sample fell outside the domain")
        vals = np.asarray(f(samples), dtype=float).reshape(len(blk), -1)
        out[start:start + 256] = vals @ moll.weights
    return float(out[0]) if np.ndim(x) == 1 else out
