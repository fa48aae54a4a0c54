"""Module verification suites: each returns a list of named checks with a
measured value, the bound it is compared against and the verdict."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy

from ..calculus import (
    ConeMollifier,
    SymbolicFunction,
    enumerate_chain_terms,
    eval_chain_expansion,
    fd_derivative,
    grid_derivative,
    mollify,
)
from ..errors import ConfigError
from ..geometry import Ball, active_indices, cover_by_balls, disk_domain, lattice_bound, regularize_covering, xi_bound
from ..grid import sample_field
from ..kernel import build_kernel, eval_kernel, kernel_l1_norm, kernel_moments, reproduction_residual
from ..morrey import MorreySpec, hardy_check, morrey_norm, power, sk_series, sk_value
from ..quadrature import adaptive_gauss_legendre
from ..regdist import (
    build_regularized_distance,
    distance_to_closure,
    estimate_constants,
    multi_indices,
    sample_exterior,
)
from .config import DEFAULT_DOMAINS, DEFAULT_FUNCTIONS, parse_families
from .corpus import build_domain, build_function, is_bounded

SUITE_NAMES = ("kernel", "hardy", "chain", "cover", "regdist", "normequiv", "mollify", "sk", "xi")
SUITE_COLUMNS = ("suite", "check", "value", "bound", "pass")
CORPUS_BOX = (np.array([-1.5, -1.5]), np.array([1.5, 1.5]))


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    value: float
    bound: float
    passed: bool

    def cells(self) -> list:
        return [self.suite, self.check, f"{self.value:.12g}", f"{self.bound:.12g}",
                "pass" if self.passed else "fail"]


def _at_most(suite: str, check: str, value: float, bound: float) -> CheckRow:
    return CheckRow(suite, check, float(value), float(bound), bool(value <= bound))


def corpus_pairs():
    """(domain spec, function spec) over the default corpus, domain-major."""
    return [(d, f) for d in parse_families(DEFAULT_DOMAINS) for f in parse_families(DEFAULT_FUNCTIONS)]


# ---------------------------------------------------------------------------
# kernel


def kernel_suite(lambda_max: float = 2.0, K: int = 4) -> list:
    kern = build_kernel(lambda_max, K)
    rows = []
    for k in range(K + 1):
        # independent path: adaptive quadrature of lam^k tau, not the assembly rule
        m, _ = adaptive_gauss_legendre(lambda x, k=k: x**k * eval_kernel(kern, x), 1.0, lambda_max, tol=1e-14)
        target, tol = (1.0, 1e-8) if k == 0 else (0.0, 1e-6)
        rows.append(_at_most("kernel", f"moment_{k}", abs(float(m) - target), tol))
    lam = np.linspace(lambda_max, 3 * lambda_max, 257)
    rows.append(_at_most("kernel", "zero_beyond_support", float(np.max(np.abs(eval_kernel(kern, lam)))), 0.0))
    rows.append(_at_most("kernel", "l1_norm_deficit", 1.0 - kernel_l1_norm(kern), 1e-10))
    moments = kernel_moments(kern, K)
    # residual relative to the size of the integrand (|y| + lam_max |c|)^k
    worst = max(abs(reproduction_residual(moments, k, y, c)) / (abs(y) + lambda_max * abs(c)) ** k
                for k in range(K + 1) for y in (-2.0, -0.5, 0.0, 1.0, 3.0) for c in (0.1, 1.0, 2.5))
    rows.append(_at_most("kernel", "polynomial_reproduction", worst, 1e-8))
    return rows


# ---------------------------------------------------------------------------
# hardy


def hardy_instances(trials: int, seed: int = 0) -> list:
    """Seeded random parameters (log-uniform a, b-a, c, d-c) with a positive
    cubic f on the positive axis."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        a = 10 ** rng.uniform(-1, 1)
        b = a + 10 ** rng.uniform(-1, 1)
        c = 10 ** rng.uniform(-1, 1)
        d = c + 10 ** rng.uniform(-1, 1)
        beta = rng.uniform(-2, 2)
        p = rng.uniform(1, 4)
        coef = tuple(rng.uniform(0.1, 1.0, size=4))
        out.append((a, b, c, d, beta, p, coef))
    return out


def hardy_rows(trials: int = 200, seed: int = 0) -> list:
    """(a, b, c, d, beta, p, lhs, rhs, C, ok) per random instance."""
    rows = []
    for a, b, c, d, beta, p, coef in hardy_instances(trials, seed):
        lhs, rhs, C = hardy_check(a, b, c, d, beta, p, lambda x, coef=coef: np.polyval(coef, x))
        rows.append((a, b, c, d, beta, p, lhs, rhs, C, lhs <= rhs * (1 + 1e-9)))
    return rows


def hardy_suite(trials: int = 200, seed: int = 0) -> list:
    lhs, rhs, C = hardy_check(1, 2, 1, 2, 0, 1, lambda x: np.ones_like(x))
    rows = [
        _at_most("hardy", "closed_form_lhs", abs(lhs - 1.0), 1e-8),
        _at_most("hardy", "closed_form_C", abs(C - 1.0 / 3.0), 1e-8),
        _at_most("hardy", "closed_form_rhs", abs(rhs - 2.0), 1e-8),
    ]
    z = hardy_check(1, 2, 1, 2, 0, 1, lambda x: np.zeros_like(x))
    rows.append(_at_most("hardy", "zero_function", max(abs(z[0]), abs(z[1])), 0.0))
    worst = max(r[6] / r[7] for r in hardy_rows(trials, seed))
    rows.append(_at_most("hardy", f"random_{trials}_lhs_over_rhs", worst, 1.0 + 1e-9))
    return rows


# ---------------------------------------------------------------------------
# s_k series


def sk_suite(count: int = 50) -> list:
    alphas = np.logspace(-4, 4, count)
    worst = max(sk_series(float(a)).total for a in alphas)
    rows = [_at_most("sk", f"total_{count}_alphas", worst, 1.0 + 1e-9)]
    rows.append(_at_most("sk", "alpha_1_closed_form", abs(sk_series(1.0).total - (math.pi**2 / 6 - 1)), 1e-9))
    rows.append(_at_most("sk", "alpha_1e-6_total", sk_series(1e-6).total, 1.0))
    # case split: alpha > 1 gives s_k <= 3 / (2 (k+1)^2)
    big = [a for a in alphas if a > 1] + [100.0]
    ratio = max(sk_value(k, float(a)) * 2 * (k + 1) ** 2 / 3 for a in big for k in range(50))
    rows.append(_at_most("sk", "large_alpha_term_bound", ratio, 1.0))
    return rows


# ---------------------------------------------------------------------------
# chain terms


def _random_poly(rng, syms, degree: int):
    x, y = syms
    return sum(sympy.Rational(int(rng.integers(-9, 10)), 10) * x**i * y**j
               for i in range(degree + 1) for j in range(degree + 1 - i))


def chain_suite(probes: int = 50, seed: int = 0, max_fd_order: int = 3) -> list:
    bad = 0
    count = 0
    for n in (2, 3):
        for alpha in multi_indices(n, 4):
            for t in enumerate_chain_terms(alpha):
                count += 1
                try:
                    t.check(alpha)
                except AssertionError:
                    bad += 1
    rows = [_at_most("chain", f"invariants_{count}_terms", bad, 0)]
    rng = np.random.default_rng(seed)
    lam = 0.7
    worst = 0.0
    for alpha in multi_indices(2, max_fd_order):
        syms = sympy.symbols("x1:3")
        f = SymbolicFunction(_random_poly(rng, syms, 4), 2)
        h = SymbolicFunction(_random_poly(rng, syms, 2), 2)
        x = rng.uniform(-1, 1, size=(probes, 2))
        exp = eval_chain_expansion(enumerate_chain_terms(alpha), f, h, lam, x)

        def g(q):
            return f(np.column_stack([q[:, 0], q[:, 1] + lam * h(q)]))

        fd = fd_derivative(g, alpha, x, 1e-2, accuracy=6)
        worst = max(worst, float(np.max(np.abs(exp - fd) / np.maximum(np.abs(fd), 1e-6))))
    rows.append(_at_most("chain", f"expansion_vs_fd_{probes}_probes", worst, 1e-4))
    return rows


# ---------------------------------------------------------------------------
# covering


def cover_suite(sets: int = 20, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    rows = []
    for n in (2, 3):
        for k in (1, 2, 3):
            worst_ratio = 0.0
            uncovered = 0
            for _ in range(sets):
                m = int(rng.integers(2, 300))
                pts = rng.uniform(-1, 1, size=(m, n)) * rng.uniform(0.1, 5, size=n)
                cover = cover_by_balls(pts, k)
                uncovered += int(np.sum(~cover.covers(pts)))
                worst_ratio = max(worst_ratio, cover.count / lattice_bound(n, k))
            rows.append(_at_most("cover", f"n{n}_k{k}_uncovered", uncovered, 0))
            rows.append(_at_most("cover", f"n{n}_k{k}_count_over_bound", worst_ratio, 1.0))
    return rows


# ---------------------------------------------------------------------------
# regularized distance


def regdist_suite(domains=None, max_depth: int = 10, samples: int = 20000, fresh: int = 10000,
                  seed: int = 0) -> list:
    """Whitney-cube distance checks on graph domains (the corpus by default)
    over the corpus box widened by a sixth of its width on every side."""
    rows = []
    lo, hi = CORPUS_BOX
    width = float(np.max(hi - lo))
    box = (lo - width / 6, hi + width / 6)
    for spec in parse_families(DEFAULT_DOMAINS) if domains is None else domains:
        dom = build_domain(spec)
        if is_bounded(dom):
            raise ConfigError(f"regdist checks need a graph domain, got {spec.ident}")
        rd = build_regularized_distance(dom, box, max_depth)
        consts = estimate_constants(rd, dom, samples, seed)
        tag = spec.name
        r = rd.decomposition.whitney_ratios()
        rows.append(_at_most("regdist", f"{tag}_cells_outside_ratio", int(np.sum((r < 1.0) | (r > 4.0))), 0))
        pts = sample_exterior(rd, fresh, seed + 1)
        gap = dom.gap(pts)
        delta = rd.delta(pts)
        d = distance_to_closure(dom, pts)
        keep = d > 0
        rows.append(_at_most("regdist", f"{tag}_gap_over_c3_delta", float(np.max(gap / (consts.c3 * delta))), 1.0))
        alphas = multi_indices(dom.n, 2)
        ders = rd.derivatives(pts[keep], alphas)
        for a in alphas:
            val = float(np.max(np.abs(ders[a]) * d[keep] ** (sum(a) - 1)) / consts.Balpha(a))
            rows.append(_at_most("regdist", f"{tag}_B{a[0]}{a[1]}_ratio", val, 1.0))
        dstar = 2 * consts.c3 * delta
        low = float(np.max(2 * gap / dstar))
        high = float(np.max(dstar / (2 * consts.c2 * consts.c3 * gap)))
        rows.append(_at_most("regdist", f"{tag}_sandwich_lower", low, 1.0))
        rows.append(_at_most("regdist", f"{tag}_sandwich_upper", high, 1.0))
    return rows


# ---------------------------------------------------------------------------
# norm equivalence


def corpus_fields(count: int, resolution: int = 128, accuracy: int = 4):
    """``count`` corpus fields D^alpha f with their domain membership: the four
    corpus functions times the derivatives of order <= 2 (mixed last), domains
    assigned cyclically."""
    doms = [build_domain(s) for s in parse_families(DEFAULT_DOMAINS)]
    funcs = [build_function(s) for s in parse_families(DEFAULT_FUNCTIONS)]
    alphas = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]
    lo, hi = CORPUS_BOX
    out = []
    for j in range(count):
        fn = funcs[j % len(funcs)]
        alpha = alphas[(j // len(funcs)) % len(alphas)]
        dom = doms[j % len(doms)]
        F = grid_derivative(sample_field(fn, lo, hi, resolution), alpha, accuracy)
        out.append((f"{fn.ident}|D{alpha[0]}{alpha[1]}|{j % len(doms)}", F, dom.contains))
    return out


def normequiv_suite(resolution: int = 128, closed_resolution: int = 256) -> list:
    rows = []
    worst = 0.0
    for ident, F, member in corpus_fields(20, resolution):
        for p in (1.0, 2.0):
            spec = MorreySpec(p, power(1.0), 1.0)
            ball = morrey_norm(F, member, spec, "ball", refine=False).value
            cube = morrey_norm(F, member, spec, "cube", refine=False).value
            worst = max(worst, ball / (cube * 1.02 + 1e-9))
    rows.append(_at_most("normequiv", "ball_over_cube_20_fields", worst, 1.0))
    lo, hi = CORPUS_BOX
    one = sample_field(lambda q: np.ones(len(q)), lo, hi, closed_resolution)
    half = lambda q: q[:, 1] > 0  # noqa: E731
    spec = MorreySpec(1.0, power(2.0), 10.0)
    ball = morrey_norm(one, half, spec, "ball", refine=False).value
    cube = morrey_norm(one, half, spec, "cube", refine=False).value
    rows.append(_at_most("normequiv", "half_plane_ball_pi", abs(ball / math.pi - 1), 0.03))
    rows.append(_at_most("normequiv", "half_plane_cube_4", abs(cube / 4 - 1), 0.03))
    return rows


# ---------------------------------------------------------------------------
# mollifier


def _inside(pts, lo, hi) -> np.ndarray:
    return np.all((pts >= lo) & (pts <= hi), axis=1)


def mollify_suite(resolution: int = 128, eps=(0.1, 0.05), count: int = 10, accuracy: int = 4) -> list:
    """Morrey norms of D^alpha f_eps against D^alpha f on Omega, |alpha| <= 1,
    for the first ``count`` corpus (domain, function) pairs."""
    lo, hi = CORPUS_BOX
    spec = MorreySpec(2.0, power(1.0), 1.0)
    alphas = [(0, 0), (1, 0), (0, 1)]
    rows = []
    worst = 0.0
    for dspec, fspec in corpus_pairs()[:count]:
        dom = build_domain(dspec)
        fn = build_function(fspec)
        F = sample_field(fn, lo, hi, resolution)
        base = {a: morrey_norm(grid_derivative(F, a, accuracy), dom.contains, spec, refine=False).value
                for a in alphas}
        for e in eps:
            moll = ConeMollifier(dom.M, e, panels=2, order=8)
            Fe = F.with_values(mollify(fn, moll, F.points()))
            # f_eps only on points whose every sample x - eps z stays in the box
            zlo, zhi = moll.support_box()
            inner = _inside(F.points(), lo + e * zhi, hi + e * zlo).reshape(F.shape)
            member = dom.contains(F.points()).reshape(F.shape) & inner
            for a in alphas:
                val = morrey_norm(grid_derivative(Fe, a, accuracy), member, spec, refine=False).value
                worst = max(worst, val / base[a])
    rows.append(_at_most("mollify", f"norm_ratio_{count}_fields", worst, 1.05))
    # f = 1 is reproduced exactly and so is its norm
    dom = build_domain(parse_families(DEFAULT_DOMAINS)[-1])
    one = sample_field(lambda q: np.ones(len(q)), lo, hi, resolution)
    n1 = morrey_norm(one, dom.contains, spec, refine=False).value
    dev = 0.0
    for e in eps:
        moll = ConeMollifier(dom.M, e, panels=2, order=8)
        vals = mollify(lambda q: np.ones(len(q)), moll, one.points())
        ne = morrey_norm(one.with_values(vals), dom.contains, spec, refine=False).value
        dev = max(dev, float(np.max(np.abs(vals - 1))), abs(ne / n1 - 1))
    rows.append(_at_most("mollify", "constant_exact", dev, 1e-8))
    # support of eta inside the cone
    moll = ConeMollifier(dom.M, eps[0])
    zlo, zhi = moll.support_box()
    z = np.random.default_rng(0).uniform(zlo, zhi, size=(20000, moll.n))
    leak = int(np.sum((moll.eta(z) > 0) & ~moll.in_cone(z)))
    rows.append(_at_most("mollify", "support_outside_cone", leak, 0))
    return rows


# ---------------------------------------------------------------------------
# xi bound


def xi_suite(balls: int = 100, delta: float = 1.0, samples: int = 10**6, seed: int = 0) -> list:
    msd = regularize_covering(disk_domain(), seed=seed)
    est = xi_bound(msd, samples, seed)
    rng = np.random.default_rng(seed + 1)
    lo, hi = msd.bounds(margin=msd.eps)
    worst = 0
    for _ in range(balls):
        b = Ball(rng.uniform(lo, hi), float(rng.uniform(0.0, delta) or delta / 2))
        worst = max(worst, len(active_indices(msd, b)))
    return [_at_most("xi", f"active_patches_{balls}_balls", worst, est.xi_upper)]


# ---------------------------------------------------------------------------


SUITES = {
    "kernel": kernel_suite,
    "hardy": hardy_suite,
    "chain": chain_suite,
    "cover": cover_suite,
    "regdist": regdist_suite,
    "normequiv": normequiv_suite,
    "mollify": mollify_suite,
    "sk": sk_suite,
    "xi": xi_suite,
}


@dataclass(frozen=True)
class SuiteSummary:
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if not r.passed]


def parse_selector(text: str) -> tuple:
    """Comma separated suite names; ``all`` expands to every suite."""
    names = [t.strip() for t in text.split(",") if t.strip()]
    if names == ["all"]:
        return SUITE_NAMES
    return tuple(names)


def run_verification_suites(selector) -> SuiteSummary:
    names = list(selector)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; known: {', '.join(SUITE_NAMES)}")
    rows = []
    for s in SUITE_NAMES:
        if s in names:
            rows.extend(SUITES[s]())
    return SuiteSummary(tuple(rows))
