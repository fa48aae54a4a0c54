"""Morrey and Sobolev norm ratios of extended functions over a corpus."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..calculus import grid_derivative
from ..errors import ConfigError, SteinxError
from ..extension import (
    build_context,
    build_partition,
    build_patch_contexts,
    extend_general,
    extend_special,
)
from ..geometry import regularize_covering
from ..grid import GridField, sample_field
from ..kernel import build_kernel
from ..morrey import PhiFunction, lp_norm, morrey_sweep, power
from ..regdist import multi_indices
from .config import ExperimentConfig
from .corpus import boundary_distance, build_domain, build_function, is_bounded

COLUMNS = (
    "domain_id", "f_id", "alpha", "p", "phi_id", "delta", "grid_h", "norm_DalphaTf",
    "norm_sum_equal_order", "norm_sum_leq_order", "ratio_equal", "ratio_leq", "mask_fraction",
)
SOBOLEV_COLUMNS = ("domain_id", "f_id", "order", "p", "grid_h", "norm_Tf", "norm_f", "ratio")
SENTINEL = "0/0"


class ExperimentError(SteinxError):
    """A module error raised while computing one report row."""


def thread_count() -> int:
    raw = os.environ.get("STEINX_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError("STEINX_THREADS must be a positive integer") from exc
    if n < 1:
        raise ConfigError("STEINX_THREADS must be a positive integer")
    return n


def ratio(num: float, den: float):
    """num / den, or None (the 0/0 sentinel) when both vanish."""
    if den == 0.0:
        return None if num == 0.0 else math.inf
    return num / den


@dataclass(frozen=True)
class RatioRow:
    domain_id: str
    f_id: str
    alpha: tuple
    p: float
    phi_id: str
    delta: float
    grid_h: float
    norm_DalphaTf: float
    norm_sum_equal_order: float
    norm_sum_leq_order: float
    ratio_equal: float | None
    ratio_leq: float | None
    mask_fraction: float

    def cells(self) -> list[str]:
        def num(v):
            return SENTINEL if v is None else f"{v:.12g}"

        return [
            self.domain_id, self.f_id, "(" + ",".join(str(a) for a in self.alpha) + ")", f"{self.p:g}",
            self.phi_id, f"{self.delta:g}", f"{self.grid_h:.12g}", num(self.norm_DalphaTf),
            num(self.norm_sum_equal_order), num(self.norm_sum_leq_order), num(self.ratio_equal),
            num(self.ratio_leq), f"{self.mask_fraction:.12g}",
        ]


@dataclass(frozen=True)
class SobolevRow:
    domain_id: str
    f_id: str
    order: int
    p: float
    grid_h: float
    norm_Tf: float
    norm_f: float
    ratio: float | None

    def cells(self) -> list[str]:
        r = SENTINEL if self.ratio is None else f"{self.ratio:.12g}"
        return [self.domain_id, self.f_id, str(self.order), f"{self.p:g}", f"{self.grid_h:.12g}",
                f"{self.norm_Tf:.12g}", f"{self.norm_f:.12g}", r]


@dataclass
class RatioReport:
    rows: list = field(default_factory=list)
    sobolev: list = field(default_factory=list)
    bounded: dict = field(default_factory=dict)  # domain_id -> bool

    def __post_init__(self):
        for r in self.rows:
            for v in (r.ratio_equal, r.ratio_leq):
                if v is not None and not v >= 0:
                    raise SteinxError("ratios must be nonnegative")

    def select(self, **kw) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]


def phi_list(cfg: ExperimentConfig) -> list[PhiFunction]:
    phis = [power(g) for g in cfg.gamma]
    if cfg.phi_table:
        r, v = zip(*cfg.phi_table)
        phis.append(PhiFunction("table", 0.0, tuple(r), tuple(v)))
    return phis


@dataclass(frozen=True, eq=False)
class DomainSetup:
    """Everything needed to extend functions from one corpus domain."""

    ident: str
    domain: object
    ctx: object = None
    pou: object = None
    contexts: tuple = ()

    @property
    def bounded(self) -> bool:
        return self.pou is not None

    def extend(self, f, pts):
        if self.bounded:
            return extend_general(self.domain, self.pou, self.contexts, f, pts, unsupported="nan")
        return extend_special(self.ctx, f, pts, unsupported="nan")

    def contains(self, pts):
        return self.domain.contains(pts)


def setup_domain(spec, cfg: ExperimentConfig, kernel) -> DomainSetup:
    domain = build_domain(spec)
    lo, hi = np.array(cfg.box[:2]), np.array(cfg.box[2:])
    if is_bounded(domain):
        msd = regularize_covering(domain, seed=cfg.seed)
        pou = build_partition(msd, order=max(cfg.order, 1), seed=cfg.seed)
        contexts = build_patch_contexts(msd, kernel, max_depth=min(cfg.max_depth, 11),
                                        sample_count=cfg.samples, seed=cfg.seed, method=cfg.method)
        return DomainSetup(spec.ident, msd, pou=pou, contexts=tuple(contexts))
    # the regularized distance box covers the grid box plus the kernel reach
    width = float(np.max(hi - lo))
    box = (lo - width / 6, hi + width / 6)
    ctx = build_context(domain, box, kernel, cfg.max_depth, cfg.samples, cfg.seed, cfg.method)
    return DomainSetup(spec.ident, domain, ctx=ctx)


def _fields(setup: DomainSetup, fn, cfg: ExperimentConfig, res: int):
    lo, hi = cfg.box[:2], cfg.box[2:]
    Tf = sample_field(lambda P: setup.extend(fn, P), lo, hi, res)
    pts = Tf.points()
    band = boundary_distance(setup.domain, pts) < cfg.band * Tf.h
    keep = np.isfinite(Tf.values).ravel() & ~band
    Tf = Tf.with_values(np.where(keep.reshape(Tf.shape), Tf.values, 0.0), keep)
    F = sample_field(fn, lo, hi, res)
    omega = setup.contains(pts).reshape(F.shape)
    return Tf, F, omega


def _pipeline(setup: DomainSetup, fn, cfg: ExperimentConfig, phis) -> tuple[list, list]:
    alphas = [a for a in multi_indices(2, cfg.order)]
    rows, sob = [], []
    for res in cfg.resolutions:
        Tf, F, omega = _fields(setup, fn, cfg, res)
        dT = {a: grid_derivative(Tf, a, cfg.accuracy) for a in alphas}
        dF = {a: grid_derivative(F, a, cfg.accuracy) for a in alphas}
        for p in cfg.p:
            nT = {a: morrey_sweep(dT[a], None, p, phis, cfg.delta, centers="all") for a in alphas}
            nF = {a: morrey_sweep(dF[a], omega, p, phis, cfg.delta, centers="domain") for a in alphas}
            for a in alphas:
                for i, phi in enumerate(phis):
                    for d in cfg.delta:
                        num = nT[a][(i, d)].value
                        eq = float(sum(nF[b][(i, d)].value for b in alphas if sum(b) == sum(a)))
                        leq = float(sum(nF[b][(i, d)].value for b in alphas if sum(b) <= sum(a)))
                        rows.append(RatioRow(setup.ident, fn.ident, a, float(p), phi.ident, float(d), Tf.h,
                                             num, eq, leq, ratio(num, eq), ratio(num, leq),
                                             float(1.0 - dT[a].mask.mean())))
            # Sobolev norms of order l on a common mask
            common_T = np.logical_and.reduce([dT[a].mask for a in alphas])
            common_F = np.logical_and.reduce([dF[a].mask for a in alphas])
            sT = sum(lp_norm(dT[a].with_values(dT[a].values, common_T), p) for a in alphas)
            sF = sum(lp_norm(dF[a].with_values(dF[a].values, common_F), p, omega) for a in alphas)
            sob.append(SobolevRow(setup.ident, fn.ident, cfg.order, float(p), Tf.h, float(sT), float(sF),
                                  ratio(float(sT), float(sF))))
    return rows, sob


def run_ratio_experiment(cfg: ExperimentConfig, setups: dict | None = None) -> RatioReport:
    """Every (domain, f, resolution, alpha, p, phi, delta) row of the corpus.

    ``setups`` caches domain setups (keyed by domain id) between calls; the
    report is independent of the thread count."""
    threads = thread_count()
    kernel = build_kernel(cfg.lambda_max, cfg.moments)
    phis = phi_list(cfg)
    setups = {} if setups is None else setups
    for spec in cfg.domains:
        if spec.ident not in setups:
            try:
                setups[spec.ident] = setup_domain(spec, cfg, kernel)
            except SteinxError as exc:
                raise ExperimentError(f"domain {spec.ident}: {exc}") from exc
    functions = [build_function(s) for s in cfg.functions]
    jobs = [(setups[d.ident], fn) for d in cfg.domains for fn in functions]

    def work(job):
        setup, fn = job
        try:
            return _pipeline(setup, fn, cfg, phis)
        except SteinxError as exc:
            raise ExperimentError(f"domain {setup.ident}, function {fn.ident}: {exc}") from exc

    threads = min(threads, max(len(jobs), 1))
    if threads == 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    report = RatioReport(bounded={d.ident: setups[d.ident].bounded for d in cfg.domains})
    for rows, sob in results:
        report.rows.extend(rows)
        report.sobolev.extend(sob)
    return report


# ---------------------------------------------------------------------------
# summaries used by the acceptance checks


def _key(r: RatioRow) -> tuple:
    return (r.domain_id, r.f_id, r.alpha, r.p, r.phi_id, r.delta)


def refinement_changes(report: RatioReport, coarse_h: float | None = None) -> list[tuple]:
    """(key, coarse ratio, fine ratio, relative change) between the two
    coarsest-to-finest resolutions present."""
    hs = sorted({r.grid_h for r in report.rows}, reverse=True)
    if len(hs) < 2:
        return []
    hc = hs[0] if coarse_h is None else coarse_h
    hf = min(h for h in hs if h < hc)
    fine = {_key(r): r.ratio_equal for r in report.rows if r.grid_h == hf}
    out = []
    for r in report.rows:
        if r.grid_h != hc:
            continue
        a, b = r.ratio_equal, fine.get(_key(r))
        if a is None or b is None:
            change = 0.0 if a is None and b is None else math.inf
        else:
            change = abs(b - a) / b if b > 0 else (0.0 if a == 0 else math.inf)
        out.append((_key(r), a, b, change))
    return out


def delta_spread(report: RatioReport, grid_h: float | None = None, bounded_only: bool = True) -> list[tuple]:
    """(key without delta, max/min of ratio_equal over the delta list)."""
    h = min(r.grid_h for r in report.rows) if grid_h is None else grid_h
    groups: dict = {}
    for r in report.rows:
        if r.grid_h != h or (bounded_only and not report.bounded.get(r.domain_id, False)):
            continue
        groups.setdefault(_key(r)[:-1], []).append(r.ratio_equal)
    out = []
    for k, vals in groups.items():
        v = [x for x in vals if x is not None]
        if not v:
            continue
        lo, hi = min(v), max(v)
        out.append((k, hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)))
    return out


def sobolev_changes(report: RatioReport) -> list[tuple]:
    hs = sorted({r.grid_h for r in report.sobolev}, reverse=True)
    if len(hs) < 2:
        return []
    fine = {(r.domain_id, r.f_id, r.p): r.ratio for r in report.sobolev if r.grid_h == hs[1]}
    out = []
    for r in report.sobolev:
        if r.grid_h == hs[0]:
            b = fine[(r.domain_id, r.f_id, r.p)]
            a = r.ratio
            change = 0.0 if a is None and b is None else (abs(b - a) / b if a is not None and b else math.inf)
            out.append(((r.domain_id, r.f_id, r.p), a, b, change))
    return out


def field_pair(setup: DomainSetup, fn, cfg: ExperimentConfig, res: int) -> tuple[GridField, GridField, np.ndarray]:
    """The masked Tf field, the f field and the Omega mask (for diagnostics)."""
    return _fields(setup, fn, cfg, res)
