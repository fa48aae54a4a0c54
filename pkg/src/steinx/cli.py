"""Command line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, SteinxError, UnsupportedOrderError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigError, DomainError, UnsupportedOrderError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _int_tuple(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma separated integers, got {text!r}") from exc


def _config(args):
    from .harness.config import ExperimentConfig, load_config

    return load_config(args.config) if args.config else ExperimentConfig()


def _print_checks(rows) -> int:
    from .harness.suites import SUITE_COLUMNS

    w = _writer()
    w.writerow(SUITE_COLUMNS)
    w.writerows(r.cells() for r in rows)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------
# subcommands


def cmd_kernel_verify(args) -> int:
    from .kernel import build_kernel, kernel_moments

    cfg = _config(args)
    lam = cfg.lambda_max if args.lambda_max is None else args.lambda_max
    K = cfg.moments if args.moments is None else args.moments
    kern = build_kernel(lam, K)
    m = kernel_moments(kern, K)
    w = _writer()
    w.writerow(["k", "value"])
    for k, v in enumerate(m):
        w.writerow([k, f"{v:.17g}"])
    ok = abs(m[0] - 1) <= 1e-8 and all(abs(v) <= 1e-6 for v in m[1:])
    return EXIT_OK if ok else EXIT_FAIL


def cmd_hardy(args) -> int:
    from .harness.suites import hardy_rows

    if args.trials < 0:
        raise ConfigError("--trials must be nonnegative")
    rows = hardy_rows(args.trials, args.seed)
    w = _writer()
    w.writerow(["a", "b", "c", "d", "beta", "p", "lhs", "rhs", "C", "pass"])
    for r in rows:
        w.writerow([f"{v:.17g}" for v in r[:9]] + ["pass" if r[9] else "fail"])
    return EXIT_OK if all(r[9] for r in rows) else EXIT_FAIL


def cmd_sk(args) -> int:
    from .morrey import sk_series, sk_value

    res = sk_series(args.alpha)
    w = _writer()
    ok = res.total <= 1 + 1e-9
    w.writerow(["alpha", "partial", "tail", "total", "terms", "s_0", "pass"])
    w.writerow([f"{args.alpha:.17g}", f"{res.partial:.17g}", f"{res.tail:.17g}", f"{res.total:.17g}",
                res.terms, f"{sk_value(0, args.alpha):.17g}", "pass" if ok else "fail"])
    return EXIT_OK if ok else EXIT_FAIL


def cmd_chain_list(args) -> int:
    from .calculus import enumerate_chain_terms

    alpha = _int_tuple(args.alpha)
    terms = enumerate_chain_terms(alpha)
    w = _writer()
    w.writerow(["c", "s", "beta", "factors"])
    for t in terms:
        t.check(alpha)
        w.writerow(t.as_row())
    return EXIT_OK


def cmd_cover(args) -> int:
    from .geometry import cover_by_balls, lattice_bound, read_points_csv

    if args.points:
        try:
            pts = read_points_csv(args.points)
        except OSError as exc:
            raise ConfigError(f"cannot read points: {exc}") from exc
    else:
        rng = np.random.default_rng(args.seed)
        pts = rng.uniform(0, 1, size=(args.count, args.dim))
    pts = np.atleast_2d(pts)
    cover = cover_by_balls(pts, args.k)
    n = pts.shape[1]
    w = _writer()
    w.writerow([f"c{j + 1}" for j in range(n)] + ["radius"])
    for b in cover.balls:
        w.writerow([f"{c:.17g}" for c in b.center] + [f"{b.radius:.17g}"])
    ok = bool(cover.covers(pts).all()) and cover.count <= lattice_bound(n, args.k)
    print(f"count={cover.count} bound={lattice_bound(n, args.k)} covered={'yes' if ok else 'no'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_regdist_verify(args) -> int:
    from .harness.suites import regdist_suite

    cfg = _config(args) if args.config else None
    domains = None if cfg is None else cfg.domains
    rows = regdist_suite(domains, max_depth=args.max_depth, samples=args.samples, seed=args.seed)
    return _print_checks(rows)


def cmd_extend(args) -> int:
    from .harness.corpus import build_function
    from .harness.experiment import setup_domain
    from .harness.outputs import slug, write_manifest
    from .grid import sample_field
    from .kernel import build_kernel

    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kernel = build_kernel(cfg.lambda_max, cfg.moments)
    res = args.resolution or cfg.resolutions[0]
    lo, hi = cfg.box[:2], cfg.box[2:]
    for spec in cfg.domains:
        setup = setup_domain(spec, cfg, kernel)
        for fs in cfg.functions:
            fn = build_function(fs)
            Tf = sample_field(lambda P: setup.extend(fn, P), lo, hi, res)
            Tf.to_csv(out / f"Tf_{slug(spec.ident)}__{slug(fn.ident)}_{res}.csv")
    write_manifest(out)
    return EXIT_OK


def ratio_checks(report) -> list:
    """The report-level invariants: finite ratios, refinement change <= 10%,
    delta spread <= 2 on bounded domains."""
    from .harness.experiment import delta_spread, refinement_changes
    from .harness.suites import CheckRow

    finite = sum(1 for r in report.rows if r.ratio_equal is not None and not math.isfinite(r.ratio_equal))
    rows = [CheckRow("ratio", "infinite_ratio_rows", finite, 0, finite == 0)]
    ch = [c[3] for c in refinement_changes(report)]
    if ch:
        rows.append(CheckRow("ratio", "max_refinement_change", max(ch), 0.1, max(ch) <= 0.1))
    sp = [s[1] for s in delta_spread(report)]
    if sp:
        rows.append(CheckRow("ratio", "max_delta_spread_bounded", max(sp), 2.0, max(sp) <= 2.0))
    return rows


def cmd_ratio(args) -> int:
    from .harness.experiment import run_ratio_experiment
    from .harness.outputs import emit_outputs

    cfg = _config(args)
    report = run_ratio_experiment(cfg)
    checks = ratio_checks(report)
    emit_outputs(report, args.out, suite_rows=checks)
    return _print_checks(checks)


def cmd_suite(args) -> int:
    from .harness.outputs import write_csv, write_manifest
    from .harness.suites import SUITE_COLUMNS, parse_selector, run_verification_suites

    summary = run_verification_suites(parse_selector(args.selector))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "suites.csv", SUITE_COLUMNS, [r.cells() for r in summary.rows])
        write_manifest(out)
    return _print_checks(summary.rows)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="steinx", description="Extension operator and Morrey norm experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", help="moment kernel checks")
    ksub = k.add_subparsers(dest="action", required=True, parser_class=_Parser)
    kv = ksub.add_parser("verify", help="print the moment table as CSV")
    kv.add_argument("--config")
    kv.add_argument("--lambda-max", type=float)
    kv.add_argument("--moments", type=int)
    kv.set_defaults(func=cmd_kernel_verify)

    h = sub.add_parser("hardy", help="random Hardy inequality instances as CSV")
    h.add_argument("--trials", type=int, default=200)
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_hardy)

    s = sub.add_parser("sk", help="s_k series bound for one ratio")
    s.add_argument("--alpha", type=float, required=True)
    s.set_defaults(func=cmd_sk)

    c = sub.add_parser("chain", help="chain-rule terms")
    csub = c.add_subparsers(dest="action", required=True, parser_class=_Parser)
    cl = csub.add_parser("list", help="print the canonical term list as CSV")
    cl.add_argument("--alpha", required=True, help="multi-index, e.g. 1,2")
    cl.set_defaults(func=cmd_chain_list)

    cv = sub.add_parser("cover", help="cover a point set by balls of radius D/k")
    cv.add_argument("--points", help="CSV point file (no header); random points when omitted")
    cv.add_argument("--k", type=int, default=2)
    cv.add_argument("--count", type=int, default=100)
    cv.add_argument("--dim", type=int, default=2)
    cv.add_argument("--seed", type=int, default=0)
    cv.set_defaults(func=cmd_cover)

    r = sub.add_parser("regdist", help="regularized distance checks")
    rsub = r.add_subparsers(dest="action", required=True, parser_class=_Parser)
    rv = rsub.add_parser("verify", help="Whitney ratio, constants and sandwich checks")
    rv.add_argument("--config")
    rv.add_argument("--max-depth", type=int, default=10)
    rv.add_argument("--samples", type=int, default=20000)
    rv.add_argument("--seed", type=int, default=0)
    rv.set_defaults(func=cmd_regdist_verify)

    e = sub.add_parser("extend", help="write Tf grid fields as CSV")
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.add_argument("--resolution", type=int)
    e.set_defaults(func=cmd_extend)

    ra = sub.add_parser("ratio", help="run the Morrey ratio experiment")
    ra.add_argument("--config")
    ra.add_argument("--out", required=True)
    ra.set_defaults(func=cmd_ratio)

    su = sub.add_parser("suite", help="run verification suites")
    su.add_argument("selector", help="'all' or comma separated suite names")
    su.add_argument("--out")
    su.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"steinx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SteinxError as exc:
        print(f"steinx: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
