"""CSV tables, static plots and the manifest for a ratio report."""
from __future__ import annotations

import csv
import math
import os
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import COLUMNS, SOBOLEV_COLUMNS, RatioReport  # noqa: E402
from .suites import SUITE_COLUMNS  # noqa: E402


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


def plot_name(p: float, phi_id: str) -> str:
    return f"ratio_p{p:g}_{slug(phi_id)}.png"


def _plot(report: RatioReport, p: float, phi_id: str, path: Path) -> None:
    """ratio_equal vs delta at the finest grid, one panel per domain and one
    curve per f (maximum over the multi-indices)."""
    h = min(r.grid_h for r in report.rows)
    rows = [r for r in report.rows if r.p == p and r.phi_id == phi_id and r.grid_h == h]
    domains = list(dict.fromkeys(r.domain_id for r in rows))
    fig, axes = plt.subplots(1, len(domains), figsize=(4 * len(domains), 3.4), squeeze=False)
    for ax, dom in zip(axes[0], domains):
        for f_id in dict.fromkeys(r.f_id for r in rows if r.domain_id == dom):
            deltas = sorted({r.delta for r in rows if r.domain_id == dom and r.f_id == f_id})
            ys = []
            for d in deltas:
                vals = [r.ratio_equal for r in rows
                        if r.domain_id == dom and r.f_id == f_id and r.delta == d and r.ratio_equal is not None]
                ys.append(max(vals) if vals else math.nan)
            ax.plot(deltas, ys, marker="o", label=f_id)
        ax.set_xscale("log")
        ax.set_xlabel("delta")
        ax.set_title(dom, fontsize=8)
    axes[0][0].set_ylabel("max ratio_equal over alpha")
    axes[0][-1].legend(fontsize=6)
    fig.suptitle(f"p = {p:g}, phi = {phi_id}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata={"Software": None})
    plt.close(fig)


def emit_outputs(report: RatioReport, out_dir, suite_rows=None) -> list[str]:
    """Write report.csv, sobolev.csv, one plot per (p, phi) and manifest.txt;
    returns the sorted file names (the manifest content)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", COLUMNS, [r.cells() for r in report.rows])
        write_csv(out / "sobolev.csv", SOBOLEV_COLUMNS, [r.cells() for r in report.sobolev])
        if suite_rows is not None:
            write_csv(out / "suites.csv", SUITE_COLUMNS, [r.cells() for r in suite_rows])
        for p, phi_id in dict.fromkeys((r.p, r.phi_id) for r in report.rows):
            _plot(report, p, phi_id, out / plot_name(p, phi_id))
        return write_manifest(out)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc


def write_manifest(out_dir) -> list[str]:
    out = Path(out_dir)
    names = sorted(set(os.listdir(out)) | {"manifest.txt"})
    (out / "manifest.txt").write_text("".join(n + "\n" for n in names), encoding="utf-8")
    return names
