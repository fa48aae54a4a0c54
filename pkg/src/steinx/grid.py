"""Uniformly sampled scalar fields on an axis-aligned box."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class GridField:
    """Values at the points ``axes[0] x axes[1] x ...`` (ij indexing).

    ``mask`` marks retained points; excluded points contribute nothing to
    integrals.  ``lo``/``hi`` is the box the samples represent.
    """

    axes: tuple
    values: np.ndarray
    mask: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape or self.mask.shape != shape:
            raise DomainError("values and mask must match the axis lengths")
        if min(shape) < 8:
            raise DomainError("grid resolution must be at least 8 per axis")
        steps = [np.diff(a) for a in self.axes]
        h = steps[0][0]
        if any(np.max(np.abs(s - h)) > 1e-9 * h for s in steps):
            raise DomainError("grid spacing must be uniform and equal on every axis")

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def h(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def with_values(self, values, mask=None) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.shape),
                       mask=self.mask if mask is None else np.asarray(mask, dtype=bool).reshape(self.shape))

    def subsample(self, step: int = 2) -> "GridField":
        """Every ``step``-th sample along each axis (half resolution for 2)."""
        sl = tuple(slice(0, None, step) for _ in range(self.n))
        return GridField(tuple(a[::step] for a in self.axes), self.values[sl], self.mask[sl], self.lo, self.hi)

    def scaled(self, t: float) -> "GridField":
        return self.with_values(self.values * t)

    def to_csv(self, path) -> None:
        pts = self.points()
        names = [f"x{k + 1}" for k in range(self.n)]
        with open(path, "w", encoding="ascii") as fh:
            fh.write(",".join(names + ["value"]) + "\n")
            for row, v in zip(pts, self.values.ravel()):
                fh.write(",".join(f"{c:.17g}" for c in row) + f",{v:.17g}\n")


def cell_centred_axes(lo, hi, resolution: int) -> tuple:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    widths = hi - lo
    h = widths[0] / resolution
    counts = widths / h
    if np.any(np.abs(counts - np.round(counts)) > 1e-9):
        raise DomainError("box sides must be integer multiples of the grid spacing")
    return tuple(lo[k] + (np.arange(int(round(counts[k]))) + 0.5) * h for k in range(len(lo)))


def sample_field(func, lo, hi, resolution: int, mask=None) -> GridField:
    """Sample a vectorised evaluator ``func(points) -> values`` on cell centres."""
    axes = cell_centred_axes(lo, hi, resolution)
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    vals = np.asarray(func(pts), dtype=float).reshape(shape)
    m = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(shape)
    return GridField(axes, vals, m, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
