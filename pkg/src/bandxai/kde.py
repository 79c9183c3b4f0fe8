"""Gaussian kernel density of selected-band wavelengths, Scott's-rule bandwidth."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from bandxai.errors import DataError

GRID_POINTS = 512
GRID_PAD = 5.0  # bandwidths beyond the sample range on each side


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.sum(np.diff(self.grid) * (self.density[:-1] + self.density[1:]) / 2.0))


def scott_bandwidth(samples) -> float:
    """``sigma * n**(-1/5)`` with the unbiased sample standard deviation."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise DataError("Scott's rule needs at least two samples")
    sigma = float(np.std(x, ddof=1))
    if not sigma > 0:
        raise DataError("degenerate sample: zero standard deviation")
    return sigma * x.size ** (-1.0 / 5.0)


def default_grid(samples, bandwidth: float, points: int = GRID_POINTS) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.linspace(x.min() - GRID_PAD * bandwidth, x.max() + GRID_PAD * bandwidth, points)


def kde_eval(samples, grid=None, bandwidth: float | None = None) -> KdeCurve:
    """Gaussian mixture density of ``samples`` evaluated on ``grid``.

    When ``grid`` is omitted a 512-point grid spanning five bandwidths past
    either end of the sample range is used.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    h = scott_bandwidth(x) if bandwidth is None else float(bandwidth)
    g = default_grid(x, h) if grid is None else np.asarray(grid, dtype=np.float64).ravel()
    if g.size == 0:
        raise DataError("empty evaluation grid")
    u = (g[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * u * u).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    return KdeCurve(g, density, h)


def write_kde_csv(curve: KdeCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["wavelength_um", "density"])
        for gx, d in zip(curve.grid, curve.density):
            w.writerow([repr(float(gx)), repr(float(d))])
