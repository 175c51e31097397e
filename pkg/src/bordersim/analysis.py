"""Statistical post-processing of simulation output.

Density histograms and the chi-square machinery quantify how uniform a
snapshot is; KS distances compare empirical exit positions against the
analytic tables; the diffusion fit extracts the variance growth exponent
from displacement probes.  All functions are pure over immutable inputs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .analytic import ExitPdfTable
from .geometry import RectRegion
from .mobility import HybridParams


@dataclass(frozen=True)
class DensityHistogram:
    """Node counts on an equal-area rectangular binning (rows are y bins)."""

    nx: int
    ny: int
    counts: np.ndarray  # shape (ny, nx)
    bin_area: float

    @property
    def n_bins(self) -> int:
        return self.nx * self.ny

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        out = io.StringIO()
        for row in self.counts:
            out.write(",".join(str(int(c)) for c in row) + "\n")
        return out.getvalue()


@dataclass(frozen=True)
class UniformityReport:
    chi_square: float
    dof: int
    max_min_ratio: float
    peak_to_trough: float

    def to_dict(self) -> dict:
        return {
            "chi_square": self.chi_square,
            "dof": self.dof,
            "max_min_ratio": self.max_min_ratio,
            "peak_to_trough": self.peak_to_trough,
        }


@dataclass(frozen=True)
class DiffusionFit:
    gamma: float
    d_coefficient: float
    r_squared: float


def bin_snapshot(snapshot, region: RectRegion, nx: int, ny: int) -> DensityHistogram:
    """Bin snapshot positions on an nx-by-ny grid over the region.

    Points on interior bin edges go to the higher-index bin; points on the
    outer border go to the adjacent interior bin.
    """
    positions = snapshot.positions if hasattr(snapshot, "positions") else np.asarray(snapshot)
    x = positions[:, 0]
    y = positions[:, 1]
    ix = np.floor((x - region.origin.x) / region.width * nx).astype(int)
    iy = np.floor((y - region.origin.y) / region.height * ny).astype(int)
    if ix.min(initial=0) < 0 or iy.min(initial=0) < 0 or ix.max(initial=0) > nx or iy.max(initial=0) > ny:
        raise ValueError("positions outside the region")
    np.clip(ix, 0, nx - 1, out=ix)
    np.clip(iy, 0, ny - 1, out=iy)
    counts = np.zeros((ny, nx), dtype=np.int64)
    np.add.at(counts, (iy, ix), 1)
    bin_area = (region.width / nx) * (region.height / ny)
    return DensityHistogram(nx=nx, ny=ny, counts=counts, bin_area=bin_area)


def smoothed_means(hist: DensityHistogram) -> np.ndarray:
    """3x3 neighborhood means of the bin counts (shrinking at the edges)."""
    counts = hist.counts.astype(float)
    kernel_sum = np.zeros_like(counts)
    window = np.zeros_like(counts)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            shifted = np.zeros_like(counts)
            ys = slice(max(dy, 0), counts.shape[0] + min(dy, 0))
            yd = slice(max(-dy, 0), counts.shape[0] + min(-dy, 0))
            xs = slice(max(dx, 0), counts.shape[1] + min(dx, 0))
            xd = slice(max(-dx, 0), counts.shape[1] + min(-dx, 0))
            shifted[yd, xd] = counts[ys, xs]
            kernel_sum += shifted
            mask = np.zeros_like(counts)
            mask[yd, xd] = 1.0
            window += mask
    return kernel_sum / window


def chi_square_uniformity(hist: DensityHistogram) -> UniformityReport:
    """Pearson statistic of the counts against the equal-expectation null."""
    n = hist.total
    bins = hist.n_bins
    if n < 5 * bins:
        raise ValueError(f"need at least {5 * bins} samples for {bins} bins, got {n}")
    expected = n / bins
    counts = hist.counts.astype(float)
    chi_square = float(np.sum((counts - expected) ** 2) / expected)
    cmin = counts.min()
    max_min = float(counts.max() / cmin) if cmin > 0 else math.inf
    smooth = smoothed_means(hist)
    smin = smooth.min()
    peak_to_trough = float(smooth.max() / smin) if smin > 0 else math.inf
    return UniformityReport(
        chi_square=chi_square,
        dof=bins - 1,
        max_min_ratio=max_min,
        peak_to_trough=peak_to_trough,
    )


def center_block_mean(hist: DensityHistogram, k: int = 2) -> float:
    """Mean count of the central k-by-k bins."""
    cy, cx = hist.ny // 2, hist.nx // 2
    lo_y, lo_x = cy - k // 2, cx - k // 2
    return float(hist.counts[lo_y : lo_y + k, lo_x : lo_x + k].mean())


def corner_blocks_mean(hist: DensityHistogram, k: int = 2) -> float:
    """Mean count over the four k-by-k corner blocks."""
    c = hist.counts
    blocks = [c[:k, :k], c[:k, -k:], c[-k:, :k], c[-k:, -k:]]
    return float(np.mean([b.mean() for b in blocks]))


def ring_mean(hist: DensityHistogram, ring: int) -> float:
    """Mean count of the square ring ``ring`` bins in from the border."""
    c = hist.counts
    ny, nx = c.shape
    mask = np.zeros((ny, nx), dtype=bool)
    mask[ring, ring : nx - ring] = True
    mask[ny - 1 - ring, ring : nx - ring] = True
    mask[ring : ny - ring, ring] = True
    mask[ring : ny - ring, nx - 1 - ring] = True
    return float(c[mask].mean())


def ks_distance(samples, table: ExitPdfTable) -> float:
    """Sup distance between the sample ECDF and the tabulated CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 1:
        raise ValueError("need at least one sample")
    ref = np.interp(x, table.grid, table.cdf)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(upper - ref), np.max(ref - lower)))


def ks_two_sample(a, b) -> float:
    """Sup distance between two sample ECDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("need samples in both sets")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def fit_diffusion(times, samples) -> DiffusionFit:
    """Fit the displacement-variance growth exponent.

    ``samples`` has shape (n_nodes, n_times, 2); the fit is least squares of
    log variance against log time, and the diffusion coefficient averages
    Var(t) / (2 d t) with d = 2 spatial dimensions.
    """
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if len(times) < 5:
        raise ValueError("need at least five probe times")
    if times.max() / times.min() < 10.0:
        raise ValueError("probe times must span at least one decade")
    centered = samples - samples.mean(axis=0, keepdims=True)
    variance = np.sum(centered**2, axis=(0, 2)) / samples.shape[0]
    if np.any(variance <= 0.0):
        raise ValueError("nonpositive displacement variance")
    log_t = np.log(times)
    log_v = np.log(variance)
    slope, intercept = np.polyfit(log_t, log_v, 1)
    predicted = slope * log_t + intercept
    ss_res = float(np.sum((log_v - predicted) ** 2))
    ss_tot = float(np.sum((log_v - log_v.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    d_coefficient = float(np.mean(variance / (2.0 * 2.0 * times)))
    return DiffusionFit(gamma=float(slope), d_coefficient=d_coefficient, r_squared=r_squared)


@dataclass(frozen=True)
class SweepPoint:
    p_confine: float
    peak_to_trough: float
    histogram: DensityHistogram


def hybrid_flatness_sweep(p_values, base: HybridParams, config) -> list[SweepPoint]:
    """Run the hybrid model once per confinement probability and report the
    smoothed peak-to-trough ratio of the final snapshot."""
    from .engine import run

    p_values = list(p_values)
    if any(b > a for a, b in zip(p_values, p_values[1:])):
        raise ValueError("p_values must be nonincreasing")
    points = []
    for p in p_values:
        model = HybridParams(base.rd, p_confine=p)
        cfg = replace(config, model=model)
        result = run(cfg)
        hist = bin_snapshot(result.snapshots[-1], cfg.region, 10, 10)
        smooth = smoothed_means(hist)
        points.append(
            SweepPoint(
                p_confine=p,
                peak_to_trough=float(smooth.max() / smooth.min()),
                histogram=hist,
            )
        )
    return points
