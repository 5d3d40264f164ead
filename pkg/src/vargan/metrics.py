"""Desk-scale evaluation: mode coverage on Gaussian mixtures, exact 1-D
Wasserstein and its sliced 2-D extension, rolling loss variance (the
quantity the stability comparison is stated in), and collapse detection.

The collapse rule is adapted for an unbounded critic: a run counts as
collapsed when it aborted on a non-finite loss, when final mode coverage
falls below a floor, or when the trailing-window critic loss is
degenerate (diverged in magnitude or frozen flat). The classic
saturated-BCE criterion is reported alongside for the classifier when one
is trained, but does not decide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Batch, DistSpec

__all__ = [
    "CoverageReport",
    "CollapseCriteria",
    "mode_coverage",
    "wasserstein_1d",
    "sliced_wasserstein",
    "rolling_variance",
    "detect_collapse",
    "default_coverage_radius",
    "default_min_count",
]


@dataclass(frozen=True)
class CoverageReport:
    modes_covered: int
    high_quality_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.high_quality_fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")


@dataclass(frozen=True)
class CollapseCriteria:
    window: int = 2000
    coverage_floor: int = 2
    loss_abs_ceiling: float = 1e3
    loss_std_floor: float = 1e-12

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


def default_coverage_radius(spec: DistSpec) -> float:
    """Three standard deviations of the mode components."""
    _, _, sigmas = spec.components()
    return 3.0 * float(sigmas.max())


def default_min_count(n: int, n_modes: int) -> int:
    return max(1, int(0.2 * n / n_modes))


def mode_coverage(samples, centers, radius: float, min_count: int) -> CoverageReport:
    """A mode is covered when >= min_count samples lie within radius of it;
    the high-quality fraction is the share of samples within radius of any
    mode."""
    pts = samples.points if isinstance(samples, Batch) else np.asarray(samples)
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if pts.shape[0] < 1:
        raise ValueError("empty batch")
    if radius <= 0 or min_count < 1:
        raise ValueError("radius must be > 0 and min_count >= 1")
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    within = d2 <= radius * radius
    covered = int((within.sum(axis=0) >= min_count).sum())
    hq = float(within.any(axis=1).mean())
    return CoverageReport(covered, hq)


def wasserstein_1d(a, b) -> float:
    """Exact empirical 1-Wasserstein distance in one dimension.

    Equal sample counts use the sorted coupling (mean absolute difference
    of order statistics); unequal counts integrate |F_a - F_b| over the
    merged support, which is the same transport cost.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty input")
    if a.size == b.size:
        return float(np.abs(a - b).mean())
    xs = np.concatenate([a, b])
    xs.sort(kind="stable")
    fa = np.searchsorted(a, xs[:-1], side="right") / a.size
    fb = np.searchsorted(b, xs[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(xs)))


def sliced_wasserstein(a, b, n_proj: int, rng: np.random.Generator) -> float:
    """Average 1-D Wasserstein distance over random unit-vector projections."""
    pa = a.points if isinstance(a, Batch) else np.asarray(a, dtype=np.float64)
    pb = b.points if isinstance(b, Batch) else np.asarray(b, dtype=np.float64)
    pa, pb = np.atleast_2d(pa), np.atleast_2d(pb)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"dim mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    total = 0.0
    for _ in range(n_proj):
        v = rng.standard_normal(pa.shape[1])
        v /= np.sqrt((v * v).sum())
        total += wasserstein_1d(pa @ v, pb @ v)
    return total / n_proj


def rolling_variance(series, window: int) -> np.ndarray:
    """Unbiased sample variance over each trailing window; empty when the
    series is shorter than the window."""
    if window < 2:
        raise ValueError("window must be >= 2")
    x = np.asarray(series, dtype=np.float64)
    if x.size < window:
        return np.empty(0)
    views = np.lib.stride_tricks.sliding_window_view(x, window)
    return views.var(axis=1, ddof=1)


def detect_collapse(record, criteria: CollapseCriteria = CollapseCriteria()) -> bool:
    """Collapse per the adapted rule; see the module docstring."""
    if record.collapsed or record.abort_reason is not None:
        return True
    if record.snapshots:
        if record.snapshots[-1].modes_covered < criteria.coverage_floor:
            return True
    critic_losses = np.array([s.critic_loss for s in record.steps
                              if s.phase == "critic"], dtype=np.float64)
    if critic_losses.size >= criteria.window:
        tail = critic_losses[-criteria.window:]
        if abs(tail.mean()) > criteria.loss_abs_ceiling:
            return True
        if tail.std(ddof=1) < criteria.loss_std_floor:
            return True
    return False
