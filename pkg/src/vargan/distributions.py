"""Synthetic target distributions with exact densities, plus seeded
samplers for data, latent noise, and real-fake interpolates.

All continuous kinds are isotropic Gaussian mixtures, so the density is
evaluated exactly (log-sum-exp stabilized) and the finite-space engine
can reuse the same machinery through the categorical kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DistSpec",
    "Batch",
    "ring",
    "grid",
    "mixture1d",
    "categorical",
    "sample_real",
    "density",
    "log_density",
    "sample_noise",
    "interpolate",
]

KINDS = ("gaussian-ring", "gaussian-grid", "mixture-1d", "categorical")
PROVENANCES = ("real", "fake", "interpolated", "noise")


@dataclass(frozen=True)
class Batch:
    """A set of points: (n, d) float64 rows, or (n,) int64 categorical
    indices, together with where they came from."""

    points: np.ndarray
    provenance: str = "real"

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.dtype.kind == "i":
            pts = pts.astype(np.int64)
        else:
            pts = pts.astype(np.float64)
            if not np.all(np.isfinite(pts)):
                raise ValueError("non-finite batch entries")
        if pts.shape[0] < 1:
            raise ValueError("empty batch")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]


@dataclass(frozen=True)
class DistSpec:
    """One of four target families; use the factory helpers below."""

    kind: str
    modes: int = 8
    radius: float = 2.0
    sigma: float = 0.05
    rows: int = 3
    cols: int = 3
    spacing: float = 2.0
    weights: tuple = ()
    means: tuple = ()
    sigmas: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "gaussian-ring":
            if self.modes < 1 or self.sigma <= 0:
                raise ValueError("ring needs modes >= 1 and sigma > 0")
        elif self.kind == "gaussian-grid":
            if self.rows < 1 or self.cols < 1 or self.sigma <= 0:
                raise ValueError("grid needs rows, cols >= 1 and sigma > 0")
        elif self.kind == "mixture-1d":
            w = np.asarray(self.weights, dtype=np.float64)
            if w.size == 0 or abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
                raise ValueError("mixture weights must be a pmf")
            if len(self.means) != w.size or len(self.sigmas) != w.size:
                raise ValueError("weights/means/sigmas lengths differ")
            if min(self.sigmas) <= 0:
                raise ValueError("sigmas must be positive")
        else:
            p = np.asarray(self.probs, dtype=np.float64)
            if p.size < 1 or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
                raise ValueError("categorical probs must be a pmf")

    @property
    def dim(self) -> int:
        if self.kind == "mixture-1d":
            return 1
        if self.kind == "categorical":
            return 0
        return 2

    def components(self):
        """(weights (K,), centers (K, d), sigmas (K,)) of the mixture."""
        if self.kind == "gaussian-ring":
            k = np.arange(self.modes)
            ang = 2.0 * np.pi * k / self.modes
            centers = self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
            w = np.full(self.modes, 1.0 / self.modes)
            s = np.full(self.modes, self.sigma)
            return w, centers, s
        if self.kind == "gaussian-grid":
            xs = (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.spacing
            ys = (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.spacing
            centers = np.array([[x, y] for y in ys for x in xs])
            k = self.rows * self.cols
            return np.full(k, 1.0 / k), centers, np.full(k, self.sigma)
        if self.kind == "mixture-1d":
            return (np.asarray(self.weights, dtype=np.float64),
                    np.asarray(self.means, dtype=np.float64)[:, None],
                    np.asarray(self.sigmas, dtype=np.float64))
        raise ValueError("categorical distributions have no Gaussian components")


def ring(modes: int = 8, radius: float = 2.0, sigma: float = 0.05) -> DistSpec:
    return DistSpec("gaussian-ring", modes=modes, radius=radius, sigma=sigma)


def grid(rows: int = 5, cols: int = 5, spacing: float = 2.0,
         sigma: float = 0.05) -> DistSpec:
    return DistSpec("gaussian-grid", rows=rows, cols=cols, spacing=spacing,
                    sigma=sigma)


def mixture1d(weights, means, sigmas) -> DistSpec:
    return DistSpec("mixture-1d", weights=tuple(weights), means=tuple(means),
                    sigmas=tuple(sigmas))


def categorical(probs) -> DistSpec:
    return DistSpec("categorical", probs=tuple(probs))


def sample_real(spec: DistSpec, n: int, rng: np.random.Generator) -> Batch:
    """n i.i.d. draws from the target; pure function of (spec, n, stream)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind == "categorical":
        p = np.asarray(spec.probs, dtype=np.float64)
        idx = rng.choice(p.size, size=n, p=p / p.sum())
        return Batch(idx.astype(np.int64), "real")
    w, centers, sigmas = spec.components()
    idx = rng.choice(w.size, size=n, p=w)
    eps = rng.standard_normal((n, centers.shape[1]))
    pts = centers[idx] + sigmas[idx, None] * eps
    return Batch(pts, "real")


def log_density(spec: DistSpec, x) -> np.ndarray:
    """Exact mixture log-density at each row of x (log-sum-exp stabilized)."""
    if spec.kind == "categorical":
        raise ValueError("use density() for categorical pmf lookups")
    w, centers, sigmas = spec.components()
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if pts.shape[1] != centers.shape[1]:
        raise ValueError(f"point dim {pts.shape[1]} != spec dim {centers.shape[1]}")
    d = centers.shape[1]
    # (n, K) squared distances
    sq = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    log_comp = (np.log(w)[None, :]
                - 0.5 * sq / (sigmas ** 2)[None, :]
                - d * np.log(sigmas)[None, :]
                - 0.5 * d * np.log(2.0 * np.pi))
    m = log_comp.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(log_comp - m).sum(axis=1, keepdims=True))).ravel()


def density(spec: DistSpec, x) -> np.ndarray | float:
    """Exact pdf (continuous kinds) or pmf lookup (categorical)."""
    if spec.kind == "categorical":
        p = np.asarray(spec.probs, dtype=np.float64)
        idx = np.asarray(x, dtype=np.int64)
        return p[idx]
    out = np.exp(log_density(spec, x))
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def sample_noise(dim: int, n: int, rng: np.random.Generator) -> Batch:
    """n i.i.d. standard-normal latent vectors."""
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be >= 1")
    return Batch(rng.standard_normal((n, dim)), "noise")


def interpolate(real: Batch, fake: Batch, rng: np.random.Generator,
                u: np.ndarray | None = None) -> Batch:
    """Per-pair point on the segment: u * real + (1 - u) * fake, u ~ U[0, 1]."""
    a, b = real.points, fake.points
    if a.shape != b.shape:
        raise ValueError(f"batch shapes differ: {a.shape} vs {b.shape}")
    if u is None:
        u = rng.uniform(0.0, 1.0, size=(a.shape[0], 1))
    else:
        u = np.asarray(u, dtype=np.float64).reshape(a.shape[0], 1)
    return Batch(u * a + (1.0 - u) * b, "interpolated")
