"""Synthetic inputs for the demo drivers and the test suite.

Nested-ellipse images are the grayscale histograms the image-barycenter demo
averages; the weighted Gaussian-mixture clouds stand in for census-style
point data in the clustering comparison.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "nested_ellipses_image",
    "nested_ellipses_dataset",
    "gaussian_mixture_cloud",
]


def _ring(xx, yy, center, radii, angle, band):
    c, s = np.cos(angle), np.sin(angle)
    dx = xx - center[0]
    dy = yy - center[1]
    rx = (c * dx + s * dy) / radii[0]
    ry = (-s * dx + c * dy) / radii[1]
    q = np.sqrt(rx * rx + ry * ry)
    return np.exp(-(((q - 1.0) / band) ** 2))


def nested_ellipses_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """One (size, size) image of two nested random ellipse outlines.

    Intensities live in [0, 1]; faint background below 5 percent of the peak
    is cut to exact zero so the measure support stays sparse.
    """
    xx, yy = np.meshgrid(
        np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij"
    )
    center = rng.uniform(0.42, 0.58, size=2)
    outer = rng.uniform(0.26, 0.38, size=2)
    inner = outer * rng.uniform(0.45, 0.65)
    angle = rng.uniform(0.0, np.pi)
    band = 2.0 / size
    img = np.maximum(
        _ring(xx, yy, center, outer, angle, band),
        _ring(xx, yy, center, inner, angle, band),
    )
    img[img < 0.05] = 0.0
    if not np.any(img > 0):
        # Degenerate draw (possible only for very coarse grids): light the center.
        img[size // 2, size // 2] = 1.0
    return img


def nested_ellipses_dataset(count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """``count`` independent nested-ellipse images, deterministic per seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return [nested_ellipses_image(size, rng) for _ in range(count)]


def gaussian_mixture_cloud(
    n_points: int = 200,
    n_components: int = 5,
    seed: int = 0,
    dim: int = 2,
):
    """Weighted point cloud from a mixture of anisotropic Gaussians.

    Components sit inside the unit box (the same coordinate convention the
    image measures use), and per-point weights follow a power law (Pareto
    tail), mimicking the heavy skew of population or income data.  Returns
    (points (dim, n), weights summing to one).
    """
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.15, 0.85, size=(n_components, dim))
    points = np.empty((dim, n_points))
    assignment = rng.integers(0, n_components, size=n_points)
    for comp in range(n_components):
        mask = assignment == comp
        count = int(mask.sum())
        if count == 0:
            continue
        A = rng.normal(scale=0.06, size=(dim, dim))
        cov = A @ A.T + 0.002 * np.eye(dim)
        points[:, mask] = rng.multivariate_normal(centers[comp], cov, size=count).T
    weights = rng.pareto(2.5, size=n_points) + 0.05
    weights = weights / weights.sum()
    return points, weights
