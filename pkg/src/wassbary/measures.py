"""Empirical measures, ground-cost matrices, and weight constraint sets.

A discrete measure is a weighted point set: support columns in R^d and a
weight vector on the probability simplex.  Cost matrices hold pairwise
distances raised to a power p; for p=2 they are built through the Gram
decomposition so the location solvers can reuse the same algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_points, as_weights

__all__ = [
    "DiscreteMeasure",
    "CostMatrix",
    "FullSimplex",
    "UniformSingleton",
    "EntropyLevelSet",
    "WeightConstraint",
    "parse_constraint",
    "build_cost_matrix",
    "normalize_weights",
    "measure_from_image",
    "entropy",
]


def normalize_weights(raw) -> np.ndarray:
    """Scale a nonnegative weight vector so it sums to one.

    Raises ValueError for negative entries or an all-zero vector.
    """
    w = as_weights(raw, "weights")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("weights must contain at least one positive entry")
    return w / total


def entropy(weights) -> float:
    """Shannon entropy -sum w log w in nats, with 0 log 0 = 0."""
    w = np.asarray(weights, dtype=float)
    positive = w[w > 0]
    return float(-(positive * np.log(positive)).sum())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Empirical measure with support columns (d, n) and simplex weights (n,).

    Weights are normalized to sum to one at construction; both arrays are
    stored read-only so measures can be shared freely across threads.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = as_points(self.support, "support")
        weights = normalize_weights(self.weights)
        if support.shape[1] != weights.shape[0]:
            raise ValueError(
                f"support has {support.shape[1]} atoms but weights has length {weights.shape[0]}"
            )
        support = support.copy()
        weights = weights.copy()
        support.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.support.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.support.shape[1]

    @classmethod
    def from_rows(cls, points, weights=None) -> "DiscreteMeasure":
        """Build a measure from row-major points (n, d), uniform if no weights."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, np.newaxis]
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return cls(pts.T, weights)

    def pruned(self, threshold: float = 0.0) -> "DiscreteMeasure":
        """Drop atoms whose weight is <= threshold and renormalize."""
        keep = self.weights > threshold
        if not np.any(keep):
            raise ValueError("pruning would remove every atom")
        return DiscreteMeasure(self.support[:, keep], self.weights[keep])


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise ground costs: distances between two point lists raised to ``power``."""

    entries: np.ndarray
    power: float
    metric: str

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError(f"cost entries must be 2-D, got shape {entries.shape}")
        if np.any(entries < 0) or not np.all(np.isfinite(entries)):
            raise ValueError("cost entries must be finite and nonnegative")
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @classmethod
    def from_entries(cls, entries, power: float = 1.0) -> "CostMatrix":
        """Wrap a precomputed cost matrix."""
        return cls(entries, float(power), "precomputed")


def _squared_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Gram decomposition; round-off can produce tiny negatives, clamp before
    # any fractional power.
    x = (X * X).sum(axis=0)
    y = (Y * Y).sum(axis=0)
    d2 = x[:, np.newaxis] + y[np.newaxis, :] - 2.0 * (X.T @ Y)
    np.maximum(d2, 0.0, out=d2)
    return d2


def build_cost_matrix(X, Y, p: float = 2.0) -> CostMatrix:
    """Pairwise Euclidean distances between column points, raised to power p.

    Args:
        X: (d, n) source points (1-D input is read as points on the line).
        Y: (d, m) target points.
        p: cost exponent, must be >= 1.

    Returns:
        CostMatrix with entries ||x_i - y_j||_2^p.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(
            f"point dimensions differ: X has d={X.shape[0]}, Y has d={Y.shape[0]}"
        )
    if p < 1.0:
        raise ValueError(f"cost exponent must be >= 1, got {p}")
    d2 = _squared_distances(X, Y)
    if X.shape == Y.shape and np.array_equal(X, Y):
        # Identical point lists must cost exactly zero on the diagonal; the
        # fractional powers below would otherwise amplify Gram round-off.
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    if p == 2.0:
        return CostMatrix(d2, 2.0, "sqeuclidean")
    if p == 1.0:
        return CostMatrix(np.sqrt(d2), 1.0, "euclidean")
    return CostMatrix(np.sqrt(d2) ** p, float(p), "euclidean")


def measure_from_image(image, prune: bool = True) -> DiscreteMeasure:
    """Turn a grayscale intensity grid into a measure on the unit square.

    Pixel (i, j) of an (h, w) image becomes the atom (i/(h-1), j/(w-1)),
    degenerate axes collapsing to coordinate 0.  Intensities are normalized
    to sum to one; zero-intensity pixels are dropped unless ``prune`` is
    False.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if np.any(img < 0):
        raise ValueError("image intensities must be nonnegative")
    if not np.any(img > 0):
        raise ValueError("image has no positive intensity")
    h, w = img.shape
    rows = np.arange(h) / (h - 1) if h > 1 else np.zeros(h)
    cols = np.arange(w) / (w - 1) if w > 1 else np.zeros(w)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    support = np.vstack([ii.ravel(), jj.ravel()])
    weights = img.ravel()
    if prune:
        keep = weights > 0
        support = support[:, keep]
        weights = weights[keep]
    measure = DiscreteMeasure(support, weights)
    return measure


def grid_support(h: int, w: int) -> np.ndarray:
    """Unit-square grid coordinates (2, h*w) matching measure_from_image."""
    rows = np.arange(h) / (h - 1) if h > 1 else np.zeros(h)
    cols = np.arange(w) / (w - 1) if w > 1 else np.zeros(w)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    return np.vstack([ii.ravel(), jj.ravel()])


# ---------------------------------------------------------------------------
# Weight constraint sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullSimplex:
    """No constraint beyond the probability simplex."""

    def initial(self, n: int) -> np.ndarray:
        return np.full(n, 1.0 / n)

    def contains(self, w, tol: float = 1e-10) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.all(w >= -tol) and abs(w.sum() - 1.0) <= tol)


@dataclass(frozen=True)
class UniformSingleton:
    """The single uniform weight vector 1/n."""

    def initial(self, n: int) -> np.ndarray:
        return np.full(n, 1.0 / n)

    def contains(self, w, tol: float = 1e-10) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.all(np.abs(w - 1.0 / w.size) <= tol))


@dataclass(frozen=True)
class EntropyLevelSet:
    """Simplex vectors with entropy at least ``tau`` (tau in [0, log n])."""

    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"entropy threshold must be >= 0, got {self.tau}")

    def validate_dim(self, n: int) -> None:
        if self.tau > np.log(n) + 1e-12:
            raise ValueError(
                f"entropy threshold {self.tau:g} exceeds log(n)={np.log(n):g} for n={n}"
            )

    def initial(self, n: int) -> np.ndarray:
        self.validate_dim(n)
        return np.full(n, 1.0 / n)

    def contains(self, w, tol: float = 1e-10) -> bool:
        w = np.asarray(w, dtype=float)
        on_simplex = bool(np.all(w >= -tol) and abs(w.sum() - 1.0) <= tol)
        return on_simplex and entropy(w) >= self.tau - 1e-8


WeightConstraint = FullSimplex | UniformSingleton | EntropyLevelSet


def parse_constraint(spec) -> WeightConstraint:
    """Parse 'simplex', 'uniform', or 'entropy:<tau>' into a constraint object."""
    if isinstance(spec, (FullSimplex, UniformSingleton, EntropyLevelSet)):
        return spec
    if not isinstance(spec, str):
        raise ValueError(f"cannot interpret weight constraint {spec!r}")
    text = spec.strip().lower()
    if text == "simplex":
        return FullSimplex()
    if text == "uniform":
        return UniformSingleton()
    if text.startswith("entropy:"):
        try:
            tau = float(text.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"malformed entropy constraint {spec!r}") from None
        return EntropyLevelSet(tau)
    raise ValueError(
        f"unknown weight constraint {spec!r}; expected 'simplex', 'uniform', or 'entropy:<tau>'"
    )
