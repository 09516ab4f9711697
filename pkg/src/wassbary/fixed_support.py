"""Barycenter weights on a fixed support via accelerated mirror descent.

The objective is the mean smoothed transport cost from the candidate weights
to the input measures.  Its gradient along the simplex is the average of the
per-measure zero-sum smoothed dual vectors, so each outer iteration costs one
warm-started scaling solve per measure.  Updates are multiplicative
(entropic mirror steps) with Nesterov-style averaging, projected onto the
requested weight constraint set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_points, as_weights
from .measures import (
    DiscreteMeasure,
    EntropyLevelSet,
    FullSimplex,
    UniformSingleton,
    build_cost_matrix,
    entropy,
    parse_constraint,
)
from .sinkhorn import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    TransportBatch,
    _lower_median,
)

__all__ = [
    "TraceRecord",
    "BarycenterTrace",
    "mirror_step",
    "barycenter_subgradient",
    "minimize_weights",
    "WeightsResult",
    "FixedSupportBarycenter",
]

POSITIVITY_FLOOR = 1e-300


@dataclass(frozen=True)
class TraceRecord:
    """One outer iteration: objective, movement, inner effort, iterate."""

    iteration: int
    objective: float
    step_norm: float
    inner_iterations: int
    wall_ms: float
    weights: np.ndarray


@dataclass
class BarycenterTrace:
    """Per-iteration history of a barycenter run."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])


def _multiplicative_update(weights: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    # Shift-invariant form of w * exp(-g) / Z; the max shift keeps the
    # normalized result away from exact zero no matter how large the scaled
    # gradient gets.
    logits = np.log(weights) - gradient
    if not np.all(np.isfinite(logits)):
        raise ValueError("multiplicative update overflowed; reduce the step size")
    scaled = np.exp(logits - logits.max())
    np.maximum(scaled, POSITIVITY_FLOOR, out=scaled)
    return scaled / scaled.sum()


def _tempered_softmax(logits: np.ndarray, nu: float) -> np.ndarray:
    z = logits / (1.0 + nu)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def mirror_step(weights, gradient, constraint=FullSimplex()) -> np.ndarray:
    """Entropic proximal step from ``weights`` along ``gradient`` into the constraint set.

    FullSimplex applies the normalized multiplicative update
    w * exp(-g) / Z.  UniformSingleton ignores the gradient and returns the
    uniform vector.  EntropyLevelSet(tau) tempers the multiplicative update,
    c proportional to exp((log w - g) / (1 + nu)), with the smallest nu >= 0
    for which the entropy of c reaches tau (found by bisection to 1e-8 when
    the constraint is active).
    """
    w = as_weights(weights, "weights", positive=True)
    g = np.asarray(gradient, dtype=float)
    if g.shape != w.shape:
        raise ValueError(f"gradient shape {g.shape} does not match weights {w.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient contains non-finite values")
    constraint = parse_constraint(constraint)
    if isinstance(constraint, UniformSingleton):
        return np.full(w.size, 1.0 / w.size)
    candidate = _multiplicative_update(w, g)
    if isinstance(constraint, FullSimplex):
        return candidate
    constraint.validate_dim(w.size)
    if entropy(candidate) >= constraint.tau:
        return candidate
    logits = np.log(w) - g
    hi = 1.0
    while entropy(_tempered_softmax(logits, hi)) < constraint.tau:
        hi *= 2.0
        if hi > 1e18:
            break
    lo = 0.0
    result = _tempered_softmax(logits, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        cand = _tempered_softmax(logits, mid)
        h = entropy(cand)
        if abs(h - constraint.tau) <= 1e-8:
            return cand
        if h >= constraint.tau:
            hi, result = mid, cand
        else:
            lo = mid
    return result


def barycenter_subgradient(
    a,
    support,
    measures,
    lam: float,
    *,
    p: float = 2.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    log_domain: bool = False,
) -> np.ndarray:
    """Average of the per-measure smoothed dual vectors at weights ``a``.

    This is the simplex-tangent gradient of the mean smoothed transport cost
    from (support, a) to the given measures; it sums to zero by construction.
    """
    X = as_points(support, "support")
    measures = coerce_measures(measures, X.shape[0])
    targets = [
        (nu.weights, build_cost_matrix(X, nu.support, p).entries) for nu in measures
    ]
    batch = TransportBatch(targets, lam, tol=tol, max_iter=max_iter, log_domain=log_domain)
    solutions = batch.solve(as_weights(a, "a", positive=True))
    return np.mean([sol.alpha for sol in solutions], axis=0)


def coerce_measures(measures, dim: int | None = None) -> list[DiscreteMeasure]:
    """Validate a non-empty list of measures sharing one ambient dimension."""
    if isinstance(measures, DiscreteMeasure):
        measures = [measures]
    out = list(measures)
    if not out:
        raise ValueError("need at least one input measure")
    for nu in out:
        if not isinstance(nu, DiscreteMeasure):
            raise TypeError(f"expected DiscreteMeasure, got {type(nu).__name__}")
    dims = {nu.dim for nu in out}
    if len(dims) > 1:
        raise ValueError(f"input measures live in different dimensions: {sorted(dims)}")
    if dim is not None and out[0].dim != dim:
        raise ValueError(
            f"measures have dimension {out[0].dim} but the support has dimension {dim}"
        )
    return out


def resolve_lambda(lam, cost_matrices) -> float:
    """Resolve 'auto' to 60 over the lower median of pooled positive costs."""
    if lam == "auto":
        pooled = np.concatenate([C[C > 0].ravel() for C in cost_matrices])
        if pooled.size == 0:
            raise ValueError("cost matrices have no positive entries; pass lam explicitly")
        return 60.0 / _lower_median(pooled)
    value = float(lam)
    if value <= 0:
        raise ValueError(f"regularization strength must be positive, got {lam}")
    return value


@dataclass(frozen=True)
class WeightsResult:
    """Outcome of a weight minimization run (best iterate seen)."""

    weights: np.ndarray
    objective: float
    converged: bool
    n_iter: int
    step_size: float
    trace: BarycenterTrace


def _descend(
    batch: TransportBatch,
    constraint,
    a0: np.ndarray,
    *,
    step_size,
    max_iter: int,
    tol: float,
    window: int,
    allow_abort: bool,
):
    """One accelerated mirror-descent run; returns None if the probe aborts."""
    a_til = a0.copy()
    a_hat = a0.copy()
    trace = BarycenterTrace()
    objectives: list[float] = []
    best_obj = np.inf
    best_a = a0.copy()
    converged = False
    prev_a = None
    t0 = None if step_size == "auto" else float(step_size)
    t = 1
    for it in range(1, max_iter + 1):
        tic = time.perf_counter()
        beta = (t + 1) / 2.0
        a = (1.0 - 1.0 / beta) * a_hat + (1.0 / beta) * a_til
        solutions = batch.solve(a)
        alpha_bar = np.mean([sol.alpha for sol in solutions], axis=0)
        objective = float(np.mean([sol.transport_cost for sol in solutions]))
        objectives.append(objective)
        if objective < best_obj:
            best_obj = objective
            best_a = a.copy()
        step_norm = 0.0 if prev_a is None else float(np.abs(a - prev_a).sum())
        prev_a = a
        inner = int(sum(sol.iterations for sol in solutions))
        wall_ms = (time.perf_counter() - tic) * 1e3
        trace.append(TraceRecord(it, objective, step_norm, inner, wall_ms, a.copy()))
        # Divergence probe: a materially higher objective after five
        # iterations means the step overshoots; the 1% slack keeps warm-
        # started, already-converged runs from false-triggering on noise.
        if allow_abort and it == 5 and objectives[4] > objectives[0] * 1.01 + 1e-12:
            return None, t0
        if isinstance(constraint, UniformSingleton):
            converged = True
            break
        if it > window:
            ref = objectives[-1 - window]
            if abs(objectives[-1] - ref) <= tol * max(1.0, abs(ref)):
                converged = True
                break
        if t0 is None:
            # 'auto': normalize by the first gradient's magnitude so the
            # multiplicative update is scale-free in the cost units.
            scale = float(np.abs(alpha_bar).max())
            t0 = 1.0 if scale == 0.0 else 1.0 / scale
        a_til = mirror_step(a_til, t0 * beta * alpha_bar, constraint)
        a_hat = (1.0 - 1.0 / beta) * a_hat + (1.0 / beta) * a_til
        t += 1
    if t0 is None:
        t0 = float("nan")
    return (best_a, best_obj, converged, trace), t0


def minimize_weights(
    batch: TransportBatch,
    constraint,
    n_atoms: int,
    *,
    step_size=1.0,
    max_iter: int = 300,
    tol: float = 1e-6,
    window: int = 5,
    a0=None,
    max_step_halvings: int = 10,
) -> WeightsResult:
    """Minimize the mean smoothed transport cost over the constrained simplex.

    Runs accelerated entropic mirror descent against the subproblems held by
    ``batch``, starting from ``a0`` (default: the constraint's prox center,
    the uniform vector).  ``step_size`` may be 'auto' to normalize the step
    by the first gradient's magnitude.  If the objective after five
    iterations exceeds the starting objective the run restarts with half the
    step size, up to ``max_step_halvings`` times.  Acceleration is not
    monotone, so the best iterate seen is returned.
    """
    constraint = parse_constraint(constraint)
    if isinstance(constraint, EntropyLevelSet):
        constraint.validate_dim(n_atoms)
    if a0 is None:
        a0 = constraint.initial(n_atoms)
    else:
        a0 = as_weights(a0, "a0", positive=True)
        if a0.size != n_atoms:
            raise ValueError(f"a0 has length {a0.size}, expected {n_atoms}")
    if step_size != "auto" and float(step_size) <= 0:
        raise ValueError(f"step size must be positive or 'auto', got {step_size}")
    t0 = step_size
    for halving in range(max_step_halvings + 1):
        outcome, used_t0 = _descend(
            batch,
            constraint,
            a0,
            step_size=t0,
            max_iter=max_iter,
            tol=tol,
            window=window,
            allow_abort=halving < max_step_halvings,
        )
        if outcome is not None:
            break
        t0 = 0.5 * used_t0
    best_a, best_obj, converged, trace = outcome
    return WeightsResult(best_a, best_obj, converged, len(trace), used_t0, trace)


class FixedSupportBarycenter(BaseEstimator):
    """Barycenter of measures over a prescribed support, optimizing weights only.

    Fitting minimizes the mean smoothed transport cost from the candidate
    weight vector (on ``support``) to the input measures.  The reported
    objective is the unregularized transport cost of the smoothed plans,
    which keeps it comparable with the exact solver.

    Parameters
    ----------
    support : (d, n) array of support columns (1-D input is points on the line).
    p : ground-cost exponent, >= 1.
    constraint : 'simplex', 'uniform', 'entropy:<tau>' or a constraint object.
    lam : smoothing strength, or 'auto' for 60 over the lower median of the
        pooled positive cost entries.
    step_size : initial mirror-descent step; halved automatically (up to ten
        times) if the objective climbs over the first five iterations.
    max_iter, tol, window : outer-loop budget and the objective-change
        stopping rule (relative change over ``window`` iterations).
    inner_tol, inner_max_iter, log_domain : scaling-solver controls.

    Attributes after ``fit``: ``weights_``, ``objective_``, ``trace_``,
    ``n_iter_``, ``lambda_``, ``converged_``, ``step_size_``.
    """

    def __init__(
        self,
        support=None,
        *,
        p: float = 2.0,
        constraint="simplex",
        lam="auto",
        step_size: float = 1.0,
        max_iter: int = 300,
        tol: float = 1e-6,
        window: int = 5,
        inner_tol: float = DEFAULT_TOL,
        inner_max_iter: int = DEFAULT_MAX_ITER,
        log_domain: bool = False,
    ):
        self.support = support
        self.p = p
        self.constraint = constraint
        self.lam = lam
        self.step_size = step_size
        self.max_iter = max_iter
        self.tol = tol
        self.window = window
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.log_domain = log_domain

    def fit(self, measures, y=None):
        if self.support is None:
            raise ValueError("support must be provided")
        X = as_points(self.support, "support")
        n = X.shape[1]
        ms = coerce_measures(measures, X.shape[0])
        constraint = parse_constraint(self.constraint)
        costs = [build_cost_matrix(X, nu.support, self.p).entries for nu in ms]
        lam = resolve_lambda(self.lam, costs)
        batch = TransportBatch(
            [(nu.weights, C) for nu, C in zip(ms, costs)],
            lam,
            tol=self.inner_tol,
            max_iter=self.inner_max_iter,
            log_domain=self.log_domain,
        )
        result = minimize_weights(
            batch,
            constraint,
            n,
            step_size=self.step_size,
            max_iter=self.max_iter,
            tol=self.tol,
            window=self.window,
        )
        self.weights_ = result.weights
        self.objective_ = result.objective
        self.trace_ = result.trace
        self.n_iter_ = result.n_iter
        self.lambda_ = lam
        self.converged_ = result.converged
        self.step_size_ = result.step_size
        return self
