"""Free-support barycenter: alternating weight and location optimization.

Locations use the closed-form quadratic step for squared-Euclidean ground
cost: each atom moves toward the transport-weighted mean of the target atoms
it serves, X <- (1-theta) X + theta (mean_i Y_i T_i^T) diag(1/a).  Weights
re-run the fixed-support solver on the current locations.  With a single
input measure and free weights this alternation reduces to Lloyd's k-means;
with uniform weights it is balanced (capacity-constrained) clustering.
"""

from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_points, as_weights
from .exact import solve_primal
from .fixed_support import (
    BarycenterTrace,
    TraceRecord,
    coerce_measures,
    minimize_weights,
    resolve_lambda,
)
from .measures import (
    FullSimplex,
    UniformSingleton,
    _squared_distances,
    build_cost_matrix,
    parse_constraint,
)
from .sinkhorn import DEFAULT_MAX_ITER, DEFAULT_TOL, TransportBatch

__all__ = [
    "newton_location_update",
    "lloyd_kmeans",
    "FreeSupportBarycenter",
]

LINE_SEARCH_STEPS = (1.0, 0.5, 0.25, 0.125)


def newton_location_update(X, a, plans, theta: float, *, freeze_below: float = 0.0):
    """Relaxed quadratic location step for squared-Euclidean ground cost.

    Args:
        X: (d, k) current atom locations.
        a: strictly positive weights carried by the atoms (row marginals of
            every plan).
        plans: sequence of (T_i, Y_i) pairs, T_i a (k, m_i) coupling (array or
            TransportPlan) and Y_i the (d, m_i) target atoms.
        theta: relaxation in [0, 1]; theta=1 jumps to the transport-weighted
            means, theta=0 is a no-op.
        freeze_below: atoms with weight below this threshold keep their
            location instead of dividing by a vanishing weight.  With the
            default 0.0 a zero weight is an error.

    Returns:
        (d, k) updated locations; every updated column is a convex
        combination of its old position and target atoms.
    """
    X = as_points(X, "X")
    a = as_weights(a, "a")
    if a.size != X.shape[1]:
        raise ValueError(f"weights length {a.size} does not match {X.shape[1]} atoms")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if freeze_below <= 0.0 and np.any(a == 0):
        raise ValueError(
            "atom weight is zero; prune the atom or pass freeze_below to skip it"
        )
    active = a > max(freeze_below, 0.0) if freeze_below > 0.0 else np.ones(a.size, bool)
    plans = list(plans)
    if not plans:
        raise ValueError("need at least one transport plan")
    total = np.zeros_like(X)
    for T, Y in plans:
        T_arr = np.asarray(getattr(T, "matrix", T), dtype=float)
        Y_arr = as_points(Y, "Y")
        if T_arr.shape[0] != X.shape[1] or T_arr.shape[1] != Y_arr.shape[1]:
            raise ValueError(
                f"plan shape {T_arr.shape} does not match {X.shape[1]} atoms and "
                f"{Y_arr.shape[1]} targets"
            )
        total += Y_arr @ T_arr.T
    total /= len(plans)
    X_new = X.copy()
    X_new[:, active] = (1.0 - theta) * X[:, active] + theta * (
        total[:, active] / a[active]
    )
    return X_new


def lloyd_kmeans(points, weights, k: int, *, init=None, seed: int = 0, max_iter: int = 100):
    """Weighted Lloyd k-means on column points.

    Assignment sends each point to its nearest centroid (ties to the lowest
    index); recentering takes mass-weighted means.  An empty cluster is
    re-seeded at the point farthest from its current centroid.  Deterministic
    for a fixed seed.

    Returns (centroids (d, k), labels (m,)).
    """
    Y = as_points(points, "points")
    w = as_weights(weights, "weights")
    m = Y.shape[1]
    if w.size != m:
        raise ValueError(f"weights length {w.size} does not match {m} points")
    distinct = np.unique(Y.T, axis=0).shape[0]
    if k < 1 or k > distinct:
        raise ValueError(f"k must be in [1, {distinct}] (distinct points), got {k}")
    if init is not None:
        centroids = as_points(init, "init").copy()
        if centroids.shape != (Y.shape[0], k):
            raise ValueError(
                f"init has shape {centroids.shape}, expected {(Y.shape[0], k)}"
            )
    else:
        rng = np.random.default_rng(seed)
        probs = w / w.sum() if w.sum() > 0 else None
        idx = rng.choice(m, size=k, replace=False, p=probs)
        centroids = Y[:, idx].copy()
    labels = None
    for _ in range(max_iter):
        d2 = _squared_distances(centroids, Y)
        new_labels = np.argmin(d2, axis=0)
        nearest = d2[new_labels, np.arange(m)]
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(np.argmax(nearest))
                centroids[:, c] = Y[:, far]
                new_labels[far] = c
                nearest[far] = -np.inf
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            mass = w[mask].sum()
            if mass > 0:
                centroids[:, c] = (Y[:, mask] @ w[mask]) / mass
    return centroids, labels


def _nearest_assignment(C: np.ndarray, b: np.ndarray):
    """Exact transport to a single free-weight measure: nearest-atom masses.

    For one target measure with free source weights the optimal coupling
    sends each target atom's mass to its closest source atom, which also
    yields the optimal weights.
    """
    k = C.shape[0]
    nn = np.argmin(C, axis=0)
    plan = np.zeros_like(C)
    plan[nn, np.arange(C.shape[1])] = b
    a = np.bincount(nn, weights=b, minlength=k)
    return a, plan


class FreeSupportBarycenter(BaseEstimator):
    """Barycenter with freely chosen atom locations (squared-Euclidean cost).

    Each outer iteration first re-optimizes the weights on the current atoms
    with the fixed-support solver (warm-started, limited budget), then moves
    the atoms with the relaxed quadratic step.  The relaxation theta comes
    from a backtracking line search over {1, 1/2, 1/4, 1/8}, accepting the
    first candidate that does not increase the objective; after four
    rejections the smallest step is taken unconditionally.  The best iterate
    seen is returned, so the fitted objective never exceeds any accepted one.

    ``plans='smoothed'`` (default) uses entropically smoothed transport
    everywhere.  ``plans='exact'`` uses exact couplings and is supported for
    a single measure with free weights (where the weight step is the
    nearest-atom assignment and the alternation is Lloyd's algorithm) and for
    uniform weights with any number of measures.

    Parameters
    ----------
    n_atoms : atom budget k.
    constraint : weight constraint over the k atoms.
    lam : smoothing strength or 'auto' (resolved once, on the initial atoms).
    step : 'line-search' or a fixed theta in [0, 1].
    init : 'random' (k pooled atoms sampled without replacement, mass-
        weighted, seeded) or a (d, k) array.
    seed : seed for the random init.
    max_iter, tol, window : outer budget and objective stopping rule.
    weight_iters, weight_step_size, weight_tol : budget, step, and stopping
        window for the inner weight runs (loose by default; the alternation
        re-polishes weights every outer round).
    inner_tol, inner_max_iter, log_domain : scaling-solver controls.
    plans : 'smoothed' or 'exact'.
    freeze_tol : atoms with weight below this are frozen during location steps.

    Attributes after ``fit``: ``support_``, ``weights_``, ``objective_``,
    ``trace_``, ``n_iter_``, ``lambda_``, ``converged_``.
    """

    def __init__(
        self,
        n_atoms: int = 8,
        *,
        constraint="simplex",
        lam="auto",
        step="line-search",
        init="random",
        seed: int = 0,
        max_iter: int = 100,
        tol: float = 1e-5,
        window: int = 3,
        weight_iters: int = 50,
        weight_step_size="auto",
        weight_tol: float = 1e-3,
        inner_tol: float = DEFAULT_TOL,
        inner_max_iter: int = DEFAULT_MAX_ITER,
        log_domain: bool = False,
        plans: str = "smoothed",
        freeze_tol: float = 1e-9,
    ):
        self.n_atoms = n_atoms
        self.constraint = constraint
        self.lam = lam
        self.step = step
        self.init = init
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.window = window
        self.weight_iters = weight_iters
        self.weight_step_size = weight_step_size
        self.weight_tol = weight_tol
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.log_domain = log_domain
        self.plans = plans
        self.freeze_tol = freeze_tol

    # -- helpers -----------------------------------------------------------

    def _initial_support(self, measures, rng) -> np.ndarray:
        k = int(self.n_atoms)
        if k < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not isinstance(self.init, str):
            X0 = as_points(self.init, "init").copy()
            if X0.shape != (measures[0].dim, k):
                raise ValueError(
                    f"init has shape {X0.shape}, expected {(measures[0].dim, k)}"
                )
            return X0
        if self.init != "random":
            raise ValueError(f"init must be 'random' or an array, got {self.init!r}")
        pooled = np.hstack([nu.support for nu in measures])
        mass = np.concatenate([nu.weights for nu in measures])
        mass = mass / mass.sum()
        if k > pooled.shape[1]:
            raise ValueError(
                f"n_atoms={k} exceeds the {pooled.shape[1]} pooled input atoms"
            )
        idx = rng.choice(pooled.shape[1], size=k, replace=False, p=mass)
        return pooled[:, idx].copy()

    def _evaluate_smoothed(self, a, X, measures, lam, warm):
        costs = [build_cost_matrix(X, nu.support, 2.0).entries for nu in measures]
        batch = TransportBatch(
            [(nu.weights, C) for nu, C in zip(measures, costs)],
            lam,
            tol=self.inner_tol,
            max_iter=self.inner_max_iter,
            log_domain=self.log_domain,
            warm=list(warm) if warm is not None else None,
        )
        sols = batch.solve(a)
        objective = float(np.mean([s.transport_cost for s in sols]))
        plans = [(s.plan.matrix, nu.support) for s, nu in zip(sols, measures)]
        inner = int(sum(s.iterations for s in sols))
        return objective, plans, batch.warm_starts, inner, batch

    def _evaluate_exact(self, a, X, measures):
        plans = []
        objective = 0.0
        for nu in measures:
            C = build_cost_matrix(X, nu.support, 2.0).entries
            cost, plan = solve_primal(a, nu.weights, C)
            objective += cost
            plans.append((plan.matrix, nu.support))
        return objective / len(measures), plans

    # -- sklearn surface ---------------------------------------------------

    def fit(self, measures, y=None):
        ms = coerce_measures(measures)
        k = int(self.n_atoms)
        constraint = parse_constraint(self.constraint)
        if self.plans not in ("smoothed", "exact"):
            raise ValueError(f"plans must be 'smoothed' or 'exact', got {self.plans!r}")
        exact = self.plans == "exact"
        if exact and not (
            isinstance(constraint, UniformSingleton)
            or (isinstance(constraint, FullSimplex) and len(ms) == 1)
        ):
            raise ValueError(
                "plans='exact' supports a single measure with the simplex "
                "constraint, or the uniform constraint"
            )
        if isinstance(self.step, str):
            if self.step != "line-search":
                raise ValueError(f"step must be 'line-search' or a float, got {self.step!r}")
            thetas = LINE_SEARCH_STEPS
            line_search = True
        else:
            theta = float(self.step)
            if not 0.0 <= theta <= 1.0:
                raise ValueError(f"step must lie in [0, 1], got {self.step}")
            thetas = (theta,)
            line_search = False

        rng = np.random.default_rng(self.seed)
        X = self._initial_support(ms, rng)
        a = constraint.initial(k)
        lam = None
        warm = None
        if not exact:
            costs0 = [build_cost_matrix(X, nu.support, 2.0).entries for nu in ms]
            lam = resolve_lambda(self.lam, costs0)

        trace = BarycenterTrace()
        objectives: list[float] = []
        best = (np.inf, X.copy(), a.copy())
        converged = False
        for outer in range(1, int(self.max_iter) + 1):
            tic = time.perf_counter()
            inner_total = 0
            # Weight step on the current locations.
            if exact:
                if isinstance(constraint, UniformSingleton):
                    a = constraint.initial(k)
                    current_obj, plans = self._evaluate_exact(a, X, ms)
                else:
                    C = build_cost_matrix(X, ms[0].support, 2.0).entries
                    a, plan = _nearest_assignment(C, ms[0].weights)
                    current_obj = float((plan * C).sum())
                    plans = [(plan, ms[0].support)]
            else:
                costs = [build_cost_matrix(X, nu.support, 2.0).entries for nu in ms]
                batch = TransportBatch(
                    [(nu.weights, C) for nu, C in zip(ms, costs)],
                    lam,
                    tol=self.inner_tol,
                    max_iter=self.inner_max_iter,
                    log_domain=self.log_domain,
                    warm=list(warm) if warm is not None else None,
                )
                # Exact inner convergence is wasteful: weights get re-polished
                # every outer round, so the inner run stops on a loose window.
                wres = minimize_weights(
                    batch,
                    constraint,
                    k,
                    step_size=self.weight_step_size,
                    max_iter=self.weight_iters,
                    tol=self.weight_tol,
                    a0=a,
                )
                a = wres.weights
                inner_total += int(sum(r.inner_iterations for r in wres.trace))
                current_obj, plans, warm, extra, _ = self._evaluate_smoothed(
                    a, X, ms, lam, batch.warm_starts
                )
                inner_total += extra

            # Location step with line search on the objective at fixed weights.
            X_prev = X
            accepted = None
            for attempt, theta in enumerate(thetas):
                X_candidate = newton_location_update(
                    X, a, plans, theta, freeze_below=self.freeze_tol
                )
                if exact:
                    cand_obj, cand_plans = self._evaluate_exact(a, X_candidate, ms)
                    cand_warm = warm
                else:
                    cand_obj, cand_plans, cand_warm, extra, _ = self._evaluate_smoothed(
                        a, X_candidate, ms, lam, warm
                    )
                    inner_total += extra
                last = attempt == len(thetas) - 1
                if (
                    not line_search
                    or cand_obj <= current_obj + 1e-12 * max(1.0, abs(current_obj))
                    or last
                ):
                    accepted = (X_candidate, cand_obj, cand_warm)
                    break
            X, objective, warm = accepted
            objectives.append(objective)
            if objective < best[0]:
                best = (objective, X.copy(), a.copy())
            step_norm = float(np.linalg.norm(X - X_prev))
            wall_ms = (time.perf_counter() - tic) * 1e3
            trace.append(
                TraceRecord(outer, objective, step_norm, inner_total, wall_ms, a.copy())
            )
            if outer > self.window:
                ref = objectives[-1 - self.window]
                if abs(objectives[-1] - ref) <= self.tol * max(1.0, abs(ref)):
                    converged = True
                    break

        self.objective_, self.support_, self.weights_ = best
        self.trace_ = trace
        self.n_iter_ = len(trace)
        self.lambda_ = lam
        self.converged_ = converged
        return self

    def predict(self, points):
        """Nearest-atom index for row-major points (n_samples, d)."""
        self._check_fitted()
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[:, np.newaxis]
        d2 = _squared_distances(self.support_, P.T)
        return np.argmin(d2, axis=0)

    def transform(self, points):
        """Euclidean distances (n_samples, n_atoms) to the fitted atoms."""
        self._check_fitted()
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[:, np.newaxis]
        return np.sqrt(_squared_distances(P.T, self.support_))

    def _check_fitted(self):
        if not hasattr(self, "support_"):
            raise RuntimeError("estimator is not fitted; call fit first")
