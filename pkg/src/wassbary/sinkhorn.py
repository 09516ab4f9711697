"""Entropically smoothed optimal transport via Sinkhorn matrix scaling.

Two equivalent fixed-point iterations are provided: the plain multiplicative
scaling on the kernel exp(-lam*M), and a log-domain variant whose
log-sum-exp updates survive regularization strengths at which the kernel
underflows.  The scaling pair yields both the smoothed plan
diag(u) K diag(v) and the smoothed dual vector, which after a zero-sum shift
is the gradient of the smoothed dual objective along the weight simplex.

The dual vector returned here is ``(log u - mean(log u)) / lam``.  Writing
the smoothed dual's first-order conditions in terms of the scaling pair
forces ``u = exp(lam * alpha)``; that positive sign is confirmed by the
finite-difference checks in the test suite and is the direction the mirror
descent in :mod:`wassbary.fixed_support` needs in order to descend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_cost_entries, as_weights, check_simplex
from .exact import TransportPlan

__all__ = [
    "SinkhornUnderflowError",
    "NotConvergedError",
    "ScalingPair",
    "LogScalingPair",
    "SmoothedSolution",
    "gibbs_kernel",
    "auto_lambda",
    "sinkhorn_scaling",
    "sinkhorn_log_domain",
    "smoothed_primal",
    "log_domain_plan",
    "smoothed_dual_alpha",
    "smoothed_dual_objective",
    "smoothed_transport",
    "TransportBatch",
    "smoothed_transport_batch",
]

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000
# Marginal error is monitored every this many scaling updates.
CHECK_EVERY = 10


class SinkhornUnderflowError(ArithmeticError):
    """The plain scaling iteration lost all mass to floating-point underflow."""


class NotConvergedError(RuntimeError):
    """A scaling run hit its iteration budget before reaching tolerance."""


@dataclass(frozen=True)
class ScalingPair:
    """Positive scaling vectors (u, v) for the kernel exp(-lam*M)."""

    u: np.ndarray
    v: np.ndarray
    iterations: int
    converged: bool
    marginal_error: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("scaling vectors must be finite")
        if np.any(u <= 0) or np.any(v <= 0):
            raise ValueError("scaling vectors must be strictly positive")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class LogScalingPair:
    """Log-domain potentials (f, g) with f = log(u)/lam, g = log(v)/lam."""

    f: np.ndarray
    g: np.ndarray
    iterations: int
    converged: bool
    marginal_error: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("potentials must be finite")
        f.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class SmoothedSolution:
    """Smoothed transport output for one (a, b, M) subproblem."""

    plan: TransportPlan
    alpha: np.ndarray
    transport_cost: float
    regularized_cost: float
    lam: float
    iterations: int
    converged: bool
    pair: ScalingPair | LogScalingPair


def gibbs_kernel(M, lam: float) -> np.ndarray:
    """Elementwise exponential exp(-lam * M).

    Raises SinkhornUnderflowError when a whole row or column underflows to
    zero, since the plain iteration would then divide by zero.
    """
    C = as_cost_entries(M)
    if lam <= 0:
        raise ValueError(f"regularization strength must be positive, got {lam}")
    K = np.exp(-lam * C)
    if np.any(K.sum(axis=1) == 0.0) or np.any(K.sum(axis=0) == 0.0):
        raise SinkhornUnderflowError(
            "exp(-lam*M) has an all-zero row or column; use the log-domain "
            "variant (sinkhorn_log_domain or log_domain=True)"
        )
    return K


def _lower_median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(ordered.size - 1) // 2])


def auto_lambda(M) -> float:
    """Default regularization strength 60 / median(M).

    The median is the lower median of the strictly positive entries, so
    coincident points do not drag the heuristic to zero.
    """
    C = as_cost_entries(M)
    positive = C[C > 0]
    if positive.size == 0:
        raise ValueError("cost matrix has no positive entries; pass lam explicitly")
    return 60.0 / _lower_median(positive)


def _validate_scaling_inputs(a, b, M, lam, tol):
    a = as_weights(a, "a", positive=True)
    b = as_weights(b, "b", positive=True)
    check_simplex(a, "a")
    check_simplex(b, "b")
    C = as_cost_entries(M)
    if C.shape != (a.size, b.size):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match marginals ({a.size}, {b.size})"
        )
    if lam <= 0:
        raise ValueError(f"regularization strength must be positive, got {lam}")
    if tol < 0:
        raise ValueError(f"tolerance must be nonnegative, got {tol}")
    return a, b, C


def sinkhorn_scaling(
    a,
    b,
    M,
    lam: float,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_u=None,
    check_every: int = CHECK_EVERY,
    kernel: np.ndarray | None = None,
) -> ScalingPair:
    """Run the plain Sinkhorn fixed point u <- a / (K (b / (K^T u))).

    Args:
        a, b: strictly positive simplex weights.
        M: (n, m) cost matrix (or CostMatrix).
        lam: regularization strength, > 0.
        tol: L1 tolerance on the row-marginal violation of diag(u) K diag(v).
        max_iter: cap on the number of u updates.
        warm_u: optional positive starting vector; defaults to ones(n)/n.
        check_every: iterations between convergence checks.
        kernel: optional precomputed exp(-lam*M) to skip rebuilding it.

    Returns:
        ScalingPair whose (u, v) satisfy the column marginal exactly and the
        row marginal within ``marginal_error``; ``converged`` records whether
        ``marginal_error <= tol`` was reached within budget.
    """
    a, b, C = _validate_scaling_inputs(a, b, M, lam, tol)
    K = gibbs_kernel(C, lam) if kernel is None else kernel
    if warm_u is None:
        u = np.full(a.size, 1.0 / a.size)
    else:
        u = as_weights(warm_u, "warm_u", positive=True).copy()
        if u.size != a.size:
            raise ValueError(f"warm_u has length {u.size}, expected {a.size}")
    iterations = 0
    converged = False
    err = np.inf
    while True:
        Ktu = K.T @ u
        if np.any(Ktu <= 0.0) or not np.all(np.isfinite(Ktu)):
            raise SinkhornUnderflowError(
                "scaling iteration underflowed; use the log-domain variant"
            )
        v = b / Ktu
        Kv = K @ v
        if iterations % check_every == 0 or iterations >= max_iter:
            err = float(np.abs(u * Kv - a).sum())
            if err <= tol:
                converged = True
                break
            if iterations >= max_iter:
                break
            # The pair is scale-free, so damp drift with an exact power-of-two
            # rescale; the plan diag(u) K diag(v) is bitwise unchanged.
            umax = float(u.max())
            if umax > 1e150 or umax < 1e-150:
                u = u * 2.0 ** (-round(np.log2(umax)))
                continue
        u = a / Kv
        if not np.all(np.isfinite(u)):
            raise SinkhornUnderflowError(
                "scaling vector overflowed; use the log-domain variant"
            )
        iterations += 1
    return ScalingPair(u, v, iterations, converged, err)


def sinkhorn_log_domain(
    a,
    b,
    M,
    lam: float,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_f=None,
    check_every: int = CHECK_EVERY,
) -> LogScalingPair:
    """Log-sum-exp form of the same fixed point, stable for large lam.

    Mirrors sinkhorn_scaling update for update, so with matching settings the
    two variants agree wherever the plain kernel does not underflow.
    """
    a, b, C = _validate_scaling_inputs(a, b, M, lam, tol)
    neg_lam_M = -lam * C
    log_a = np.log(a)
    log_b = np.log(b)
    if warm_f is None:
        f = np.full(a.size, -np.log(a.size) / lam)
    else:
        f = np.asarray(warm_f, dtype=float).copy()
        if f.shape != (a.size,) or not np.all(np.isfinite(f)):
            raise ValueError("warm_f must be a finite vector matching a")
    iterations = 0
    converged = False
    err = np.inf
    Z = np.empty_like(neg_lam_M)
    while True:
        # g-step: column log-sum-exp of lam*f + (-lam*M), hand-rolled to keep
        # the inner loop allocation-free.
        np.add(neg_lam_M, (lam * f)[:, np.newaxis], out=Z)
        cmax = Z.max(axis=0)
        np.subtract(Z, cmax[np.newaxis, :], out=Z)
        np.exp(Z, out=Z)
        g = (log_b - (cmax + np.log(Z.sum(axis=0)))) / lam
        # row log-sum-exp of lam*g + (-lam*M), shared by the marginal check
        # and the f update.
        np.add(neg_lam_M, (lam * g)[np.newaxis, :], out=Z)
        rmax = Z.max(axis=1)
        np.subtract(Z, rmax[:, np.newaxis], out=Z)
        np.exp(Z, out=Z)
        s = rmax + np.log(Z.sum(axis=1))
        if iterations % check_every == 0 or iterations >= max_iter:
            err = float(np.abs(np.exp(lam * f + s) - a).sum())
            if err <= tol:
                converged = True
                break
            if iterations >= max_iter:
                break
        f = (log_a - s) / lam
        iterations += 1
    return LogScalingPair(f, g, iterations, converged, err)


def _require_converged(pair, force: bool):
    if not pair.converged and not force:
        raise NotConvergedError(
            f"scaling run stopped after {pair.iterations} iterations with "
            f"marginal error {pair.marginal_error:.3g}; pass force=True to "
            "extract anyway"
        )


def smoothed_primal(pair: ScalingPair, K, *, force: bool = False) -> np.ndarray:
    """Smoothed plan diag(u) K diag(v) from a converged plain scaling pair."""
    _require_converged(pair, force)
    return pair.u[:, np.newaxis] * K * pair.v[np.newaxis, :]


def log_domain_plan(pair: LogScalingPair, M, lam: float, *, force: bool = False) -> np.ndarray:
    """Smoothed plan exp(lam*(f + g - M)) from a log-domain pair."""
    _require_converged(pair, force)
    C = as_cost_entries(M)
    return np.exp(lam * (pair.f[:, np.newaxis] + pair.g[np.newaxis, :] - C))


def smoothed_dual_alpha(pair, lam: float, *, force: bool = False) -> np.ndarray:
    """Zero-sum smoothed dual vector; the simplex-tangent gradient of the
    smoothed dual objective with respect to the row weights."""
    _require_converged(pair, force)
    if isinstance(pair, LogScalingPair):
        f = pair.f
        return f - f.mean()
    log_u = np.log(pair.u)
    return (log_u - log_u.mean()) / lam


def smoothed_dual_objective(
    a,
    b,
    M,
    lam: float,
    *,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
    log_domain: bool = False,
    warm=None,
) -> float:
    """Optimal value of the smoothed dual problem.

    Evaluates alpha^T a + beta^T b - sum_ij exp(-lam*(m_ij - alpha_i - beta_j))/lam
    at the computed potentials.  Because this is the exact dual objective at a
    feasible point of an unconstrained maximization, its error is second order
    in the potential error, which makes it a solid target for finite
    differences.
    """
    a_arr, b_arr, C = _validate_scaling_inputs(a, b, M, lam, tol)
    if log_domain:
        pair = sinkhorn_log_domain(a_arr, b_arr, C, lam, tol=tol, max_iter=max_iter, warm_f=warm)
        f, g = pair.f, pair.g
        mass = float(np.exp(lam * (f[:, np.newaxis] + g[np.newaxis, :] - C)).sum())
    else:
        pair = sinkhorn_scaling(a_arr, b_arr, C, lam, tol=tol, max_iter=max_iter, warm_u=warm)
        _require_converged(pair, False)
        f = np.log(pair.u) / lam
        g = np.log(pair.v) / lam
        K = gibbs_kernel(C, lam)
        mass = float((pair.u[:, np.newaxis] * K * pair.v[np.newaxis, :]).sum())
    _require_converged(pair, False)
    return float(f @ a_arr + g @ b_arr - mass / lam)


def _plan_entropy(plan: np.ndarray) -> float:
    positive = plan[plan > 0]
    return float(-(positive * np.log(positive)).sum())


def smoothed_transport(
    a,
    b,
    M,
    lam: float,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    log_domain: bool = False,
    warm=None,
    kernel: np.ndarray | None = None,
) -> SmoothedSolution:
    """Solve one smoothed transport subproblem and package plan, dual, costs.

    Raises NotConvergedError if the scaling loop exhausts ``max_iter``.
    """
    a_arr, b_arr, C = _validate_scaling_inputs(a, b, M, lam, tol)
    if log_domain:
        pair = sinkhorn_log_domain(
            a_arr, b_arr, C, lam, tol=tol, max_iter=max_iter, warm_f=warm
        )
        _require_converged(pair, False)
        plan = log_domain_plan(pair, C, lam)
    else:
        K = gibbs_kernel(C, lam) if kernel is None else kernel
        pair = sinkhorn_scaling(
            a_arr, b_arr, C, lam, tol=tol, max_iter=max_iter, warm_u=warm, kernel=K
        )
        _require_converged(pair, False)
        plan = smoothed_primal(pair, K)
    alpha = smoothed_dual_alpha(pair, lam)
    cost = float((plan * C).sum())
    regularized = cost - _plan_entropy(plan) / lam
    wrapped = TransportPlan(plan, a_arr, b_arr, tol=max(tol, 1e-8))
    return SmoothedSolution(
        plan=wrapped,
        alpha=alpha,
        transport_cost=cost,
        regularized_cost=regularized,
        lam=lam,
        iterations=pair.iterations,
        converged=pair.converged,
        pair=pair,
    )


class TransportBatch:
    """Smoothed transport from one shared source to N fixed targets.

    Kernels are precomputed per target and the final scaling vector of each
    converged solve is kept as the warm start for the next call, which is
    what makes repeated solves at nearby source weights cheap.  A slot whose
    run fails is reset to the default start before the error propagates.
    """

    def __init__(
        self,
        targets,
        lam: float,
        *,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
        log_domain: bool = False,
        warm=None,
    ):
        if lam <= 0:
            raise ValueError(f"regularization strength must be positive, got {lam}")
        self.lam = float(lam)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.log_domain = bool(log_domain)
        self._targets = []
        for index, (b, M) in enumerate(targets):
            b_arr = as_weights(b, "b", positive=True)
            check_simplex(b_arr, "b")
            C = as_cost_entries(M)
            try:
                kernel = None if log_domain else gibbs_kernel(C, lam)
            except SinkhornUnderflowError as exc:
                raise SinkhornUnderflowError(f"target measure {index}: {exc}") from exc
            self._targets.append((b_arr, C, kernel))
        if not self._targets:
            raise ValueError("batch needs at least one target measure")
        if warm is None:
            self._warm = [None] * len(self._targets)
        else:
            self._warm = list(warm)
            if len(self._warm) != len(self._targets):
                raise ValueError("warm start list length does not match targets")

    def __len__(self) -> int:
        return len(self._targets)

    @property
    def warm_starts(self) -> list:
        return list(self._warm)

    def solve(self, a) -> list[SmoothedSolution]:
        """Solve every subproblem at source weights ``a``, failing fast."""
        solutions = []
        for index, (b, C, kernel) in enumerate(self._targets):
            try:
                sol = smoothed_transport(
                    a,
                    b,
                    C,
                    self.lam,
                    tol=self.tol,
                    max_iter=self.max_iter,
                    log_domain=self.log_domain,
                    warm=self._warm[index],
                    kernel=kernel,
                )
            except (SinkhornUnderflowError, NotConvergedError) as exc:
                self._warm[index] = None
                raise type(exc)(f"target measure {index}: {exc}") from exc
            self._warm[index] = sol.pair.f if self.log_domain else sol.pair.u
            solutions.append(sol)
        return solutions


def smoothed_transport_batch(a, targets, lam: float, **options) -> list[SmoothedSolution]:
    """One-shot batch solve; equivalent to N independent smoothed_transport calls."""
    return TransportBatch(targets, lam, **options).solve(a)
