"""Exact optimal transport at desk scale.

The primal solver is a network simplex specialized to the transportation
problem: a spanning-tree basis over the bipartite row/column graph, started
from the northwest-corner rule, pivoted with a most-negative entering rule
(ties and stalls fall back to lowest-index) so plans are reproducible.  Dual
potentials come straight out of the final basis tree, which makes strong
duality hold to round-off.

``brute_force_cost`` is an independent check: exhaustive vertex enumeration
for tiny shapes, a dense parameter grid for 2x2, and an interior-point/
simplex LP from scipy for the remaining sizes up to 25 cells.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_cost_entries, as_weights, check_simplex

__all__ = [
    "TransportPlan",
    "DualPotentials",
    "InstanceTooLargeError",
    "solve_primal",
    "solve_dual",
    "brute_force_cost",
]

PIVOT_TOL = 1e-9
_MAX_BRUTE_CELLS = 25
# Exhaustive spanning-tree enumeration is kept to bipartite graphs with at
# most 6 nodes; larger shapes (still <= 25 cells) go through scipy's LP.
_MAX_ENUMERATION_NODES = 6


class InstanceTooLargeError(ValueError):
    """Instance exceeds the size supported by an exact routine."""


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling with prescribed row and column marginals."""

    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    tol: float = 1e-8

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        a = np.asarray(self.row_marginal, dtype=float)
        b = np.asarray(self.col_marginal, dtype=float)
        if matrix.shape != (a.size, b.size):
            raise ValueError(
                f"plan shape {matrix.shape} does not match marginals ({a.size}, {b.size})"
            )
        if np.any(matrix < -self.tol):
            raise ValueError("plan has negative entries")
        row_err = np.max(np.abs(matrix.sum(axis=1) - a))
        col_err = np.max(np.abs(matrix.sum(axis=0) - b))
        if row_err > self.tol or col_err > self.tol:
            raise ValueError(
                f"plan marginals violated: row error {row_err:.3g}, column error {col_err:.3g}"
                f" exceed tol {self.tol:g}"
            )
        matrix = np.maximum(matrix, 0.0)
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "row_marginal", a.copy())
        object.__setattr__(self, "col_marginal", b.copy())

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class DualPotentials:
    """Dual pair (alpha, beta); alpha is shifted to sum to zero at construction."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        shift = alpha.mean()
        alpha = alpha - shift
        beta = beta + shift
        alpha.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def objective(self, a, b) -> float:
        return float(self.alpha @ np.asarray(a) + self.beta @ np.asarray(b))

    def is_feasible(self, M, tol: float = 1e-8) -> bool:
        entries = as_cost_entries(M)
        slack = entries - self.alpha[:, np.newaxis] - self.beta[np.newaxis, :]
        return bool(np.min(slack) >= -tol)


def _validate_instance(a, b, M):
    a = as_weights(a, "a")
    b = as_weights(b, "b")
    check_simplex(a, "a")
    check_simplex(b, "b")
    C = as_cost_entries(M)
    if C.shape != (a.size, b.size):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match marginals ({a.size}, {b.size})"
        )
    return a, b, C


# ---------------------------------------------------------------------------
# Network simplex
# ---------------------------------------------------------------------------


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    """Initial spanning-tree basis (staircase of n+m-1 cells) with its flows."""
    n, m = a.size, b.size
    ra = a.copy()
    rb = b.copy()
    cells: list[tuple[int, int]] = []
    flows: list[float] = []
    i = j = 0
    while True:
        t = min(ra[i], rb[j])
        cells.append((i, j))
        flows.append(t)
        ra[i] -= t
        rb[j] -= t
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return cells, flows


class _SimplexState:
    """Basis tree bookkeeping for the transportation simplex.

    Nodes 0..n-1 are rows, n..n+m-1 are columns; basic cells are tree edges.
    """

    def __init__(self, a, b, C):
        self.n, self.m = C.shape
        self.C = C
        cells, flows = _northwest_corner(a, b)
        self.flow = {cell: f for cell, f in zip(cells, flows)}
        self.adj: list[set[int]] = [set() for _ in range(self.n + self.m)]
        for (i, j) in cells:
            self.adj[i].add(self.n + j)
            self.adj[self.n + j].add(i)

    def potentials(self):
        n, m, C = self.n, self.m, self.C
        u = np.full(n, np.nan)
        v = np.full(m, np.nan)
        u[0] = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            for nb in self.adj[node]:
                if node < n:
                    j = nb - n
                    if np.isnan(v[j]):
                        v[j] = C[node, j] - u[node]
                        stack.append(nb)
                else:
                    j = node - n
                    if np.isnan(u[nb]):
                        u[nb] = C[nb, j] - v[j]
                        stack.append(nb)
        return u, v

    def tree_path(self, start: int, goal: int) -> list[int]:
        parent = {start: -1}
        stack = [start]
        while stack:
            node = stack.pop()
            if node == goal:
                break
            for nb in self.adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    stack.append(nb)
        path = [goal]
        while path[-1] != start:
            path.append(parent[path[-1]])
        path.reverse()
        return path

    def pivot(self, enter: tuple[int, int]) -> float:
        """Bring ``enter`` into the basis; returns the flow change delta."""
        n = self.n
        i, j = enter
        path = self.tree_path(i, n + j)
        # Consecutive path nodes form basic cells; starting at the entering
        # cell's row, they alternate -delta, +delta along the cycle.
        cycle: list[tuple[int, int]] = []
        for p, q in zip(path[:-1], path[1:]):
            cell = (p, q - n) if p < n else (q, p - n)
            cycle.append(cell)
        minus = cycle[0::2]
        delta = np.inf
        leaving = None
        for cell in minus:
            f = self.flow[cell]
            if f < delta - 1e-15 or (
                leaving is not None and abs(f - delta) <= 1e-15 and cell < leaving
            ):
                delta = f
                leaving = cell
        for idx, cell in enumerate(cycle):
            self.flow[cell] += -delta if idx % 2 == 0 else delta
        self.flow[enter] = delta
        self.adj[i].add(n + j)
        self.adj[n + j].add(i)
        del self.flow[leaving]
        li, lj = leaving
        self.adj[li].discard(n + lj)
        self.adj[n + lj].discard(li)
        for cell in minus:
            if cell in self.flow and self.flow[cell] < 0.0:
                self.flow[cell] = 0.0
        return delta


def _network_simplex(a, b, C):
    """Return (cost, plan matrix, u potentials, v potentials)."""
    n, m = C.shape
    state = _SimplexState(a, b, C)
    max_pivots = 200 * (n + m) + 10_000
    stalled = 0
    use_bland = False
    for _ in range(max_pivots):
        u, v = state.potentials()
        reduced = C - u[:, np.newaxis] - v[np.newaxis, :]
        for (i, j) in state.flow:
            reduced[i, j] = 0.0
        if use_bland:
            flat_candidates = np.flatnonzero(reduced.ravel() < -PIVOT_TOL)
            if flat_candidates.size == 0:
                break
            flat = int(flat_candidates[0])
        else:
            flat = int(np.argmin(reduced))
            if reduced.ravel()[flat] >= -PIVOT_TOL:
                break
        enter = (flat // m, flat % m)
        delta = state.pivot(enter)
        # Long degenerate stalls switch to Bland's lowest-index rule, which
        # cannot cycle; a productive pivot switches back.
        if delta <= PIVOT_TOL:
            stalled += 1
            if stalled > n + m:
                use_bland = True
        else:
            stalled = 0
            use_bland = False
    else:
        raise RuntimeError("network simplex failed to terminate")
    plan = np.zeros((n, m))
    for (i, j), f in state.flow.items():
        plan[i, j] = f
    u, v = state.potentials()
    cost = float((plan * C).sum())
    return cost, plan, u, v


def solve_primal(a, b, M) -> tuple[float, TransportPlan]:
    """Minimize <T, M> over couplings of (a, b); returns (cost, vertex plan).

    ``a`` and ``b`` must each sum to one within 1e-8; zero entries are
    allowed and simply carry no mass.
    """
    a, b, C = _validate_instance(a, b, M)
    cost, plan, _, _ = _network_simplex(a, b, C)
    return cost, TransportPlan(plan, a, b)


def solve_dual(a, b, M) -> DualPotentials:
    """Optimal dual potentials of the transport problem, alpha zero-sum."""
    a, b, C = _validate_instance(a, b, M)
    _, _, u, v = _network_simplex(a, b, C)
    return DualPotentials(u, v)


# ---------------------------------------------------------------------------
# Independent oracle
# ---------------------------------------------------------------------------


def _two_by_two_grid_cost(a, b, C, steps: int = 1_000_001) -> float:
    # One free variable t = T[0,0]; cost is affine in t so the endpoints of
    # the linspace carry the exact optimum.
    lo = max(0.0, a[0] - b[1])
    hi = min(a[0], b[0])
    t = np.linspace(lo, hi, steps)
    cost = (
        C[0, 0] * t
        + C[0, 1] * (a[0] - t)
        + C[1, 0] * (b[0] - t)
        + C[1, 1] * (a[1] - b[0] + t)
    )
    return float(cost.min())


def _tree_edges_from_pruefer(seq, n, total):
    """Decode a Pruefer sequence; returns edges or None if not bipartite."""
    degree = [1] * total
    for x in seq:
        degree[x] += 1
    edges = []
    ptr = 0
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    for x in seq:
        if (leaf < n) == (x < n):
            return None
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1 and x < ptr:
            leaf = x
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    last = total - 1
    if (leaf < n) == (last < n):
        return None
    edges.append((leaf, last))
    return edges


def _tree_flow_cost(edges, a, b, C, n):
    """Cost of the unique flow a spanning tree supports, or None if infeasible."""
    total = n + b.size
    supply = [0.0] * total
    for i in range(n):
        supply[i] = a[i]
    for j in range(b.size):
        supply[n + j] = -b[j]
    neighbors = [[] for _ in range(total)]
    for (x, y) in edges:
        neighbors[x].append(y)
        neighbors[y].append(x)
    degree = [len(nb) for nb in neighbors]
    removed = [False] * total
    leaves = [x for x in range(total) if degree[x] == 1]
    cost = 0.0
    for _ in range(total - 1):
        leaf = leaves.pop()
        removed[leaf] = True
        other = next(y for y in neighbors[leaf] if not removed[y])
        if leaf < n:
            flow = supply[leaf]
            i, j = leaf, other - n
        else:
            flow = -supply[leaf]
            i, j = other, leaf - n
        if flow < -1e-12:
            return None
        cost += max(flow, 0.0) * C[i, j]
        supply[other] += supply[leaf]
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    return cost


def _enumerate_vertices_cost(a, b, C) -> float:
    n, m = C.shape
    total = n + m
    best = np.inf
    for seq in itertools.product(range(total), repeat=total - 2):
        edges = _tree_edges_from_pruefer(seq, n, total)
        if edges is None:
            continue
        cost = _tree_flow_cost(edges, a, b, C, n)
        if cost is not None and cost < best:
            best = cost
    return float(best)


def _linprog_cost(a, b, C) -> float:
    from scipy.optimize import linprog

    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(
        C.ravel(),
        A_eq=A_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP reference solve failed: {res.message}")
    return float(res.fun)


def brute_force_cost(a, b, M) -> float:
    """Reference optimum for tiny instances (n*m <= 25), solver-independent.

    Shapes with one row or column are closed form, 2x2 is a dense grid over
    the single free variable, bipartite graphs with up to 6 nodes are solved
    by exhaustive spanning-tree vertex enumeration, and anything larger (up
    to the 25-cell cap) goes through scipy's HiGHS LP.
    """
    a, b, C = _validate_instance(a, b, M)
    n, m = C.shape
    if n * m > _MAX_BRUTE_CELLS:
        raise InstanceTooLargeError(
            f"brute-force oracle supports at most {_MAX_BRUTE_CELLS} cells, got {n}x{m}"
        )
    if n == 1:
        return float(b @ C[0])
    if m == 1:
        return float(a @ C[:, 0])
    if n == 2 and m == 2:
        return _two_by_two_grid_cost(a, b, C)
    if n + m <= _MAX_ENUMERATION_NODES:
        return _enumerate_vertices_cost(a, b, C)
    return _linprog_cost(a, b, C)
