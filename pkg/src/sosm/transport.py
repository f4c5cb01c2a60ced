"""Curvature-weighted optimal transport.

Costs compare the Laplacian images of embedding rows, so translating an
embedding never changes the cost. Two solvers are paired deliberately:

* ``sinkhorn``: entropic alternating marginal scaling, scalable, with a
  mandatory log-domain fallback the first time the plain scaling overflows
  (small reg with squared-curvature costs overflows otherwise).
* ``exact_ot_small``: the transportation linear program solved exactly by
  a north-west-corner simplex for instances up to 8 x 8, used as an oracle
  for the entropic solver and for Wasserstein-1 distances elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import Embedding, LaplacianMatrix, _frozen
from .errors import NumericalError, ParameterError, SizeError

EXACT_SIZE_CAP = 8
_MARGINAL_TOL = 1e-12


@dataclass(frozen=True)
class TransportProblem:
    """Source/target weights (each summing to 1) and a nonnegative cost matrix."""

    p: np.ndarray
    q: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p).ravel()
        q = _frozen(self.q).ravel()
        cost = _frozen(self.cost)
        if cost.shape != (p.size, q.size):
            raise SizeError(f"cost shape {cost.shape} does not match marginals "
                            f"({p.size}, {q.size})")
        for name, marg in (("p", p), ("q", q)):
            if np.any(marg < 0) or not np.all(np.isfinite(marg)):
                raise ParameterError(f"marginal {name} must be nonnegative and finite")
            if abs(marg.sum() - 1.0) > _MARGINAL_TOL:
                raise ParameterError(f"marginal {name} sums to {marg.sum()}, not 1")
        if np.any(cost < 0) or not np.all(np.isfinite(cost)):
            raise ParameterError("cost matrix must be nonnegative and finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "cost", cost)


@dataclass(frozen=True)
class TransportPlan:
    """A coupling with its linear objective and solver diagnostics."""

    coupling: np.ndarray
    objective: float
    iterations: int
    converged: bool
    marginal_residual: float

    def __post_init__(self):
        object.__setattr__(self, "coupling", _frozen(self.coupling))


def curvature_cost_matrix(z: Embedding, laplacian: LaplacianMatrix) -> np.ndarray:
    """Pairwise cost c_ij = ||(LZ)_i - (LZ)_j||^2 within one embedding."""
    if laplacian.n != z.n:
        raise SizeError(f"laplacian size {laplacian.n} does not match embedding N={z.n}")
    lz = laplacian.values @ z.coords
    cost = _sq_dists(lz, lz)
    cost = (cost + cost.T) / 2.0
    np.fill_diagonal(cost, 0.0)
    return cost


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def _plan_residual(coupling, p, q) -> float:
    return float(max(np.abs(coupling.sum(axis=1) - p).max(),
                     np.abs(coupling.sum(axis=0) - q).max()))


def sinkhorn(problem: TransportProblem, reg: float, max_iters: int = 100000,
             tol: float = 1e-9) -> TransportPlan:
    """Entropic transport by alternating marginal scaling.

    Iterates until the worst marginal residual of the implied coupling is
    at most tol or max_iters is exhausted. Overflow in the plain scaling
    triggers the log-domain path, which anneals the regularization down to
    reg before polishing at the target value.
    """
    if not reg > 0:
        raise ParameterError(f"reg must be > 0, got {reg}")
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    p, q, cost = problem.p, problem.q, problem.cost

    kernel = np.exp(-cost / reg)
    # any underflowed cell silently truncates the problem: go log-domain
    overflow = bool(np.any(kernel == 0.0))
    iterations = 0
    if not overflow:
        u = np.ones_like(p)
        v = np.ones_like(q)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            for iterations in range(1, max_iters + 1):
                kv = kernel @ v
                u = np.divide(p, kv, out=np.zeros_like(p), where=kv > 0)
                ku = kernel.T @ u
                v = np.divide(q, ku, out=np.zeros_like(q), where=ku > 0)
                if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                    overflow = True
                    break
                coupling = u[:, None] * kernel * v[None, :]
                residual = _plan_residual(coupling, p, q)
                if residual <= tol:
                    return TransportPlan(coupling, float(np.sum(coupling * cost)),
                                         iterations, True, residual)
        if not overflow:
            return TransportPlan(coupling, float(np.sum(coupling * cost)),
                                 iterations, False, residual)

    return _sinkhorn_log(p, q, cost, reg, max_iters, tol, iterations)


def _sinkhorn_log(p, q, cost, reg, max_iters, tol, start_iter) -> TransportPlan:
    """Log-domain scaling with an annealed warm start at larger reg values.

    Zero-mass rows and columns are excluded up front (their coupling entries
    are forced to zero), so every logarithm below is finite.
    """
    rows = np.flatnonzero(p > 0)
    cols = np.flatnonzero(q > 0)
    ps, qs = p[rows], q[cols]
    cs = cost[np.ix_(rows, cols)]
    logp = np.log(ps)
    logq = np.log(qs)
    f = np.zeros_like(ps)
    g = np.zeros_like(qs)

    schedule = []
    level = max(float(cs.max()), reg)
    while level > reg * 1.0001:
        schedule.append(level)
        level /= 3.0
    schedule.append(reg)

    def full_plan(sub):
        coupling = np.zeros_like(cost)
        coupling[np.ix_(rows, cols)] = sub
        return coupling

    coupling = full_plan(np.exp((f[:, None] + g[None, :] - cs) / schedule[0]))
    residual = _plan_residual(coupling, p, q)
    iterations = start_iter
    for rk in schedule:
        final = rk == reg
        stage_iters = max_iters if final else 50
        for _ in range(stage_iters):
            iterations += 1
            m = (f[:, None] + g[None, :] - cs) / rk
            f = f + rk * (logp - logsumexp(m, axis=1))
            m = (f[:, None] + g[None, :] - cs) / rk
            g = g + rk * (logq - logsumexp(m, axis=0))
            if final:
                sub = np.exp((f[:, None] + g[None, :] - cs) / rk)
                if not np.all(np.isfinite(sub)):
                    raise NumericalError(
                        "log-domain scaling produced non-finite couplings; "
                        "increase reg for this cost scale")
                coupling = full_plan(sub)
                residual = _plan_residual(coupling, p, q)
                if residual <= tol:
                    return TransportPlan(coupling, float(np.sum(coupling * cost)),
                                         iterations, True, residual)
    return TransportPlan(coupling, float(np.sum(coupling * cost)),
                         iterations, False, residual)


def exact_ot_small(problem: TransportProblem) -> TransportPlan:
    """Exact transportation LP for instances up to 8 x 8.

    North-west-corner initial basis followed by simplex pivots with Bland's
    rule, entering and leaving cells resolved in lexicographic coupling
    order, so the returned vertex is deterministic.
    """
    n, m = problem.cost.shape
    if n > EXACT_SIZE_CAP or m > EXACT_SIZE_CAP:
        raise SizeError(f"exact solver is capped at {EXACT_SIZE_CAP} x {EXACT_SIZE_CAP}, "
                        f"got {n} x {m}")
    coupling, pivots = _transport_simplex(problem.p, problem.q, problem.cost)
    residual = _plan_residual(coupling, problem.p, problem.q)
    return TransportPlan(coupling, float(np.sum(coupling * problem.cost)),
                         pivots, True, residual)


def _transport_simplex(p, q, cost, reduced_cost_tol=1e-12, bland=False):
    """Simplex on the transportation polytope.

    The basis is the spanning tree laid down by the north-west-corner rule.
    Entering cells are priced by steepest reduced cost with lexicographic
    (row-major) tie-breaking; if that ever exhausts the pivot budget the
    solve restarts under Bland's rule, which cannot cycle. Node ids: rows
    are 0..n-1, columns n..n+m-1.
    """
    n, m = cost.shape
    remaining_p = p.astype(float).copy()
    remaining_q = q.astype(float).copy()
    x = np.zeros((n, m))
    in_basis = np.zeros((n, m), dtype=bool)
    adjacency = [set() for _ in range(n + m)]

    def link(r, c):
        in_basis[r, c] = True
        adjacency[r].add(n + c)
        adjacency[n + c].add(r)

    def unlink(r, c):
        in_basis[r, c] = False
        adjacency[r].discard(n + c)
        adjacency[n + c].discard(r)

    i = j = 0
    while True:
        step = min(remaining_p[i], remaining_q[j])
        x[i, j] = step
        link(i, j)
        remaining_p[i] -= step
        remaining_q[j] -= step
        if i == n - 1 and j == m - 1:
            break
        if remaining_p[i] <= remaining_q[j] and i < n - 1:
            i += 1
        elif j < m - 1:
            j += 1
        else:
            i += 1

    u = np.empty(n)
    v = np.empty(m)
    parent = [-1] * (n + m)
    visited = [False] * (n + m)
    max_pivots = 500 * (n + m)
    for pivot in range(max_pivots):
        # duals and parent pointers from one sweep over the basis tree
        for node in range(n + m):
            visited[node] = False
            parent[node] = -1
        u[0] = 0.0
        visited[0] = True
        stack = [0]
        while stack:
            node = stack.pop()
            if node < n:
                for nb in adjacency[node]:
                    if not visited[nb]:
                        visited[nb] = True
                        parent[nb] = node
                        v[nb - n] = cost[node, nb - n] - u[node]
                        stack.append(nb)
            else:
                col = node - n
                for nb in adjacency[node]:
                    if not visited[nb]:
                        visited[nb] = True
                        parent[nb] = node
                        u[nb] = cost[nb, col] - v[col]
                        stack.append(nb)

        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if bland:
            negatives = np.flatnonzero((reduced < -reduced_cost_tol).ravel())
            if negatives.size == 0:
                break
            flat = int(negatives[0])
        else:
            flat = int(np.argmin(reduced.ravel()))
            if reduced.ravel()[flat] >= -reduced_cost_tol:
                break
        enter_i, enter_j = divmod(flat, m)

        # tree path between the entering endpoints via their lowest common
        # ancestor in the rooted basis tree
        chain = []
        position = {}
        node = enter_i
        while node != -1:
            position[node] = len(chain)
            chain.append(node)
            node = parent[node]
        node = n + enter_j
        tail = []
        while node not in position:
            tail.append(node)
            node = parent[node]
        path = chain[:position[node] + 1] + tail[::-1]
        cells = []
        for a in range(len(path) - 1):
            left, right = path[a], path[a + 1]
            cells.append((left, right - n) if left < n else (right, left - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(x[c] for c in minus)
        leaving = min(c for c in minus if x[c] <= theta)
        x[enter_i, enter_j] += theta
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        unlink(*leaving)
        x[leaving] = 0.0
        link(enter_i, enter_j)
    else:
        if bland:
            raise NumericalError("transport simplex exceeded its pivot budget")
        return _transport_simplex(p, q, cost, reduced_cost_tol, bland=True)

    coupling = np.where(in_basis, np.maximum(x, 0.0), 0.0)
    return coupling, pivot


def ot_sosm_estimate(z_source: Embedding, z_target: Embedding,
                     laplacian: LaplacianMatrix, reg: float,
                     max_iters: int = 100000, tol: float = 1e-9) -> float:
    """Entropic curvature-cost transport between two embedding configurations.

    Cost compares Laplacian images across configurations, marginals are
    uniform; the value is reported as-is, with no equivalence claim to the
    quadratic objective.
    """
    if z_source.n != z_target.n or z_source.d != z_target.d:
        raise SizeError("source and target embeddings must share N and d")
    if laplacian.n != z_source.n:
        raise SizeError("laplacian size does not match the embeddings")
    lz_s = laplacian.values @ z_source.coords
    lz_t = laplacian.values @ z_target.coords
    cost = _sq_dists(lz_s, lz_t)
    n = z_source.n
    uniform = np.full(n, 1.0 / n)
    problem = TransportProblem(p=uniform, q=uniform, cost=cost)
    plan = sinkhorn(problem, reg=reg, max_iters=max_iters, tol=tol)
    return plan.objective
