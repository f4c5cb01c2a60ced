"""Coarse edge curvature on graphs and a normalized curvature-driven flow.

Edge curvature follows the lazy-random-walk construction: each endpoint
carries a measure with mass ``idleness`` on itself and the rest spread over
its neighbors proportionally to edge weight; the curvature is
1 - W1(mu_i, mu_j) / d(i, j) with Wasserstein-1 computed exactly by the
transport module on the union of the two neighborhoods and shortest-path
ground distance (edge weights act as lengths).

The flow multiplies each weight by (1 - eta * kappa_e) and rescales
globally so total edge weight is conserved, the discrete counterpart of a
volume-normalized metric flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .core import NeighborGraph
from .errors import ParameterError, SizeError, StepSizeError
from .transport import EXACT_SIZE_CAP, TransportProblem, exact_ot_small


@dataclass(frozen=True)
class EdgeCurvatures:
    """One curvature value per graph edge, keyed in sorted edge order."""

    edges: tuple[tuple[int, int], ...]
    kappas: np.ndarray
    idleness: float

    def __post_init__(self):
        kap = np.array(self.kappas, dtype=float)
        kap.flags.writeable = False
        if len(self.edges) != kap.size:
            raise SizeError("one curvature value per edge required")
        if not np.all(np.isfinite(kap)):
            raise ParameterError("curvatures must be finite")
        if np.any(kap > 1.0 + 1e-12):
            raise ParameterError("edge curvature cannot exceed 1")
        if not 0.0 <= self.idleness < 1.0:
            raise ParameterError(f"idleness must be in [0, 1), got {self.idleness}")
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "kappas", kap)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(zip(self.edges, self.kappas.tolist()))

    def mean(self) -> float:
        return float(self.kappas.mean())

    def variance(self) -> float:
        return float(self.kappas.var())


@dataclass(frozen=True)
class FlowSnapshot:
    """State recorded at one flow iteration."""

    iteration: int
    edge_weights: dict[tuple[int, int], float]
    curvatures: dict[tuple[int, int], float]
    curvature_mean: float
    curvature_variance: float
    total_weight: float


@dataclass(frozen=True)
class FlowTrace:
    """Per-iteration snapshots plus the final graph state."""

    snapshots: tuple[FlowSnapshot, ...]
    final_graph: NeighborGraph = field(repr=False)

    def variances(self) -> np.ndarray:
        return np.array([s.curvature_variance for s in self.snapshots])

    def total_weights(self) -> np.ndarray:
        return np.array([s.total_weight for s in self.snapshots])


def _ground_distances(graph: NeighborGraph) -> np.ndarray:
    adj = csr_matrix(graph.adjacency())
    return shortest_path(adj, method="D", directed=False)


def _neighbor_lists(graph: NeighborGraph) -> dict[int, list[tuple[int, float]]]:
    """(neighbor, weight) lists sorted by neighbor index, built in one pass."""
    lists: dict[int, list[tuple[int, float]]] = {i: [] for i in range(graph.n)}
    for (a, b), w in graph.edges.items():
        lists[a].append((b, w))
        lists[b].append((a, w))
    for entries in lists.values():
        entries.sort()
    return lists


def _walk_measure(neighbors: list[tuple[int, float]], node: int, idleness: float,
                  keep: set[int]) -> dict[int, float]:
    """Lazy-walk measure restricted to the retained neighbor set."""
    kept = [(v, w) for v, w in neighbors if v in keep]
    total = sum(w for _, w in kept)
    measure = {node: idleness}
    for v, w in kept:
        measure[v] = measure.get(v, 0.0) + (1.0 - idleness) * w / total
    return measure


def _support_nodes(lists, i: int, j: int, max_support: int,
                   subsample: bool) -> set[int]:
    """Union of the two neighborhoods, optionally truncated to fit the cap.

    Truncation keeps the endpoints and then the strongest-weighted neighbors
    (ties broken by node index), so the result is deterministic.
    """
    union = {i, j} | {v for v, _ in lists[i]} | {v for v, _ in lists[j]}
    if len(union) <= max_support:
        return union
    if not subsample:
        raise SizeError(
            f"neighborhood union of edge ({i}, {j}) has {len(union)} nodes, "
            f"above the exact-transport cap of {max_support}; pass "
            "subsample=True for the deterministic subsampled approximation")
    candidates: dict[int, float] = {}
    for node in (i, j):
        for v, w in lists[node]:
            if v not in (i, j):
                candidates[v] = max(candidates.get(v, 0.0), w)
    ranked = sorted(candidates, key=lambda v: (-candidates[v], v))
    return {i, j} | set(ranked[:max_support - 2])


def _edge_curvature(lists, i: int, j: int, idleness: float, dist: np.ndarray,
                    max_support: int, subsample: bool) -> float:
    keep = _support_nodes(lists, i, j, max_support, subsample)
    support = sorted(keep)
    index = {v: a for a, v in enumerate(support)}
    mu = np.zeros(len(support))
    nu = np.zeros(len(support))
    for v, mass in _walk_measure(lists[i], i, idleness, keep).items():
        mu[index[v]] += mass
    for v, mass in _walk_measure(lists[j], j, idleness, keep).items():
        nu[index[v]] += mass
    cost = dist[np.ix_(support, support)]
    plan = exact_ot_small(TransportProblem(p=mu, q=nu, cost=cost))
    w1 = max(plan.objective, 0.0)
    return 1.0 - w1 / dist[i, j]


def ollivier_curvature(graph: NeighborGraph, edge: tuple[int, int],
                       idleness: float = 0.5, max_support: int = EXACT_SIZE_CAP,
                       subsample: bool = False) -> float:
    """Coarse curvature of one edge; deterministic, at most 1."""
    if not 0.0 <= idleness < 1.0:
        raise ParameterError(f"idleness must be in [0, 1), got {idleness}")
    i, j = int(edge[0]), int(edge[1])
    a, b = (i, j) if i < j else (j, i)
    if (a, b) not in graph.edges:
        raise ParameterError(f"edge ({i}, {j}) not present in the graph")
    dist = _ground_distances(graph)
    return _edge_curvature(_neighbor_lists(graph), a, b, idleness, dist,
                           max_support, subsample)


def all_edge_curvatures(graph: NeighborGraph, idleness: float = 0.5,
                        max_support: int = EXACT_SIZE_CAP,
                        subsample: bool = False) -> EdgeCurvatures:
    """Curvature of every edge, sharing one shortest-path computation."""
    if not 0.0 <= idleness < 1.0:
        raise ParameterError(f"idleness must be in [0, 1), got {idleness}")
    dist = _ground_distances(graph)
    lists = _neighbor_lists(graph)
    edges = graph.edge_list()
    kappas = np.array([
        _edge_curvature(lists, a, b, idleness, dist, max_support, subsample)
        for a, b in edges])
    return EdgeCurvatures(edges=tuple(edges), kappas=kappas, idleness=idleness)


def flow_step(graph: NeighborGraph, curvatures: EdgeCurvatures,
              eta: float) -> NeighborGraph:
    """One multiplicative flow step with exact total-weight conservation."""
    if not eta > 0:
        raise ParameterError(f"eta must be > 0, got {eta}")
    if tuple(graph.edge_list()) != curvatures.edges:
        raise SizeError("curvatures do not match the graph edge set")
    worst = int(np.argmax(np.abs(curvatures.kappas)))
    if eta * abs(curvatures.kappas[worst]) >= 1.0:
        raise StepSizeError(
            f"eta={eta} times |kappa|={abs(curvatures.kappas[worst])} on edge "
            f"{curvatures.edges[worst]} reaches 1; weights would not stay positive")
    if np.all(curvatures.kappas == curvatures.kappas[0]):
        # uniform curvature scales every weight alike and the rescaling
        # undoes it, so the graph is an exact fixed point
        return graph
    total_before = graph.total_weight()
    scaled = {edge: graph.edges[edge] * (1.0 - eta * float(k))
              for edge, k in zip(curvatures.edges, curvatures.kappas)}
    total_after = sum(scaled.values())
    factor = total_before / total_after
    rescaled = {edge: w * factor for edge, w in scaled.items()}
    return NeighborGraph(n=graph.n, edges=rescaled, k=graph.k)


def run_flow(graph: NeighborGraph, idleness: float = 0.5, eta: float = 0.05,
             iters: int = 20, max_support: int = EXACT_SIZE_CAP,
             subsample: bool = False, variance_stop: float = 1e-10) -> FlowTrace:
    """Iterate flow_step with curvature recomputation, recording each state.

    The trace always contains the initial snapshot; the flow stops early
    once the curvature variance falls below variance_stop.
    """
    if iters < 0:
        raise ParameterError(f"iters must be >= 0, got {iters}")
    snapshots = []
    current = graph
    for it in range(iters + 1):
        curv = all_edge_curvatures(current, idleness=idleness,
                                   max_support=max_support, subsample=subsample)
        snapshots.append(FlowSnapshot(
            iteration=it,
            edge_weights=dict(current.edges),
            curvatures=curv.as_dict(),
            curvature_mean=curv.mean(),
            curvature_variance=curv.variance(),
            total_weight=current.total_weight()))
        if it == iters or curv.variance() < variance_stop:
            break
        current = flow_step(current, curv, eta)
    return FlowTrace(snapshots=tuple(snapshots), final_graph=current)
