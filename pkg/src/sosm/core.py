"""Cohort and graph primitives: domain types, kNN graph construction, Laplacians.

All values are immutable after construction and safe to share across threads;
every operation is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateInputError, ParameterError, SizeError

LAPLACIAN_KINDS = ("combinatorial", "random-walk-normalized")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Cohort:
    """A set of samples: feature matrix plus optional survival annotations.

    ids: one identifier per sample row.
    features: N x D real matrix, no non-finite entries.
    survival: optional length-N vector of nonnegative survival times.
    censored: optional length-N boolean vector, carried through but not
        interpreted by the similarity kernels.
    """

    ids: tuple[str, ...]
    features: np.ndarray
    survival: np.ndarray | None = None
    censored: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        features = _frozen(np.atleast_2d(self.features))
        object.__setattr__(self, "features", features)
        n, d = features.shape
        if n < 1 or d < 1:
            raise SizeError(f"cohort needs N >= 1 and D >= 1, got {n} x {d}")
        if len(self.ids) != n:
            raise SizeError(f"{len(self.ids)} ids for {n} feature rows")
        if not np.all(np.isfinite(features)):
            raise ParameterError("features contain non-finite values")
        if self.survival is not None:
            surv = _frozen(self.survival)
            if surv.shape != (n,):
                raise SizeError(f"survival length {surv.shape} does not match N={n}")
            if not np.all(np.isfinite(surv)) or np.any(surv < 0):
                raise ParameterError("survival times must be finite and >= 0")
            object.__setattr__(self, "survival", surv)
        if self.censored is not None:
            cens = np.array(self.censored, dtype=bool)
            if cens.shape != (n,):
                raise SizeError(f"censored length {cens.shape} does not match N={n}")
            cens.flags.writeable = False
            object.__setattr__(self, "censored", cens)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric weighted graph over sample indices.

    edges maps (i, j) with i < j to a strictly positive finite weight.
    k records the neighbors-per-node parameter used to build the graph
    (0 for graphs assembled directly from an edge list).
    """

    n: int
    edges: dict[tuple[int, int], float]
    k: int = 0

    def __post_init__(self):
        canonical: dict[tuple[int, int], float] = {}
        for (i, j), w in self.edges.items():
            i, j = int(i), int(j)
            if i == j:
                raise ParameterError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ParameterError(f"edge ({i}, {j}) outside node range 0..{self.n - 1}")
            a, b = (i, j) if i < j else (j, i)
            w = float(w)
            if not np.isfinite(w) or w <= 0:
                raise ParameterError(f"edge ({a}, {b}) has invalid weight {w}")
            if (a, b) in canonical and canonical[(a, b)] != w:
                raise ParameterError(f"edge ({a}, {b}) listed twice with different weights")
            canonical[(a, b)] = w
        object.__setattr__(self, "edges", canonical)

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def weight(self, i: int, j: int) -> float:
        a, b = (i, j) if i < j else (j, i)
        return self.edges[(a, b)]

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for (a, b) in self.edges if i in (a, b)]
        return sorted(out)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for (i, j), w in self.edges.items():
            a[i, j] = a[j, i] = w
        return a

    def total_weight(self) -> float:
        return float(sum(self.edges.values()))

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


@dataclass(frozen=True)
class LaplacianMatrix:
    """Graph Laplacian with zero row sums; combinatorial kind is symmetric."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in LAPLACIAN_KINDS:
            raise ParameterError(f"kind must be one of {LAPLACIAN_KINDS}, got {self.kind!r}")
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise SizeError(f"laplacian must be square, got {vals.shape}")
        scale = max(np.abs(vals).max(), 1.0)
        if np.abs(vals.sum(axis=1)).max() > 1e-10 * scale:
            raise ParameterError("laplacian rows must sum to zero")
        if self.kind == "combinatorial" and not np.allclose(vals, vals.T, atol=1e-12 * scale):
            raise ParameterError("combinatorial laplacian must be symmetric")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Embedding:
    """N x d latent coordinate matrix."""

    coords: np.ndarray
    d: int = field(default=0)

    def __post_init__(self):
        coords = _frozen(np.atleast_2d(self.coords))
        d = self.d or coords.shape[1]
        if d < 1:
            raise ParameterError("latent dimension d must be >= 1")
        if coords.shape[1] != d:
            raise SizeError(f"coords have {coords.shape[1]} columns, expected d={d}")
        if not np.all(np.isfinite(coords)):
            raise ParameterError("embedding contains non-finite values")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def _pairwise_distances(x: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Dense Euclidean distance matrix, computed in row chunks."""
    n = x.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, chunk):
        out[start:start + chunk] = cdist(x[start:start + chunk], x)
    return out


def build_knn_graph(cohort: Cohort, k: int, metric: str = "euclidean") -> NeighborGraph:
    """Union-symmetrized kNN graph with Gaussian edge weights.

    Each node selects its k nearest neighbors; an edge is kept when either
    endpoint selects it, so every node ends with at least k neighbors.
    Edge weight is exp(-d^2 / (2 h^2)) with bandwidth h equal to the median
    of the selected neighbor distances.
    """
    if metric != "euclidean":
        raise ParameterError(f"unsupported metric {metric!r}")
    n = cohort.n_samples
    k = int(k)
    if k < 1 or k >= n:
        raise ParameterError(f"k must satisfy 1 <= k < N, got k={k}, N={n}")

    dist = _pairwise_distances(cohort.features)
    order = np.argsort(dist, axis=1, kind="stable")
    neighbor_idx = order[:, 1:k + 1]  # column 0 is the node itself (distance 0)
    rows = np.repeat(np.arange(n), k)
    selected = dist[rows, neighbor_idx.ravel()]
    bandwidth = float(np.median(selected))
    if bandwidth <= 0.0:
        dup_rows, dup_cols = np.nonzero((dist <= 0.0) & ~np.eye(n, dtype=bool))
        pairs = sorted({(cohort.ids[min(i, j)], cohort.ids[max(i, j)])
                        for i, j in zip(dup_rows, dup_cols)})
        raise DegenerateInputError(
            "duplicate points produce zero kNN bandwidth; colliding ids: "
            + ", ".join(f"({a}, {b})" for a, b in pairs))

    edges: dict[tuple[int, int], float] = {}
    denom = 2.0 * bandwidth * bandwidth
    for i in range(n):
        for j in neighbor_idx[i]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            if (a, b) not in edges:
                edges[(a, b)] = float(np.exp(-dist[a, b] ** 2 / denom))
    return NeighborGraph(n=n, edges=edges, k=k)


def graph_laplacian(graph: NeighborGraph, kind: str = "combinatorial") -> LaplacianMatrix:
    """Assemble D - A (combinatorial) or I - D^-1 A (random-walk-normalized)."""
    if kind not in LAPLACIAN_KINDS:
        raise ParameterError(f"kind must be one of {LAPLACIAN_KINDS}, got {kind!r}")
    adj = graph.adjacency()
    deg = adj.sum(axis=1)
    if kind == "combinatorial":
        values = np.diag(deg) - adj
    else:
        isolated = np.nonzero(deg == 0)[0]
        if isolated.size:
            raise DegenerateInputError(
                f"isolated nodes {isolated.tolist()} have zero degree; "
                "random-walk normalization undefined")
        values = np.eye(graph.n) - adj / deg[:, None]
    return LaplacianMatrix(values=values, kind=kind)
