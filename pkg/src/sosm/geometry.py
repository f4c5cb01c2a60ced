"""Discrete curve geometry: second differences, polyline curvature, energies.

Curvature at a vertex comes from first and second derivatives estimated by
central finite differences on the actual (possibly non-uniform) arc-length
grid, then kappa = ||g' x g''|| / ||g'||^3. Energies integrate kappa^2 over
arc length with the trapezoid rule, which matches the second-order accuracy
of the difference stencils.

Open polylines drop the two endpoint vertices (no centered stencil exists
there); closed polylines wrap around, so every vertex carries curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import _frozen
from .errors import DegenerateInputError, ParameterError, SizeError
from .kernel import survival_weight


@dataclass(frozen=True)
class Polyline:
    """Ordered point sequence with cumulative arc-length parameterization.

    closed=True treats the sequence as a loop: the segment from the last
    vertex back to the first participates in curvature and quadrature.
    """

    points: np.ndarray
    closed: bool = False
    arclengths: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = _frozen(np.atleast_2d(self.points))
        if pts.shape[0] < 2:
            raise SizeError(f"polyline needs at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("polyline contains non-finite coordinates")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            where = int(np.nonzero(seg == 0.0)[0][0])
            raise DegenerateInputError(f"coincident consecutive points at index {where}")
        if self.closed and np.linalg.norm(pts[-1] - pts[0]) == 0.0:
            raise DegenerateInputError("closed polyline repeats its first point")
        arcs = np.concatenate([[0.0], np.cumsum(seg)])
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "arclengths", _frozen(arcs))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]

    def segment_lengths(self) -> np.ndarray:
        """Consecutive segment lengths; includes the wrap segment when closed."""
        seg = np.diff(self.arclengths)
        if self.closed:
            seg = np.concatenate([seg, [np.linalg.norm(self.points[-1] - self.points[0])]])
        return seg


@dataclass(frozen=True)
class CurvatureProfile:
    """Per-vertex curvature magnitudes (1/length units), all finite and >= 0."""

    kappas: np.ndarray
    vertex_indices: np.ndarray

    def __post_init__(self):
        kap = _frozen(self.kappas)
        idx = np.array(self.vertex_indices, dtype=int)
        idx.flags.writeable = False
        if kap.shape != idx.shape:
            raise SizeError("kappas and vertex_indices must have equal length")
        if not np.all(np.isfinite(kap)) or np.any(kap < 0):
            raise ParameterError("curvatures must be finite and >= 0")
        object.__setattr__(self, "kappas", kap)
        object.__setattr__(self, "vertex_indices", idx)


def second_difference(points) -> np.ndarray:
    """Interior second differences p[i+1] - 2 p[i] + p[i-1]."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 3:
        raise SizeError(f"need at least 3 points for second differences, got {pts.shape[0]}")
    return pts[2:] - 2.0 * pts[1:-1] + pts[:-2]


def _cross_norm_sq(d1: np.ndarray, d2: np.ndarray) -> float:
    q = d1.shape[0]
    if q == 2:
        c = d1[0] * d2[1] - d1[1] * d2[0]
        return c * c
    if q == 3:
        c = np.cross(d1, d2)
        return float(c @ c)
    # Lagrange identity: the consistent extension of ||d1 x d2||^2 to q > 3
    val = (d1 @ d1) * (d2 @ d2) - (d1 @ d2) ** 2
    return max(float(val), 0.0)


def _vertex_curvature(p0, p1, p2, h1, h2) -> float:
    """Curvature from the 3-point non-uniform central difference stencil."""
    denom = h1 * h2 * (h1 + h2)
    d1 = (h1 * h1 * p2 + (h2 * h2 - h1 * h1) * p1 - h2 * h2 * p0) / denom
    d2 = 2.0 * (h1 * p2 - (h1 + h2) * p1 + h2 * p0) / denom
    speed_sq = float(d1 @ d1)
    if speed_sq == 0.0:
        raise DegenerateInputError("zero tangent in curvature stencil")
    return float(np.sqrt(_cross_norm_sq(d1, d2)) / speed_sq ** 1.5)


def polyline_curvature(line: Polyline) -> CurvatureProfile:
    """Curvature magnitude per vertex: interior vertices, or all when closed."""
    m = line.m
    if m < 3:
        raise SizeError(f"need at least 3 points for curvature, got {m}")
    pts = line.points
    seg = line.segment_lengths()
    if line.closed:
        indices = np.arange(m)
        kappas = np.empty(m)
        for i in indices:
            kappas[i] = _vertex_curvature(
                pts[(i - 1) % m], pts[i], pts[(i + 1) % m],
                seg[(i - 1) % m], seg[i])
    else:
        indices = np.arange(1, m - 1)
        kappas = np.empty(m - 2)
        for a, i in enumerate(indices):
            kappas[a] = _vertex_curvature(pts[i - 1], pts[i], pts[i + 1],
                                          seg[i - 1], seg[i])
    return CurvatureProfile(kappas=kappas, vertex_indices=indices)


def _quadrature(line: Polyline, vertex_values: np.ndarray) -> float:
    """Trapezoid rule for per-vertex values over arc length.

    Open polylines integrate over the interior grid only; closed polylines
    integrate around the full loop including the wrap segment.
    """
    seg = line.segment_lengths()
    if line.closed:
        nxt = np.roll(vertex_values, -1)
        return float(np.sum((vertex_values + nxt) / 2.0 * seg))
    interior_s = line.arclengths[1:-1]
    return float(np.trapezoid(vertex_values, interior_s))


def curve_energy(line: Polyline) -> float:
    """Integral of squared curvature over arc length."""
    profile = polyline_curvature(line)
    return _quadrature(line, profile.kappas ** 2)


def weighted_curve_energy(line: Polyline, times, sigma: float) -> float:
    """Quadrature of w(t_i, t_{i+1}) * kappa_i^2 over arc length.

    The weight at each curvature vertex couples consecutive survival values
    through the Gaussian kernel, so constant times reduce exactly to
    curve_energy.
    """
    t = np.asarray(times, dtype=float)
    if t.shape != (line.m,):
        raise SizeError(f"times length {t.shape} does not match m={line.m}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    profile = polyline_curvature(line)
    idx = profile.vertex_indices
    nxt = (idx + 1) % line.m if line.closed else idx + 1
    w = np.array([survival_weight(t[i], t[j], sigma) for i, j in zip(idx, nxt)])
    return _quadrature(line, w * profile.kappas ** 2)
