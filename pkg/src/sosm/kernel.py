"""Survival-similarity weights between samples, with a feature-space proxy.

The weight between two samples is a Gaussian of their survival-time
difference; when survival is absent, Gaussian similarity over the
(standardized) feature rows stands in for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Cohort, _frozen, _pairwise_distances
from .errors import ParameterError

# Entries below this are zeroed to sparsify the O(N^2) objective.
WEIGHT_CLAMP = 1e-12


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric similarity weights in [0, 1] with unit diagonal."""

    values: np.ndarray
    sigma: float
    source: str

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ParameterError(f"weight matrix must be square, got {vals.shape}")
        if self.source not in ("survival", "proxy"):
            raise ParameterError(f"source must be 'survival' or 'proxy', got {self.source!r}")
        if self.sigma <= 0 or not math.isfinite(self.sigma):
            raise ParameterError(f"sigma must be positive and finite, got {self.sigma}")
        if not np.array_equal(vals, vals.T):
            raise ParameterError("weight matrix must be exactly symmetric")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ParameterError("weights must lie in [0, 1]")
        if not np.all(np.diag(vals) == 1.0):
            raise ParameterError("weight matrix diagonal must be 1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self) -> int:
        return self.values.shape[0]


def survival_weight(t_i: float, t_j: float, sigma: float) -> float:
    """Gaussian similarity exp(-(t_i - t_j)^2 / (2 sigma^2)) of two times."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if not (math.isfinite(t_i) and math.isfinite(t_j)):
        raise ParameterError("survival times must be finite")
    z = (t_i - t_j) / sigma
    return math.exp(-0.5 * z * z)


def median_pairwise(values: np.ndarray) -> float:
    """Median absolute pairwise difference, the default bandwidth rule.

    Falls back to the mean difference and then to 1.0 when ties drive the
    median (or every difference) to zero.
    """
    v = np.asarray(values, dtype=float)
    iu, ju = np.triu_indices(v.shape[0], 1)
    if iu.size == 0:
        return 1.0
    diffs = np.abs(v[iu] - v[ju])
    med = float(np.median(diffs))
    if med > 0:
        return med
    mean = float(diffs.mean())
    return mean if mean > 0 else 1.0


def _clamp(values: np.ndarray) -> np.ndarray:
    values[values < WEIGHT_CLAMP] = 0.0
    np.fill_diagonal(values, 1.0)
    return values


def weight_matrix(cohort: Cohort, sigma: float | None = None) -> WeightMatrix:
    """Survival-kernel weight matrix; sigma defaults to the median pairwise rule."""
    if cohort.survival is None:
        raise ParameterError(
            "cohort has no survival times; use proxy_weights for feature-space weights")
    t = cohort.survival
    if sigma is None:
        sigma = median_pairwise(t)
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    z = (t[:, None] - t[None, :]) / sigma
    values = _clamp(np.exp(-0.5 * z * z))
    return WeightMatrix(values=values, sigma=float(sigma), source="survival")


def proxy_weights(cohort: Cohort, sigma_feat: float | None = None) -> WeightMatrix:
    """Feature-space Gaussian similarity, the stand-in when survival is absent."""
    dist = _pairwise_distances(cohort.features)
    if sigma_feat is None:
        iu, ju = np.triu_indices(cohort.n_samples, 1)
        sigma_feat = float(np.median(dist[iu, ju])) if iu.size else 1.0
        if sigma_feat <= 0:
            sigma_feat = 1.0
    if not sigma_feat > 0:
        raise ParameterError(f"sigma_feat must be > 0, got {sigma_feat}")
    values = np.exp(-dist ** 2 / (2.0 * sigma_feat ** 2))
    values = (values + values.T) / 2.0  # kill asymmetric rounding from cdist
    values = _clamp(values)
    return WeightMatrix(values=values, sigma=float(sigma_feat), source="proxy")
