"""Synthetic cohorts and the three headline property experiments.

Each experiment returns an ExperimentReport whose pass verdict is a pure
function of the metrics and tolerances it records, so a serialized report
can be re-audited without rerunning anything:

* survival gradient: after optimization, survival time should be monotone
  along the leading embedding axis (rank correlation against a threshold).
* stability: perturbing a straight trajectory must raise the curve energy
  at exactly second order, with the quadratic coefficient matching the
  quadrature of the perturbation's second derivative.
* flow convergence: the normalized curvature flow should not increase the
  spread of edge curvatures, nor materially raise the weighted energy of
  the survival-ordered spectral polyline.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .core import Cohort, Embedding, build_knn_graph, graph_laplacian
from .errors import ParameterError, SosmError
from .geometry import Polyline, curve_energy, weighted_curve_energy
from .kernel import median_pairwise
from .objective import OptimizerConfig, SosmObjectiveContext, embed
from .ricciflow import run_flow

_FRAME_SEED = 20240917  # fixes the ambient embedding frame, not the cohorts

COHORT_FAMILIES = ("curve", "swiss-surface", "bifurcation")


@dataclass(frozen=True)
class SyntheticCohort:
    """A cohort with known per-sample progression parameter."""

    cohort: Cohort
    ground_truth_param: np.ndarray
    family: str
    seed: int
    noise: float
    branch_labels: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in COHORT_FAMILIES:
            raise ParameterError(f"family must be one of {COHORT_FAMILIES}, "
                                 f"got {self.family!r}")
        param = np.array(self.ground_truth_param, dtype=float)
        param.flags.writeable = False
        if param.shape != (self.cohort.n_samples,):
            raise ParameterError("ground_truth_param must have one entry per sample")
        if np.any(param < 0):
            raise ParameterError("ground_truth_param must be >= 0")
        object.__setattr__(self, "ground_truth_param", param)
        if self.branch_labels is not None:
            labels = np.array(self.branch_labels, dtype=int)
            labels.flags.writeable = False
            object.__setattr__(self, "branch_labels", labels)


@dataclass(frozen=True)
class ExperimentReport:
    """Machine-readable experiment verdict."""

    name: str
    seed: int
    inputs_digest: str
    params: dict
    metrics: dict
    tolerances: dict
    passed: bool
    runtime_seconds: float


def evaluate_pass(name: str, metrics: dict, tolerances: dict) -> bool:
    """Recompute an experiment verdict from recorded metrics and tolerances."""
    if metrics.get("experiment_failed", 0.0):
        return False
    if name == "survival_gradient":
        return metrics["spearman_abs"] >= tolerances["spearman_min"]
    if name == "stability":
        return (abs(metrics["slope"] - 2.0) <= tolerances["slope_tol"]
                and abs(metrics["ratio_vs_quadrature"] - 1.0) <= tolerances["ratio_tol"])
    if name == "flow_convergence":
        variance_ok = (metrics["curvature_variance_final"]
                       <= metrics["curvature_variance_initial"])
        energy_ok = (metrics["weighted_energy_after"]
                     <= metrics["weighted_energy_before"]
                     * (1.0 + tolerances["energy_increase_max"]))
        return variance_ok and energy_ok
    raise ParameterError(f"unknown experiment name {name!r}")


def cohort_digest(cohort: Cohort) -> str:
    """Stable content hash of a cohort's ids, features, and survival."""
    h = hashlib.sha256()
    h.update("\x1f".join(cohort.ids).encode())
    h.update(np.ascontiguousarray(cohort.features).tobytes())
    if cohort.survival is not None:
        h.update(np.ascontiguousarray(cohort.survival).tobytes())
    if cohort.censored is not None:
        h.update(np.ascontiguousarray(cohort.censored).tobytes())
    return h.hexdigest()


def _embedding_frame(ambient_dim: int, intrinsic_dim: int) -> np.ndarray:
    rng = np.random.default_rng(_FRAME_SEED)
    frame, _ = np.linalg.qr(rng.standard_normal((ambient_dim, intrinsic_dim)))
    return frame


def _helix(u: np.ndarray) -> np.ndarray:
    """The fixed base space curve: two turns with steady axial drift."""
    return np.stack([np.cos(4.0 * np.pi * u),
                     np.sin(4.0 * np.pi * u),
                     2.0 * u], axis=1)


def helix_points(u, ambient_dim: int) -> np.ndarray:
    """The base curve mapped into the ambient dimension (noise-free)."""
    return _helix(np.atleast_1d(np.asarray(u, dtype=float))) @ _embedding_frame(ambient_dim, 3).T


def make_curve_cohort(n: int, ambient_dim: int, noise: float, seed: int) -> SyntheticCohort:
    """Samples along the fixed space curve with survival equal to arc position.

    Survival is arc length plus Gaussian noise, clipped at zero to respect
    the nonnegativity of survival times.
    """
    if n < 10:
        raise ParameterError(f"n must be >= 10, got {n}")
    if ambient_dim < 3:
        raise ParameterError(f"ambient dimension must be >= 3, got {ambient_dim}")
    if noise < 0:
        raise ParameterError(f"noise must be >= 0, got {noise}")
    u = np.linspace(0.0, 1.0, n)
    base = _helix(u)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(base, axis=0), axis=1))])
    rng = np.random.default_rng(seed)
    features = base @ _embedding_frame(ambient_dim, 3).T
    features = features + noise * rng.standard_normal(features.shape)
    survival = np.maximum(arc + rng.normal(0.0, noise, n), 0.0) if noise > 0 else arc
    ids = tuple(f"s{i:04d}" for i in range(n))
    cohort = Cohort(ids=ids, features=features, survival=survival)
    return SyntheticCohort(cohort=cohort, ground_truth_param=arc, family="curve",
                           seed=seed, noise=float(noise))


def make_bifurcation_cohort(n: int, ambient_dim: int, branch_point: float,
                            separation: float, seed: int) -> SyntheticCohort:
    """A trunk that splits into two branches, the divergent one progressing slower.

    Samples past the branch point are assigned to branches by a seeded coin
    flip. Branch 2 accumulates progression (and therefore survival) at half
    rate beyond the split, so survival stays a strictly increasing function
    of the recorded progression parameter.
    """
    if n < 10:
        raise ParameterError(f"n must be >= 10, got {n}")
    if ambient_dim < 3:
        raise ParameterError(f"ambient dimension must be >= 3, got {ambient_dim}")
    if not 0.0 < branch_point < 1.0:
        raise ParameterError(f"branch_point must be in (0, 1), got {branch_point}")
    if separation < 0:
        raise ParameterError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, n)
    labels = np.zeros(n, dtype=int)
    past = u > branch_point
    labels[past] = rng.integers(1, 3, size=int(past.sum()))

    # trunk runs along the first frame direction, branches split along the second
    frame = _embedding_frame(ambient_dim, 2)
    depth = np.sqrt(np.clip((u - branch_point) / (1.0 - branch_point), 0.0, 1.0))
    lateral = np.where(labels == 1, separation * depth,
                       np.where(labels == 2, -separation * depth, 0.0))
    features = np.outer(u, frame[:, 0]) + np.outer(lateral, frame[:, 1])

    param = np.where(labels == 2, branch_point + 0.5 * (u - branch_point), u)
    survival = param.copy()
    ids = tuple(f"b{i:04d}" for i in range(n))
    cohort = Cohort(ids=ids, features=features, survival=survival)
    return SyntheticCohort(cohort=cohort, ground_truth_param=param,
                           family="bifurcation", seed=seed, noise=0.0,
                           branch_labels=labels)


def leading_axis_coordinate(z: np.ndarray) -> np.ndarray:
    """Coordinate along the first principal axis of an embedding.

    Whitened embeddings have an exactly isotropic covariance, which makes
    principal axes degenerate; in that case any orthonormal basis is a
    valid principal basis and the first latent column is used by
    convention.
    """
    centered = z - z.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[0] == 0.0 or (svals[0] - svals[-1]) / svals[0] < 1e-6:
        return centered[:, 0]
    return centered @ vt[0]


def aligned_spearman(times: np.ndarray, axis_coordinate: np.ndarray) -> float:
    """Rank correlation, sign-aligned to be nonnegative when possible."""
    rho = spearmanr(times, axis_coordinate).statistic
    return float(abs(rho))


def survival_gradient_experiment(synthetic: SyntheticCohort,
                                 embed_config: OptimizerConfig,
                                 ctx: SosmObjectiveContext,
                                 spearman_min: float = 0.9) -> ExperimentReport:
    """Optimize an embedding, then test survival monotonicity along its leading axis."""
    cohort = synthetic.cohort
    if cohort.survival is None:
        raise ParameterError("survival gradient experiment needs survival times")
    start = time.perf_counter()
    tolerances = {"spearman_min": float(spearman_min)}
    params = {"n": cohort.n_samples, "noise": synthetic.noise,
              "family": synthetic.family, "d": embed_config.d,
              "max_iters": embed_config.max_iters, "init": embed_config.init}
    try:
        result = embed(cohort, ctx, embed_config)
        axis = leading_axis_coordinate(np.asarray(result.embedding.coords))
        rho = aligned_spearman(cohort.survival, axis)
        metrics = {"spearman_abs": rho,
                   "final_loss": result.final_loss,
                   "iterations": float(result.iterations)}
    except SosmError as exc:
        metrics = {"experiment_failed": 1.0}
        params["error"] = str(exc)
    passed = evaluate_pass("survival_gradient", metrics, tolerances)
    return ExperimentReport(name="survival_gradient", seed=synthetic.seed,
                            inputs_digest=cohort_digest(cohort), params=params,
                            metrics=metrics, tolerances=tolerances, passed=passed,
                            runtime_seconds=time.perf_counter() - start)


def _perturbation_field(kind: str, u: np.ndarray, seed: int):
    """A smooth field vanishing at both endpoints, with its exact second derivative."""
    if kind == "sine":
        value = np.sin(np.pi * u)
        second = -(np.pi ** 2) * np.sin(np.pi * u)
        return value, second
    if kind == "random-smooth":
        rng = np.random.default_rng(seed)
        modes = np.arange(1, 6)
        coeffs = rng.standard_normal(modes.size) / modes ** 2
        value = np.zeros_like(u)
        second = np.zeros_like(u)
        for k, c in zip(modes, coeffs):
            value += c * np.sin(k * np.pi * u)
            second += -c * (k * np.pi) ** 2 * np.sin(k * np.pi * u)
        return value, second
    raise ParameterError(f"perturbation must be 'sine' or 'random-smooth', got {kind!r}")


def stability_experiment(m: int, perturbation: str = "sine",
                         epsilons=(1e-1, 1e-2, 1e-3), seed: int = 0,
                         slope_tol: float = 0.05,
                         ratio_tol: float = 0.02) -> ExperimentReport:
    """Second-order energy growth of a perturbed straight trajectory."""
    if m < 50:
        raise ParameterError(f"m must be >= 50, got {m}")
    eps = np.array(list(epsilons), dtype=float)
    if eps.size < 2 or np.any(eps <= 0) or np.any(eps > 0.2) or np.any(np.diff(eps) >= 0):
        raise ParameterError("epsilons must be a decreasing sequence in (0, 0.2]")

    start = time.perf_counter()
    u = np.linspace(0.0, 1.0, m)
    value, second = _perturbation_field(perturbation, u, seed)
    quadrature = float(np.trapezoid(second ** 2, u))

    deltas = []
    for e in eps:
        points = np.stack([u, e * value], axis=1)
        deltas.append(curve_energy(Polyline(points=points)))
    deltas = np.array(deltas)
    slope = float(np.polyfit(np.log(eps), np.log(deltas), 1)[0])
    ratio = float((deltas[-1] / eps[-1] ** 2) / quadrature)

    metrics = {"slope": slope,
               "ratio_vs_quadrature": ratio,
               "quadrature_second_variation": quadrature,
               "delta_energy_smallest": float(deltas[-1])}
    tolerances = {"slope_tol": float(slope_tol), "ratio_tol": float(ratio_tol)}
    params = {"m": m, "perturbation": perturbation,
              "epsilons": [float(e) for e in eps]}
    digest = hashlib.sha256(
        f"stability|{m}|{perturbation}|{eps.tolist()}|{seed}".encode()).hexdigest()
    passed = evaluate_pass("stability", metrics, tolerances)
    return ExperimentReport(name="stability", seed=seed, inputs_digest=digest,
                            params=params, metrics=metrics, tolerances=tolerances,
                            passed=passed, runtime_seconds=time.perf_counter() - start)


def _spectral_polyline(graph, survival: np.ndarray) -> tuple[Polyline, np.ndarray]:
    """Survival-ordered polyline through 2-D spectral coordinates of the graph.

    Coordinates are the bottom nontrivial Laplacian eigenvectors scaled by
    their inverse eigenvalues (diffusion-map convention), which keeps the
    polyline tracking the dominant graph geometry instead of noisy
    subdominant modes.
    """
    laplacian = graph_laplacian(graph, "combinatorial")
    evals, evecs = np.linalg.eigh(laplacian.values)
    nontrivial = np.flatnonzero(evals > 1e-10 * max(abs(evals[-1]), 1.0))
    if nontrivial.size < 2:
        raise ParameterError("graph has fewer than 2 nontrivial spectral directions")
    coords = evecs[:, nontrivial[:2]] / evals[nontrivial[:2]]
    order = np.argsort(survival, kind="stable")
    points = coords[order]
    times = survival[order]
    keep = np.concatenate([[True], np.linalg.norm(np.diff(points, axis=0), axis=1) > 0])
    return Polyline(points=points[keep]), times[keep]


def flow_convergence_experiment(synthetic: SyntheticCohort, idleness: float = 0.5,
                                eta: float = 0.05, iters: int = 20, k: int = 8,
                                subsample: bool = True,
                                energy_increase_max: float = 0.05) -> ExperimentReport:
    """Run the curvature flow and audit variance and weighted-energy changes.

    The flow only moves edge weights, so the before/after energies compare
    the survival-ordered polyline through the spectral coordinates of the
    initial versus final graph.
    """
    cohort = synthetic.cohort
    if cohort.survival is None:
        raise ParameterError("flow convergence experiment needs survival times")
    start = time.perf_counter()
    tolerances = {"energy_increase_max": float(energy_increase_max)}
    params = {"n": cohort.n_samples, "k": k, "idleness": idleness,
              "eta": eta, "iters": iters, "family": synthetic.family,
              "subsample": subsample}
    try:
        graph = build_knn_graph(cohort, k=k)
        sigma = median_pairwise(cohort.survival)
        line_before, times_before = _spectral_polyline(graph, cohort.survival)
        energy_before = weighted_curve_energy(line_before, times_before, sigma)
        trace = run_flow(graph, idleness=idleness, eta=eta, iters=iters,
                         subsample=subsample)
        line_after, times_after = _spectral_polyline(trace.final_graph, cohort.survival)
        energy_after = weighted_curve_energy(line_after, times_after, sigma)
        variances = trace.variances()
        weights = trace.total_weights()
        metrics = {
            "curvature_variance_initial": float(variances[0]),
            "curvature_variance_final": float(variances[-1]),
            "weighted_energy_before": float(energy_before),
            "weighted_energy_after": float(energy_after),
            "total_weight_drift": float(np.abs(weights - weights[0]).max()
                                        / weights[0]),
            "snapshots": float(len(trace.snapshots)),
        }
        params["variance_trajectory"] = [float(v) for v in variances]
    except SosmError as exc:
        metrics = {"experiment_failed": 1.0}
        params["error"] = str(exc)
    passed = evaluate_pass("flow_convergence", metrics, tolerances)
    return ExperimentReport(name="flow_convergence", seed=synthetic.seed,
                            inputs_digest=cohort_digest(cohort), params=params,
                            metrics=metrics, tolerances=tolerances, passed=passed,
                            runtime_seconds=time.perf_counter() - start)
