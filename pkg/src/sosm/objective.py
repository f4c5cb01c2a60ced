"""The quadratic embedding objective, its exact gradient, and the optimizer.

The loss couples samples through a fixed input-space graph Laplacian L:

    loss(Z) = sum over pairs (i, j) of  w_ij * ||(LZ)_i - (LZ)_j||^2

(the 'pairwise' penalty; the 'absolute' variant penalizes each row norm
separately). The sum runs over unordered pairs with nonzero weight.

Plain gradient descent would collapse Z to a constant, which zeroes the
loss, so the optimizer periodically re-centers columns and whitens so that
Z^T Z / N = I. The trace between whitening events is non-increasing thanks
to step-halving backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import Cohort, Embedding, LaplacianMatrix
from .errors import (ConvergenceError, DivergenceError, ParameterError,
                     SizeError)
from .kernel import WEIGHT_CLAMP, WeightMatrix

PENALTIES = ("pairwise", "absolute")


@dataclass(frozen=True)
class SosmObjectiveContext:
    """Fixed ingredients of the loss: Laplacian, weights, and the pair set."""

    laplacian: LaplacianMatrix
    weights: WeightMatrix
    pair_set: np.ndarray
    penalty: str = "pairwise"

    def __post_init__(self):
        if self.laplacian.n != self.weights.n:
            raise SizeError(f"laplacian N={self.laplacian.n} does not match "
                            f"weights N={self.weights.n}")
        if self.penalty not in PENALTIES:
            raise ParameterError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        pairs = np.array(self.pair_set, dtype=int).reshape(-1, 2)
        if pairs.size and (np.any(pairs < 0) or np.any(pairs >= self.laplacian.n)):
            raise ParameterError("pair indices out of range")
        if pairs.size and np.any(pairs[:, 0] == pairs[:, 1]):
            raise ParameterError("pair set must not contain self-pairs")
        lo = np.minimum(pairs[:, 0], pairs[:, 1]) if pairs.size else pairs[:, :1]
        hi = np.maximum(pairs[:, 0], pairs[:, 1]) if pairs.size else pairs[:, 1:]
        pairs = np.stack([lo.ravel(), hi.ravel()], axis=1) if pairs.size else pairs
        if pairs.size:
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            pairs = pairs[order]
        pairs.flags.writeable = False
        object.__setattr__(self, "pair_set", pairs)

    @property
    def n(self) -> int:
        return self.laplacian.n

    @property
    def pair_weights(self) -> np.ndarray:
        return self.weights.values[self.pair_set[:, 0], self.pair_set[:, 1]]


def build_context(laplacian: LaplacianMatrix, weights: WeightMatrix,
                  threshold: float = WEIGHT_CLAMP,
                  penalty: str = "pairwise") -> SosmObjectiveContext:
    """Context over all unordered pairs whose weight exceeds the threshold."""
    iu, ju = np.triu_indices(weights.n, 1)
    keep = weights.values[iu, ju] > threshold
    pairs = np.stack([iu[keep], ju[keep]], axis=1)
    return SosmObjectiveContext(laplacian=laplacian, weights=weights,
                                pair_set=pairs, penalty=penalty)


def _check_dims(z: Embedding, ctx: SosmObjectiveContext):
    if z.n != ctx.n:
        raise SizeError(f"embedding N={z.n} does not match context N={ctx.n}")


def sosm_loss(z: Embedding, ctx: SosmObjectiveContext) -> float:
    """Weighted pairwise quadratic over Laplacian images of the embedding."""
    _check_dims(z, ctx)
    lz = ctx.laplacian.values @ z.coords
    i, j = ctx.pair_set[:, 0], ctx.pair_set[:, 1]
    w = ctx.pair_weights
    if ctx.penalty == "pairwise":
        diff = lz[i] - lz[j]
        return float(np.sum(w * np.einsum("ij,ij->i", diff, diff)))
    norms = np.einsum("ij,ij->i", lz, lz)
    return float(np.sum(w * (norms[i] + norms[j])))


def sosm_gradient(z: Embedding, ctx: SosmObjectiveContext) -> np.ndarray:
    """Exact gradient of sosm_loss; linear in Z since the loss is quadratic."""
    _check_dims(z, ctx)
    lz = ctx.laplacian.values @ z.coords
    i, j = ctx.pair_set[:, 0], ctx.pair_set[:, 1]
    w = ctx.pair_weights
    grad_lz = np.zeros_like(lz)
    if ctx.penalty == "pairwise":
        contrib = (2.0 * w)[:, None] * (lz[i] - lz[j])
        np.add.at(grad_lz, i, contrib)
        np.subtract.at(grad_lz, j, contrib)
    else:
        np.add.at(grad_lz, i, (2.0 * w)[:, None] * lz[i])
        np.add.at(grad_lz, j, (2.0 * w)[:, None] * lz[j])
    return ctx.laplacian.values.T @ grad_lz


def fd_gradient(z: Embedding, ctx: SosmObjectiveContext, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, the oracle for sosm_gradient."""
    if not h > 0:
        raise ParameterError(f"h must be > 0, got {h}")
    _check_dims(z, ctx)
    base = np.array(z.coords)
    grad = np.zeros_like(base)
    for r in range(base.shape[0]):
        for c in range(base.shape[1]):
            bumped = base.copy()
            bumped[r, c] += h
            plus = sosm_loss(Embedding(coords=bumped), ctx)
            bumped[r, c] -= 2.0 * h
            minus = sosm_loss(Embedding(coords=bumped), ctx)
            grad[r, c] = (plus - minus) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class OptimizerConfig:
    """Descent schedule for embed(); all numeric fields must be positive."""

    d: int = 2
    max_iters: int = 300
    step_size: float = 1e-3
    tol: float = 1e-9
    whiten_every: int = 10
    seed: int = 0
    init: str = "spectral"

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.step_size > 0:
            raise ParameterError(f"step_size must be > 0, got {self.step_size}")
        if not 0 < self.tol < 1:
            raise ParameterError(f"tol must be in (0, 1), got {self.tol}")
        if self.whiten_every < 1:
            raise ParameterError(f"whiten_every must be >= 1, got {self.whiten_every}")
        if self.init not in ("spectral", "random"):
            raise ParameterError(f"init must be 'spectral' or 'random', got {self.init!r}")


@dataclass(frozen=True)
class EmbedResult:
    embedding: Embedding
    loss_trace: np.ndarray = field(repr=False)
    iterations: int
    converged: bool

    def __post_init__(self):
        trace = np.array(self.loss_trace, dtype=float)
        trace.flags.writeable = False
        object.__setattr__(self, "loss_trace", trace)

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[-1])


def _whiten(z: np.ndarray) -> np.ndarray:
    """Zero column means, then rescale so Z^T Z / N is the identity."""
    z = z - z.mean(axis=0)
    cov = z.T @ z / z.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 1e-300:
        raise ConvergenceError("embedding lost rank; whitening undefined")
    return z @ (evecs / np.sqrt(evals)) @ evecs.T


def spectral_init(laplacian: LaplacianMatrix, d: int) -> np.ndarray:
    """Bottom d nontrivial eigenvectors of the Laplacian (constant modes skipped)."""
    if laplacian.kind == "combinatorial":
        evals, evecs = np.linalg.eigh(laplacian.values)
    else:
        raw_evals, raw_evecs = scipy.linalg.eig(laplacian.values)
        order = np.argsort(raw_evals.real, kind="stable")
        evals = raw_evals.real[order]
        evecs = raw_evecs.real[:, order]
    nontrivial = np.flatnonzero(evals > 1e-10 * max(abs(evals[-1]), 1.0))
    if nontrivial.size < d:
        raise ParameterError(
            f"graph supports only {nontrivial.size} nontrivial spectral directions, "
            f"need d={d}")
    return np.array(evecs[:, nontrivial[:d]])


def spectral_embedding(laplacian: LaplacianMatrix, d: int) -> Embedding:
    """Whitened bottom-spectrum embedding, the optimizer's starting point."""
    return Embedding(coords=_whiten(spectral_init(laplacian, d)))


def embed(cohort: Cohort, ctx: SosmObjectiveContext, cfg: OptimizerConfig) -> EmbedResult:
    """Whitened gradient descent on sosm_loss.

    Starts from the whitened spectral (or seeded random) initializer,
    takes fixed-size steps with halving-on-increase backtracking, re-centers
    and whitens every cfg.whiten_every iterations and once more at the end,
    and stops early when the relative loss change drops below cfg.tol.
    Identical cohort, context, and config reproduce the trace bitwise.
    """
    if cohort.n_samples != ctx.n:
        raise SizeError(f"cohort N={cohort.n_samples} does not match context N={ctx.n}")
    if cfg.d > cohort.n_features:
        raise ParameterError(f"latent dimension d={cfg.d} exceeds feature dimension "
                             f"D={cohort.n_features}")
    if cfg.init == "spectral":
        z = spectral_init(ctx.laplacian, cfg.d)
    else:
        rng = np.random.default_rng(cfg.seed)
        z = rng.standard_normal((ctx.n, cfg.d))
    z = _whiten(z)

    current = sosm_loss(Embedding(coords=z), ctx)
    if not np.isfinite(current):
        raise DivergenceError(0)
    trace = [current]
    step = cfg.step_size
    converged = False
    iterations = 0
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        grad = sosm_gradient(Embedding(coords=z), ctx)
        accepted = False
        for _ in range(11):
            candidate = z - step * grad
            if np.all(np.isfinite(candidate)):
                cand_loss = sosm_loss(Embedding(coords=candidate), ctx)
            else:
                cand_loss = np.inf
            if np.isfinite(cand_loss) and cand_loss <= current:
                accepted = True
                break
            step /= 2.0
        if not accepted:
            raise ConvergenceError(
                f"step size adaptation failed after 10 halvings at iteration {it}")
        previous, z, current = current, candidate, cand_loss
        if not np.isfinite(current):
            raise DivergenceError(it)
        if it % cfg.whiten_every == 0:
            z = _whiten(z)
            current = sosm_loss(Embedding(coords=z), ctx)
        trace.append(current)
        if abs(previous - current) <= cfg.tol * max(abs(previous), 1e-300):
            converged = True
            break

    z = _whiten(z)
    current = sosm_loss(Embedding(coords=z), ctx)
    trace.append(current)
    return EmbedResult(embedding=Embedding(coords=z), loss_trace=np.array(trace),
                       iterations=iterations, converged=converged)
