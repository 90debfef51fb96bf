"""Leverage-score reweighted feature selection.

The procedure: draw a pool of ``M`` features, embed ``L`` probe points drawn
from the training set into the columns of ``Phi`` (scaled by ``1/sqrt(L)``),
take the diagonal of ``S (S + mu I)^-1`` with ``S = Phi Phi^T`` as leverage
scores, and resample ``N`` features with probability proportional to them.

Resampled features carry the importance weight ``1/sqrt(M p_i)`` so that
the implied kernel remains an unbiased estimate of the pool kernel; pass
``weighted=False`` to keep unit weights instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DegenerateError, ValidationError
from .features import FeatureSet, embed, sample_features, FeatureSpec


@dataclass(frozen=True)
class SelectionConfig:
    pool_size: int
    probe_count: int
    ridge: float
    target_count: int
    seed: int = 0
    weighted: bool = True

    def __post_init__(self):
        for name in ("pool_size", "probe_count", "target_count"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.target_count > self.pool_size:
            raise ValidationError("target_count must not exceed pool_size")
        if not (self.ridge > 0 and math.isfinite(self.ridge)):
            raise ValidationError(f"ridge must be positive, got {self.ridge!r}")


@dataclass(frozen=True)
class LeverageScores:
    """Row-wise diagonal of ``S (S + mu I)^-1``.

    For a Fourier pool there are ``2M`` rows (cosine block, then sine block);
    ``blocks`` records how many rows belong to each feature.
    """

    scores: np.ndarray
    ridge: float
    blocks: int = 1

    def feature_scores(self) -> np.ndarray:
        """Per-feature score: sum of the rows belonging to each feature."""
        return self.scores.reshape(self.blocks, -1).sum(axis=0)


def build_probe_matrix(fs_pool: FeatureSet, xs) -> np.ndarray:
    """Matrix whose column ``j`` is ``embed(fs_pool, x_j) / sqrt(L)``."""
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if fs_pool.spec.dim > 1 else X.reshape(-1, 1)
    if X.shape[0] < 1:
        raise ValidationError("need at least one probe point")
    Z = embed(fs_pool, X)
    return np.ascontiguousarray(Z.T) / math.sqrt(X.shape[0])


def compute_leverage(phi, mu: float, blocks: int = 1) -> LeverageScores:
    """Diagonal of ``Phi Phi^T (Phi Phi^T + mu I)^-1`` via a symmetric eigensolve.

    When ``Phi`` has more rows than columns the eigenpairs of ``S`` are
    recovered from the smaller ``Phi^T Phi`` (same nonzero spectrum).
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise ValidationError("Phi must be a matrix")
    if not np.all(np.isfinite(phi)):
        raise ValidationError("Phi has non-finite entries")
    if not (mu > 0 and math.isfinite(mu)):
        raise ValidationError(f"ridge must be positive, got {mu!r}")
    rows, cols = phi.shape
    if rows <= cols:
        evals, U = np.linalg.eigh(phi @ phi.T)
        evals = np.maximum(evals, 0.0)
        r = (U * U) @ (evals / (evals + mu))
    else:
        evals, V = np.linalg.eigh(phi.T @ phi)
        evals = np.maximum(evals, 0.0)
        # u_k = Phi v_k / sqrt(s_k); the 1/s_k cancels against s_k/(s_k + mu)
        B = phi @ V
        r = (B * B) @ (1.0 / (evals + mu))
    r = np.clip(r, 0.0, None)
    return LeverageScores(r, float(mu), int(blocks))


def empirical_dof(lev: LeverageScores) -> float:
    """Sum of the leverage scores: the empirical degrees of freedom."""
    return float(np.sum(lev.scores))


def resampling_distribution(lev: LeverageScores, weighted: bool = True):
    """Sampling probabilities ``p_i`` and importance weights ``1/sqrt(M p_i)``.

    Features with ``p_i = 0`` get weight ``inf``; they are never drawn.
    """
    s = lev.feature_scores()
    total = float(s.sum())
    if not total > 0:
        raise DegenerateError("leverage scores are all zero; cannot form a distribution")
    p = s / total
    M = p.size
    if weighted:
        with np.errstate(divide="ignore"):
            a = 1.0 / np.sqrt(M * p)
    else:
        a = np.ones(M)
    return p, a


def resample_features(
    fs_pool: FeatureSet, lev: LeverageScores, n: int, seed: int = 0, weighted: bool = True
) -> FeatureSet:
    """Draw ``n`` features from the pool with replacement, ``p_i`` proportional to leverage."""
    if int(n) != n or n < 1:
        raise ValidationError(f"number of features must be a positive integer, got {n!r}")
    p, a = resampling_distribution(lev, weighted)
    if p.size != len(fs_pool):
        raise ValidationError(f"scores cover {p.size} features but the pool has {len(fs_pool)}")
    rng = _rng.make_rng(seed, _rng.RESAMPLE)
    idx = rng.choice(p.size, size=int(n), replace=True, p=p)
    return fs_pool.subset(idx, fs_pool.weights[idx] * a[idx])


def choose_probes(m: int, count: int, seed: int = 0) -> np.ndarray:
    """Indices of ``count`` probe points drawn uniformly without replacement."""
    if count > m:
        raise ValidationError(f"cannot draw {count} probe points from {m}")
    rng = _rng.make_rng(seed, _rng.PROBES)
    return np.sort(rng.choice(m, size=count, replace=False))


def select_features(spec: FeatureSpec, xs, cfg: SelectionConfig) -> tuple[FeatureSet, LeverageScores]:
    """Run the full pool / probe / leverage / resample procedure on training points ``xs``."""
    X = np.asarray(xs, dtype=np.float64)
    pool = sample_features(spec, cfg.pool_size, seed=cfg.seed)
    probes = X[choose_probes(X.shape[0], min(cfg.probe_count, X.shape[0]), cfg.seed)]
    phi = build_probe_matrix(pool, probes)
    lev = compute_leverage(phi, cfg.ridge, blocks=pool.blocks)
    return resample_features(pool, lev, cfg.target_count, cfg.seed, cfg.weighted), lev
