"""Canonical correlation of representation subsets with feature probabilities.

The second view is always a single feature-probability column, so the first
canonical correlation against the SVD-truncated representation equals the
multiple correlation of that column on the kept subspace. Per-feature
correlations are softmax-normalized into weights within each table, and
subset weights are reported relative to an accent-agnostic full-representation
baseline (ratio 1 means no accent-specific prominence).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class CcaConfig:
    variance_kept: float = 0.99
    ridge: float = 1e-8

    def __post_init__(self) -> None:
        if not 0 < self.variance_kept <= 1:
            raise ValidationError("variance_kept must lie in (0, 1]")
        if self.ridge < 0:
            raise ValidationError("ridge must be non-negative")


def truncated_projection(X: np.ndarray, variance_kept: float) -> tuple[np.ndarray, np.ndarray]:
    """Center X and truncate by SVD to the smallest rank keeping the requested
    variance fraction. Returns (U_r, s_r) with the projected data U_r * s_r."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    power = s ** 2
    total = power.sum()
    if total <= 0:
        raise ValidationError("representation matrix has zero variance")
    cum = np.cumsum(power) / total
    rank = int(np.searchsorted(cum, variance_kept - 1e-15) + 1)
    rank = min(rank, s.size)
    keep = s > 1e-12 * s[0]
    rank = min(rank, int(keep.sum()))
    return U[:, :rank], s[:rank]


def svcca_corr(X: np.ndarray, y: np.ndarray, cfg: CcaConfig = CcaConfig()) -> float:
    """First canonical correlation between truncated centered X and a 1-D y.

    Computed from the whitened cross-covariance with ridge stabilization and
    clipped to [0, 1]. Zero-variance y is an error; the sample count must
    exceed the kept rank.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValidationError("X and y disagree on sample count")
    yc = y - y.mean()
    y_norm = np.linalg.norm(yc)
    if y_norm <= 1e-12 * max(1.0, abs(float(y.mean()))):
        raise ValidationError("constant feature probabilities")
    U, s = truncated_projection(X, cfg.variance_kept)
    if U.shape[1] >= X.shape[0] - 1:
        # a centered design of rank n-1 spans the whole centered sample space,
        # so the correlation would be 1 for any y
        raise ValidationError(
            f"too few samples ({X.shape[0]}) for the kept rank ({U.shape[1]})"
        )
    # T = U diag(s); rho^2 = yc' T (T'T + ridge I)^-1 T' yc / |yc|^2
    u = U.T @ yc
    rho_sq = float(((s ** 2 / (s ** 2 + cfg.ridge)) * u ** 2).sum() / (y_norm ** 2))
    return float(np.clip(np.sqrt(max(rho_sq, 0.0)), 0.0, 1.0))


def correlate_features(
    X: np.ndarray,
    profiles: np.ndarray,
    feature_indices: Sequence[int],
    cfg: CcaConfig = CcaConfig(),
) -> np.ndarray:
    """One canonical correlation per requested profile column."""
    profiles = np.asarray(profiles, dtype=float)
    return np.asarray([
        svcca_corr(X, profiles[:, j], cfg) for j in feature_indices
    ])


def softmax_weights(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    z = v - v.max()
    e = np.exp(z)
    return e / e.sum()


def relative_weights(
    rho_subset: Mapping[str, float],
    rho_baseline: Mapping[str, float],
) -> dict[str, tuple[float, float, float]]:
    """Per-feature (subset weight, baseline weight, ratio).

    Both tables are softmax-normalized over the same feature list; the ratio
    exceeds 1 where the probe-selected subset carries relatively more
    information about the feature than the accent-agnostic baseline.
    """
    if list(rho_subset.keys()) != list(rho_baseline.keys()):
        raise ValidationError(
            f"feature lists differ: {list(rho_subset)} vs {list(rho_baseline)}"
        )
    names = list(rho_subset.keys())
    w_sub = softmax_weights([rho_subset[f] for f in names])
    w_base = softmax_weights([rho_baseline[f] for f in names])
    return {
        f: (float(w_sub[i]), float(w_base[i]), float(w_sub[i] / w_base[i]))
        for i, f in enumerate(names)
    }
