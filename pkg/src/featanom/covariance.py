"""Gaussian statistics: covariance/precision estimation and Mahalanobis distance.

Two estimators are provided:

* ``fit_empirical`` -- maximum-likelihood covariance (divisor n). Singular
  matrices are handled by a Moore-Penrose pseudo-inverse computed from the
  symmetric eigendecomposition, zeroing eigenvalues <= p * eps * lambda_max.
* ``fit_ledoit_wolf`` -- convex shrinkage of the empirical covariance
  toward a scaled identity, (1 - delta) * S + delta * m * I with
  m = trace(S) / p. The intensity delta is estimated from the data
  (Ledoit & Wolf 2004) and clipped to [0, 1]; the result is invertible for
  any non-degenerate sample, which is what makes it usable when n is close
  to or below p.

All statistics run in float64 regardless of the input dtype.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, EmptyInput

EMPIRICAL = "empirical"
LEDOIT_WOLF = "ledoit_wolf"
ESTIMATORS = (EMPIRICAL, LEDOIT_WOLF)

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class GaussianStats:
    """Fitted mean / covariance / precision triple.

    ``covariance`` may be None when a model keeps only the precision to
    halve its memory footprint; the distance needs only mean + precision.
    ``shrinkage`` is 0 for the empirical estimator.
    """

    mean: np.ndarray
    covariance: np.ndarray | None
    precision: np.ndarray
    estimator: str
    shrinkage: float
    n_samples: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def without_covariance(self) -> "GaussianStats":
        return GaussianStats(
            mean=self.mean,
            covariance=None,
            precision=self.precision,
            estimator=self.estimator,
            shrinkage=self.shrinkage,
            n_samples=self.n_samples,
        )


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def _as_sample_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected an n x p sample matrix, got shape {arr.shape}")
    n, p = arr.shape
    if n < 1 or p < 1:
        raise EmptyInput(f"need at least one sample and one feature, got shape {arr.shape}")
    return arr


def pinv_psd(s: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues <= p * eps * lambda_max are treated as zero rank.
    """
    w, v = np.linalg.eigh(_symmetrize(np.asarray(s, dtype=np.float64)))
    lam_max = max(float(w[-1]), 0.0)
    cutoff = s.shape[0] * _EPS * lam_max
    keep = w > cutoff
    if not keep.any():
        return np.zeros_like(s, dtype=np.float64)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return _symmetrize((v * inv_w) @ v.T)


def empirical_covariance(x) -> tuple[np.ndarray, np.ndarray]:
    """Column means and maximum-likelihood covariance (divisor n)."""
    arr = _as_sample_matrix(x)
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = _symmetrize(centered.T @ centered / arr.shape[0])
    return mean, cov


def fit_empirical(x) -> GaussianStats:
    """Maximum-likelihood Gaussian fit; precision is a pseudo-inverse so a
    singular covariance (n <= p) never raises."""
    arr = _as_sample_matrix(x)
    mean, cov = empirical_covariance(arr)
    return GaussianStats(
        mean=mean,
        covariance=cov,
        precision=pinv_psd(cov),
        estimator=EMPIRICAL,
        shrinkage=0.0,
        n_samples=arr.shape[0],
    )


def ledoit_wolf_shrinkage(x) -> float:
    """Optimal shrinkage intensity toward m * I, estimated from the data.

    delta = beta / d2 with
      d2   = ||S - m I||_F^2 / p                     (dispersion of S)
      beta = min(d2, sum_t ||x_t x_t^T - S||_F^2 / (n^2 p))  (noise in S)
    so delta in [0, 1]. A perfectly isotropic S (d2 == 0, which includes
    an all-identical sample where S == 0) is pinned at delta = 1.
    """
    arr = _as_sample_matrix(x)
    n, p = arr.shape
    centered = arr - arr.mean(axis=0)
    cov = centered.T @ centered / n
    mu = np.trace(cov) / p

    s_frob2 = float(np.sum(cov * cov))
    d2 = (s_frob2 - p * mu * mu) / p
    if d2 <= 0.0:
        return 1.0

    sq = centered * centered
    beta = (float(np.sum(sq.T @ sq)) / n - s_frob2) / (n * p)
    beta = min(max(beta, 0.0), d2)
    return beta / d2


def fit_ledoit_wolf(x) -> GaussianStats:
    """Shrunk Gaussian fit: covariance = (1 - delta) * S + delta * m * I.

    The precision is the exact inverse, computed through a Cholesky
    factorization; if the shrunk matrix is still singular (only possible
    in degenerate cases such as S == 0) it falls back to the pseudo-inverse.
    """
    arr = _as_sample_matrix(x)
    n, p = arr.shape
    mean, cov = empirical_covariance(arr)
    mu = np.trace(cov) / p
    delta = ledoit_wolf_shrinkage(arr)

    shrunk = (1.0 - delta) * cov
    shrunk.flat[:: p + 1] += delta * mu
    shrunk = _symmetrize(shrunk)

    try:
        factor = sla.cho_factor(shrunk, lower=True, check_finite=False)
        precision = _symmetrize(sla.cho_solve(factor, np.eye(p), check_finite=False))
    except (np.linalg.LinAlgError, sla.LinAlgError):
        precision = pinv_psd(shrunk)

    return GaussianStats(
        mean=mean,
        covariance=shrunk,
        precision=precision,
        estimator=LEDOIT_WOLF,
        shrinkage=float(delta),
        n_samples=n,
    )


def fit(x, estimator: str) -> GaussianStats:
    if estimator == EMPIRICAL:
        return fit_empirical(x)
    if estimator == LEDOIT_WOLF:
        return fit_ledoit_wolf(x)
    raise ValueError(f"unknown estimator {estimator!r}, expected one of {ESTIMATORS}")


def mahalanobis(stats: GaussianStats, x) -> float:
    """sqrt((x - mean)^T precision (x - mean)), clamped at 0 against round-off."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != stats.mean.shape:
        raise DimensionMismatch(f"query shape {vec.shape} vs fitted dimension {stats.mean.shape}")
    diff = vec - stats.mean
    q = float(diff @ stats.precision @ diff)
    return float(np.sqrt(max(q, 0.0)))


def mahalanobis_many(stats: GaussianStats, x) -> np.ndarray:
    """Row-wise Mahalanobis distances for an (m, p) query matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != stats.dim:
        raise DimensionMismatch(f"query dimension {arr.shape[1]} vs fitted dimension {stats.dim}")
    diff = arr - stats.mean
    q = np.einsum("ij,jk,ik->i", diff, stats.precision, diff)
    return np.sqrt(np.maximum(q, 0.0))
