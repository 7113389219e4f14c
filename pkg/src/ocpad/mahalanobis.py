"""Single-Gaussian baseline: whitened distance to the class mean in a PCA subspace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import OneClassDetector, training_offset
from .exceptions import DegenerateInputError, DimensionError, ValidationError
from .linalg import sym_eig, symmetrize

DEFAULT_VARIANCE_FRACTION = 0.99
RANK_TOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, dim), orthonormal rows
    scales: np.ndarray  # sqrt of the retained eigenvalues
    variance_fraction: float
    eigenvalues: np.ndarray = None  # full non-zero spectrum, descending

    @property
    def retained_k(self):
        return self.components.shape[0]

    def whiten(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.mean.shape[0]:
            raise DimensionError(f"expected dimension {self.mean.shape[0]}, got {X.shape[1]}")
        return ((X - self.mean) @ self.components.T) / self.scales


def covariance_eigenpairs(X, method="auto"):
    """Non-zero eigenpairs of the sample covariance of ``X`` (n - 1 denominator).

    With more dimensions than samples, the ``n x n`` Gram matrix of the
    centred data is decomposed instead and its eigenvectors mapped back,
    which yields the same non-zero eigenpairs at ``O(n^3)`` cost.

    Returns ``(eigenvalues, vectors)`` with vectors as columns, eigenvalues
    descending and ``<= 1e-12 * max`` already dropped.
    """
    X = np.asarray(X, dtype=np.float64)
    n, dim = X.shape
    Xc = X - X.mean(axis=0)
    if method == "auto":
        method = "snapshot" if dim > n else "direct"
    if method == "direct":
        eig = sym_eig(symmetrize(Xc.T @ Xc / (n - 1)), psd=True)
        vals, vecs = eig.eigenvalues, eig.eigenvectors
    elif method == "snapshot":
        eig = sym_eig(symmetrize(Xc @ Xc.T / (n - 1)), psd=True)
        vals, U = eig.eigenvalues, eig.eigenvectors
        keep = vals > 0
        vals, U = vals[keep], U[:, keep]
        # C v = lam v  with  v = Xc^T u / sqrt((n - 1) lam)
        vecs = (Xc.T @ U) / np.sqrt((n - 1) * vals)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if vals.size == 0 or vals[0] <= 0:
        raise DegenerateInputError("training vectors are all identical (zero covariance)")
    keep = vals > RANK_TOL * vals[0]
    return vals[keep], vecs[:, keep]


def fit_pca(train, variance_fraction=DEFAULT_VARIANCE_FRACTION, method="auto") -> PcaModel:
    """Fit mean and leading covariance eigenvectors retaining ``variance_fraction``.

    ``retained_k`` is the smallest ``k`` whose eigenvalues account for at
    least ``variance_fraction`` of the total, after zero-variance directions
    have been dropped.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("fit_pca needs at least two training vectors")
    if not 0.0 < variance_fraction <= 1.0:
        raise ValidationError(f"variance_fraction must lie in (0, 1], got {variance_fraction}")
    vals, vecs = covariance_eigenpairs(X, method)
    share = np.cumsum(vals) / vals.sum()
    # tolerate round-off in the cumulative share so that fraction 1.0 keeps everything
    k = int(np.searchsorted(share, variance_fraction - 1e-12)) + 1
    k = min(k, vals.size)
    return PcaModel(
        mean=X.mean(axis=0),
        components=np.ascontiguousarray(vecs[:, :k].T),
        scales=np.sqrt(vals[:k]),
        variance_fraction=float(variance_fraction),
        eigenvalues=vals,
    )


def md_score(model: PcaModel, x) -> float:
    """Whitened distance ``||diag(1/scales) V^T (x - mean)||`` of one vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("md_score expects a single vector")
    return float(np.linalg.norm(model.whiten(x)[0]))


class MahalanobisDetector(OneClassDetector):
    """Distance to the training mean in the eigenvalue-whitened PCA space.

    Parameters
    ----------
    variance_fraction : float, default 0.99
    contamination : float, default 0.05
        Share of training vectors treated as outliers when placing ``offset_``.
    """

    def __init__(self, variance_fraction=DEFAULT_VARIANCE_FRACTION, contamination=0.05):
        self.variance_fraction = variance_fraction
        self.contamination = contamination

    def fit(self, X, y=None):
        X = self._validate(X, reset=True)
        self.pca_ = fit_pca(X, self.variance_fraction)
        self.offset_ = training_offset(self._distances(X), self.contamination)
        return self

    def _distances(self, X):
        return np.linalg.norm(self.pca_.whiten(X), axis=1)

    def anomaly_score(self, X):
        X = self._validate(X, reset=False)
        return self._distances(X)
