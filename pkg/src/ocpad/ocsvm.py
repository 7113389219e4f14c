"""nu-one-class SVM with an RBF kernel, trained by SMO.

The dual solved here is

    minimise    1/2 a^T K a
    subject to  0 <= a_i <= 1/(nu n),   sum_i a_i = 1,

and the decision function is ``g(x) = sum_i a_i k(x_i, x) - rho``, positive
in the region holding the training data.  Anomaly scores are ``-g(x)``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .base import OneClassDetector
from .dataset import subsample_indices
from .exceptions import ConvergenceError, DegenerateInputError, DimensionError, ValidationError

GAMMA_SUBSAMPLE = 256
GRAM_CACHE_LIMIT = 4096
DEFAULT_NU = 0.05
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10**7


@dataclass(frozen=True)
class RbfKernel:
    """``k(x, y) = exp(-gamma * ||x - y||^2)``."""

    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not (math.isfinite(g) and g > 0):
            raise ValidationError(f"gamma must be positive and finite, got {self.gamma}")
        object.__setattr__(self, "gamma", g)

    def __call__(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        # cdist differences are exact for identical rows, so k(x, x) == 1.
        return np.exp(-self.gamma * cdist(X, Y, "sqeuclidean"))


def canonical_order(X) -> np.ndarray:
    """Row permutation sorting ``X`` lexicographically (first column most significant)."""
    X = np.asarray(X)
    return np.lexsort(X.T[::-1])


def auto_gamma(train) -> float:
    """Median heuristic: ``1 / median ||x_i - x_j||^2``.

    The median is taken over all pairs of a uniform-stride subsample of at
    most 256 training vectors, so the result is deterministic.  If more than
    half of the pairs coincide, the median of the non-zero distances is used.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("auto_gamma needs at least two vectors")
    n = X.shape[0]
    if n > GAMMA_SUBSAMPLE:
        X = X[subsample_indices(n, GAMMA_SUBSAMPLE / n)]
    d2 = pdist(X, "sqeuclidean")
    positive = d2[d2 > 0]
    if positive.size == 0:
        raise DegenerateInputError("all training vectors coincide; kernel width undefined")
    med = np.median(d2)
    if med == 0.0:
        med = np.median(positive)
    return 1.0 / float(med)


@dataclass(frozen=True)
class OcsvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kernel: RbfKernel
    nu: float
    n_train: int
    kkt_gap: float = 0.0
    n_iter: int = 0

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionError(
                f"expected dimension {self.support_vectors.shape[1]}, got {X.shape[1]}")
        return self.kernel(X, self.support_vectors) @ self.alphas - self.rho


class _KernelColumns:
    """Columns of the training Gram matrix: precomputed when small, LRU-cached otherwise."""

    def __init__(self, X, kernel, cache_limit=GRAM_CACHE_LIMIT, lru_size=512):
        self.X = X
        self.kernel = kernel
        self.full = kernel(X, X) if X.shape[0] <= cache_limit else None
        self._lru = OrderedDict()
        self._lru_size = lru_size

    def __call__(self, i):
        if self.full is not None:
            return self.full[:, i]
        col = self._lru.get(i)
        if col is None:
            col = self.kernel(self.X, self.X[i:i + 1])[:, 0]
            self._lru[i] = col
            if len(self._lru) > self._lru_size:
                self._lru.popitem(last=False)
        else:
            self._lru.move_to_end(i)
        return col

    def matvec(self, a):
        if self.full is not None:
            return self.full @ a
        out = np.zeros(self.X.shape[0])
        for i in np.flatnonzero(a):
            out += a[i] * self(i)
        return out


def initial_alphas(n, nu):
    """Feasible start: the first ``floor(nu n)`` multipliers at the upper bound."""
    C = 1.0 / (nu * n)
    k = min(n, int(math.floor(nu * n + 1e-9)))
    a = np.zeros(n)
    a[:k] = C
    rem = 1.0 - k * C
    if k < n and rem > 0:
        a[k] = min(rem, C)
    return a


def kkt_gap(G, alpha, C):
    """Maximal violating-pair gap ``max_{a_j>0} G_j - min_{a_i<C} G_i`` (<= 0 when optimal)."""
    up = alpha < C
    low = alpha > 0
    if not up.any() or not low.any():
        return 0.0
    return float(G[low].max() - G[up].min())


def solve_dual(columns, n, nu, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """SMO with maximal-violating-pair selection; ties go to the lowest index.

    Returns ``(alpha, G, n_iter)`` where ``G = K alpha`` is recomputed from
    scratch at the end.
    """
    C = 1.0 / (nu * n)
    alpha = initial_alphas(n, nu)
    G = columns.matvec(alpha)
    n_iter = 0
    while True:
        up = alpha < C
        low = alpha > 0
        if not up.any() or not low.any():
            break
        i = int(np.argmin(np.where(up, G, np.inf)))
        j = int(np.argmax(np.where(low, G, -np.inf)))
        gap = G[j] - G[i]
        if gap <= tol:
            break
        if n_iter >= max_iter:
            raise ConvergenceError(
                f"SMO hit the {max_iter} update cap with KKT gap {gap:.3e}")
        Qi, Qj = columns(i), columns(j)
        quad = Qi[i] + Qj[j] - 2.0 * Qi[j]
        if quad <= 0:
            quad = 1e-12
        delta = gap / quad
        room_i, room_j = C - alpha[i], alpha[j]
        if delta >= room_i and room_i <= room_j:
            delta = room_i
            alpha[j] -= delta
            alpha[i] = C
            if room_i == room_j:
                alpha[j] = 0.0
        elif delta >= room_j:
            delta = room_j
            alpha[i] += delta
            alpha[j] = 0.0
        else:
            alpha[i] += delta
            alpha[j] -= delta
        G += delta * (Qi - Qj)
        n_iter += 1
    return alpha, columns.matvec(alpha), n_iter


def offset_from_gradient(G, alpha, C):
    """``rho`` making ``g = 0`` on margin support vectors.

    Averages ``G`` over the free multipliers; without any, takes the
    midpoint of the interval allowed by the bounded ones.
    """
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(G[free].mean())
    at_upper = alpha >= C
    at_zero = alpha <= 0
    lo = G[at_upper].max() if at_upper.any() else None
    hi = G[at_zero].min() if at_zero.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def train_ocsvm(train, nu=DEFAULT_NU, kernel=None, tol=DEFAULT_TOL,
                max_iter=DEFAULT_MAX_ITER) -> OcsvmModel:
    """Fit the nu-OCSVM dual.

    Parameters
    ----------
    train : array_like, shape (n, d)
        Normal-class vectors, n >= 2.  Rows are put into lexicographic order
        first so the model does not depend on the order of the input.
    nu : float in (0, 1]
        Upper bound on the outlier fraction, lower bound on the
        support-vector fraction.
    kernel : RbfKernel, optional
        Defaults to the median-heuristic width.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("train_ocsvm needs at least two training vectors")
    if not 0.0 < nu <= 1.0:
        raise ValidationError(f"nu must lie in (0, 1], got {nu}")
    X = X[canonical_order(X)]
    if kernel is None:
        kernel = RbfKernel(auto_gamma(X))
    n = X.shape[0]
    C = 1.0 / (nu * n)
    columns = _KernelColumns(X, kernel)
    alpha, G, n_iter = solve_dual(columns, n, nu, tol=tol, max_iter=max_iter)
    rho = offset_from_gradient(G, alpha, C)
    sv = alpha > 0
    return OcsvmModel(
        support_vectors=X[sv].copy(),
        alphas=alpha[sv].copy(),
        rho=rho,
        kernel=kernel,
        nu=float(nu),
        n_train=n,
        kkt_gap=kkt_gap(G, alpha, C),
        n_iter=n_iter,
    )


def ocsvm_score(model: OcsvmModel, x) -> float:
    """Anomaly score ``rho - sum_i a_i k(sv_i, x)`` of one vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("ocsvm_score expects a single vector")
    return float(-model.decision(x[None, :])[0])


class OneClassSVM(OneClassDetector):
    """nu-OCSVM estimator.

    Parameters
    ----------
    nu : float, default 0.05
    gamma : float or "auto", default "auto"
        RBF width; ``"auto"`` applies :func:`auto_gamma` to the training set.
    tol : float, default 1e-6
        Stopping tolerance on the maximal violating-pair gap.
    max_iter : int, default 10**7
        Cap on SMO pair updates.
    """

    def __init__(self, nu=DEFAULT_NU, gamma="auto", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.nu = nu
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = self._validate(X, reset=True)
        X = X[canonical_order(X)]
        gamma = auto_gamma(X) if self.gamma == "auto" else float(self.gamma)
        self._set_model(train_ocsvm(X, self.nu, RbfKernel(gamma), tol=self.tol,
                                    max_iter=self.max_iter))
        return self

    def _set_model(self, model):
        self.model_ = model
        self.gamma_ = model.kernel.gamma
        self.support_vectors_ = model.support_vectors
        self.dual_coef_ = model.alphas
        self.rho_ = model.rho
        self.offset_ = 0.0
        self.n_features_in_ = model.support_vectors.shape[1]

    def anomaly_score(self, X):
        X = self._validate(X, reset=False)
        return -self.model_.decision(X)
