"""Estimator plumbing shared by the three one-class detectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionError, ValidationError


class OneClassDetector(OutlierMixin, BaseEstimator):
    """Common surface: ``fit`` on normal data only, then score queries.

    Subclasses implement :meth:`fit` and :meth:`anomaly_score` (larger means
    more anomalous) and set ``offset_``.  ``score_samples``,
    ``decision_function`` and ``predict`` follow scikit-learn's outlier
    convention: positive decision values and ``+1`` predictions are inliers.
    """

    #: smallest training set the detector accepts
    min_samples = 2

    def _validate(self, X, reset):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if reset:
            if X.shape[0] < self.min_samples:
                raise ValidationError(
                    f"{type(self).__name__} needs at least {self.min_samples} "
                    f"training vectors, got {X.shape[0]}"
                )
            self.n_features_in_ = X.shape[1]
        else:
            check_is_fitted(self)
            if X.shape[1] != self.n_features_in_:
                raise DimensionError(
                    f"expected {self.n_features_in_} features, got {X.shape[1]}"
                )
        return X

    def anomaly_score(self, X) -> np.ndarray:
        raise NotImplementedError

    def score_samples(self, X):
        return -self.anomaly_score(X)

    def decision_function(self, X):
        return self.score_samples(X) - self.offset_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


def training_offset(train_scores, contamination):
    """Offset placing the ``1 - contamination`` quantile of training anomaly scores on the boundary."""
    if not 0.0 <= contamination < 1.0:
        raise ValidationError(f"contamination must lie in [0, 1), got {contamination}")
    return -float(np.quantile(train_scores, 1.0 - contamination))
