import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from ocpad.exceptions import ConvergenceError, DegenerateInputError, DimensionError, ValidationError
from ocpad.linalg import l2_normalize_rows
from ocpad.ocsvm import (
    OcsvmModel,
    OneClassSVM,
    RbfKernel,
    auto_gamma,
    ocsvm_score,
    train_ocsvm,
)

from oracles import brute_force_median_sq_dist, pg_ocsvm_dual


def dual_objective(model, X):
    """1/2 a^T K a over the support vectors of a trained model."""
    K = model.kernel(model.support_vectors, model.support_vectors)
    return 0.5 * model.alphas @ K @ model.alphas


class TestKernel:
    def test_self_similarity_exact(self, rng):
        X = rng.standard_normal((20, 5))
        K = RbfKernel(0.7)(X, X)
        assert np.all(np.diag(K) == 1.0)
        assert np.all((K > 0) & (K <= 1))

    @pytest.mark.parametrize("g", [0.0, -1.0, np.inf, np.nan])
    def test_bad_gamma(self, g):
        with pytest.raises(ValidationError):
            RbfKernel(g)


class TestAutoGamma:
    def test_single_pair(self):
        assert auto_gamma([[0.0, 0.0], [1.0, 1.0]]) == 0.5

    def test_matches_exhaustive_median(self, rng):
        X = l2_normalize_rows(rng.standard_normal((100, 8)))
        assert auto_gamma(X) == pytest.approx(1.0 / brute_force_median_sq_dist(X), rel=1e-12)

    def test_subsample_over_256(self, rng):
        X = rng.standard_normal((1000, 3))
        idx = (np.arange(256) * 1000) // 256
        assert auto_gamma(X) == pytest.approx(1.0 / brute_force_median_sq_dist(X[idx]), rel=1e-12)

    def test_duplicates_rejected(self):
        with pytest.raises(DegenerateInputError):
            auto_gamma([[1.0, 2.0]] * 5)


class TestTraining:
    def test_nu_one_forces_uniform(self, rng):
        X = rng.standard_normal((17, 3))
        m = train_ocsvm(X, nu=1.0)
        assert m.alphas.size == 17
        assert np.all(m.alphas == 1 / 17)

    def test_tiny_problem_matches_oracle(self, rng):
        X = rng.standard_normal((6, 2))
        kernel = RbfKernel(0.5)
        m = train_ocsvm(X, nu=0.5, kernel=kernel)
        _, obj = pg_ocsvm_dual(kernel(X, X), 0.5, tol=1e-10)
        assert abs(dual_objective(m, X) - obj) <= 1e-6

    def test_far_query_is_outlier(self, rng):
        X = 0.01 * rng.standard_normal((30, 2))
        m = train_ocsvm(X, nu=0.1)
        assert m.decision(np.array([[5.0, 5.0]]))[0] < 0

    def test_dual_invariants(self, rng):
        X = rng.standard_normal((60, 4))
        nu = 0.2
        m = train_ocsvm(X, nu=nu)
        assert abs(m.alphas.sum() - 1) <= 1e-8
        assert np.all(m.alphas > 0) and np.all(m.alphas <= 1 / (nu * 60) + 1e-12)
        assert m.kkt_gap <= 1e-6

    def test_margin_support_vectors_score_zero(self, rng):
        X = rng.standard_normal((40, 3))
        nu = 0.3
        m = train_ocsvm(X, nu=nu)
        C = 1 / (nu * 40)
        free = m.support_vectors[(m.alphas < C - 1e-12)]
        assert free.shape[0] > 0
        for x in free:
            assert abs(ocsvm_score(m, x)) <= 1e-6

    def test_degenerate_single_support_vector(self):
        sv = np.array([[0.3, 0.4]])
        m = OcsvmModel(sv, np.array([1.0]), 0.25, RbfKernel(1.0), 1.0, 1)
        assert ocsvm_score(m, sv[0]) == 0.25 - 1.0

    def test_far_score_tends_to_rho(self, rng):
        m = train_ocsvm(rng.standard_normal((20, 2)), nu=0.5)
        assert ocsvm_score(m, np.array([1e3, 1e3])) == pytest.approx(m.rho, abs=1e-12)

    def test_dimension_mismatch(self, rng):
        m = train_ocsvm(rng.standard_normal((10, 3)), nu=0.5)
        with pytest.raises(DimensionError):
            ocsvm_score(m, np.zeros(4))

    def test_iteration_cap(self, rng):
        with pytest.raises(ConvergenceError, match="KKT gap"):
            train_ocsvm(rng.standard_normal((50, 3)), nu=0.1, max_iter=1)

    def test_nu_property(self, rng):
        n, nu = 300, 0.1
        X = l2_normalize_rows(rng.standard_normal((n, 5)) + 3)
        m = train_ocsvm(X, nu=nu)
        outliers = np.mean(m.decision(X) < 0)
        assert outliers <= nu + 2 / n
        assert m.alphas.size / n >= nu - 2 / n

    def test_training_order_invariance(self, rng):
        X = rng.standard_normal((40, 3))
        Q = rng.standard_normal((10, 3))
        a = train_ocsvm(X, nu=0.2)
        b = train_ocsvm(X[rng.permutation(40)], nu=0.2)
        np.testing.assert_array_equal(a.decision(Q), b.decision(Q))

    @given(st.integers(2, 30), st.integers(1, 5), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
    def test_random_problems_match_oracle(self, n, dim, nu, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, dim))
        m = train_ocsvm(X, nu=nu)
        _, obj = pg_ocsvm_dual(m.kernel(X, X), nu, tol=1e-10)
        assert abs(dual_objective(m, X) - obj) <= 1e-6
        assert abs(m.alphas.sum() - 1) <= 1e-8


class TestEstimator:
    def test_sklearn_surface(self, rng):
        X = rng.standard_normal((50, 3))
        est = OneClassSVM(nu=0.1).fit(X)
        assert est.get_params()["nu"] == 0.1
        assert clone(est).get_params() == est.get_params()
        assert est.n_features_in_ == 3
        pred = est.predict(X)
        assert set(np.unique(pred)) <= {-1, 1}
        np.testing.assert_allclose(est.decision_function(X), -est.anomaly_score(X))

    def test_explicit_gamma(self, rng):
        est = OneClassSVM(gamma=2.0).fit(rng.standard_normal((10, 2)))
        assert est.gamma_ == 2.0

    def test_wrong_dimension(self, rng):
        est = OneClassSVM().fit(rng.standard_normal((10, 2)))
        with pytest.raises(DimensionError):
            est.anomaly_score(np.zeros((1, 3)))

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            OneClassSVM().fit(np.zeros((1, 2)))
