import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ocpad.exceptions import DimensionError, PathBreakdownError, ValidationError
from ocpad.linalg import l2_normalize_rows
from ocpad.ocsrc import (
    Dictionary,
    HomotopyConfig,
    OneClassSRC,
    build_dictionary,
    homotopy_solve,
    ocsrc_score,
)

from oracles import cd_lasso, lasso_objective

EXACT = HomotopyConfig(lambda_stop=0.0)


def kkt_violation(D, x, code):
    """Largest violation of the lasso optimality conditions at ``code.final_lambda``."""
    A = D.atoms.T
    w = code.dense(D.n_atoms)
    corr = A.T @ (x - A @ w)
    lam = code.final_lambda
    active = np.zeros(D.n_atoms, dtype=bool)
    active[list(code.active_indices)] = True
    worst = 0.0
    if (~active).any():
        worst = max(worst, float(np.max(np.abs(corr[~active]) - lam)))
    for j in code.active_indices:
        worst = max(worst, abs(corr[j] - lam * np.sign(w[j])))
    return worst


def random_dictionary(rng, dim, m):
    return Dictionary(l2_normalize_rows(rng.standard_normal((m, dim))))


class TestDictionary:
    def test_full_fraction_keeps_atoms(self, rng):
        X = l2_normalize_rows(rng.standard_normal((5, 4)))
        np.testing.assert_allclose(build_dictionary(X, 1.0).atoms, X, rtol=0, atol=1e-15)

    def test_stride(self, rng):
        X = rng.standard_normal((100, 4))
        D = build_dictionary(X, 0.1)
        np.testing.assert_allclose(D.atoms, l2_normalize_rows(X[::10]), atol=1e-15)

    def test_unit_norm(self, rng):
        D = build_dictionary(5 * rng.standard_normal((33, 7)), 0.3)
        assert np.all(np.abs(np.linalg.norm(D.atoms, axis=1) - 1) <= 1e-12)

    def test_empty(self):
        with pytest.raises(ValidationError):
            build_dictionary(np.zeros((0, 3)))

    def test_non_unit_rejected(self):
        with pytest.raises(ValidationError):
            Dictionary(np.array([[2.0, 0.0]]))


class TestHomotopy:
    def test_single_atom_recovery(self):
        d = np.array([0.6, 0.8])
        code = homotopy_solve(Dictionary(d[None, :]), 3 * d, EXACT)
        assert code.active_indices == (0,)
        assert code.coefficients[0] == pytest.approx(3.0, abs=1e-12)
        assert code.residual <= 1e-12

    def test_first_breakpoint(self, rng):
        D = random_dictionary(rng, 6, 10)
        x = rng.standard_normal(6)
        code = homotopy_solve(D, x, HomotopyConfig(max_steps=1))
        c = D.atoms @ x
        assert code.path[0][0] == pytest.approx(np.max(np.abs(c)), rel=1e-15)
        assert int(np.argmax(np.abs(c))) in code.active_indices

    def test_planted_two_sparse(self, rng):
        D = random_dictionary(rng, 16, 8)
        w = np.zeros(8)
        w[[2, 5]] = [1.5, -0.7]
        x = D.atoms.T @ w
        code = homotopy_solve(D, x, HomotopyConfig(lambda_stop=1e-10))
        assert code.active_indices == (2, 5)
        np.testing.assert_allclose(code.coefficients, [1.5, -0.7], atol=1e-6)
        cd = cd_lasso(D.atoms.T, x, 1e-10)
        np.testing.assert_allclose(code.dense(8), cd, atol=1e-6)

    def test_atom_query_scores_zero(self, rng):
        D = random_dictionary(rng, 10, 6)
        assert ocsrc_score(D, D.atoms[3], EXACT) <= 1e-8

    def test_orthogonal_query(self):
        D = Dictionary(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        x = np.array([0.0, 0.0, 2.5])
        code = homotopy_solve(D, x, EXACT)
        assert code.active_indices == ()
        assert code.residual == pytest.approx(2.5, abs=1e-8)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            homotopy_solve(random_dictionary(rng, 4, 3), np.ones(5))

    def test_nearly_collinear_atoms_break_down(self):
        d2 = np.array([1.0, 1e-7]) / np.hypot(1.0, 1e-7)
        D = Dictionary(np.vstack([[1.0, 0.0], d2]))
        with pytest.raises(PathBreakdownError, match="lambda=") as info:
            homotopy_solve(D, np.array([1.0, 1.0]), EXACT)
        assert info.value.lam > 0

    def test_max_active_cap(self, rng):
        D = random_dictionary(rng, 20, 30)
        code = homotopy_solve(D, rng.standard_normal(20), HomotopyConfig(max_active=3))
        assert len(code.active_indices) <= 3
        assert code.stop_reason == "max_active"

    def test_attack_residual_larger(self):
        from ocpad.dataset import SynthConfig, generate_synthetic

        splits = generate_synthetic(SynthConfig(n_clients=3, dim=16, attack_shift=8.0, seed=1))
        cid = splits["test"].client_ids()[0]
        enrol = np.vstack([r.vector for r in splits["enrolment"] if r.client_id == cid])
        D = build_dictionary(l2_normalize_rows(enrol), 0.1)
        real = [r.vector for r in splits["test"] if r.client_id == cid and r.is_real][:20]
        attack = [r.vector for r in splits["test"] if r.client_id == cid and not r.is_real][:20]
        cfg = HomotopyConfig(relative_stop=0.01)

        def residuals(vs):
            out = []
            for v in l2_normalize_rows(np.array(vs)):
                code = homotopy_solve(D, v, cfg)
                w = cd_lasso(D.atoms.T, v, code.final_lambda)
                assert abs(np.linalg.norm(v - D.atoms.T @ w) - code.residual) <= 1e-5
                out.append(code.residual)
            return np.array(out)

        assert residuals(attack).mean() > residuals(real).mean()

    @given(st.integers(1, 32), st.integers(1, 64), st.floats(1e-3, 0.9), st.integers(0, 2**32 - 1))
    def test_kkt_and_residual_invariants(self, dim, m, rel, seed):
        rng = np.random.default_rng(seed)
        D = random_dictionary(rng, dim, m)
        x = rng.standard_normal(dim)
        code = homotopy_solve(D, x, HomotopyConfig(relative_stop=rel))
        assert kkt_violation(D, x, code) <= 1e-8
        assert len(code.active_indices) <= min(dim, m)
        r = np.linalg.norm(x - D.atoms.T @ code.dense(m))
        assert abs(r - code.residual) <= 1e-10
        assert 0 <= code.residual <= np.linalg.norm(x) + 1e-12
        path_res = [p[1] for p in code.path]
        assert all(b <= a + 1e-10 for a, b in zip(path_res, path_res[1:]))

    @given(st.integers(2, 16), st.integers(2, 24), st.floats(0.02, 0.5), st.integers(0, 2**32 - 1))
    def test_objective_matches_coordinate_descent(self, dim, m, rel, seed):
        rng = np.random.default_rng(seed)
        D = random_dictionary(rng, dim, m)
        x = rng.standard_normal(dim)
        code = homotopy_solve(D, x, HomotopyConfig(relative_stop=rel))
        if code.stop_reason != "lambda_stop":
            return
        lam = code.final_lambda
        w_cd = cd_lasso(D.atoms.T, x, lam)
        ours = lasso_objective(D.atoms.T, x, code.dense(m), lam)
        theirs = lasso_objective(D.atoms.T, x, w_cd, lam)
        assert abs(ours - theirs) <= 1e-6


class TestEstimator:
    def test_fit_score(self, rng):
        X = l2_normalize_rows(rng.standard_normal((50, 6)))
        est = OneClassSRC(fraction=0.2).fit(X)
        assert est.dictionary_.n_atoms == 10
        s = est.anomaly_score(X[:5])
        assert s.shape == (5,) and np.all(s >= 0)
        assert set(np.unique(est.predict(X))) <= {-1, 1}

    def test_params(self):
        est = OneClassSRC(max_active=4)
        assert est.get_params()["max_active"] == 4
