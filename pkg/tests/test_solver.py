"""Tests for the active-set QP solver."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnpiv.solver import Qp, QpStatus, kkt_residual, solve_qp
from oracles import lattice_qp


def random_qp(rng, k, m, singular=False):
    G = rng.standard_normal((k + 2, k))
    H = G.T @ G
    f = rng.standard_normal(k) * 3
    if singular:
        H = np.outer(G[0], G[0])
        f = H @ rng.standard_normal(k)
    A = rng.standard_normal((m, k))
    return Qp(H, f, A)


class TestHandSolved:
    def test_two_dimensional_kkt(self):
        sol = solve_qp(Qp(np.eye(2), [1.0, -1.0], np.eye(2)))
        np.testing.assert_allclose(sol.b, [0.0, 1.0], atol=1e-14)
        assert sol.active_set == (0,)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.multipliers[0] == pytest.approx(1.0)

    def test_slack_constraints_return_unconstrained_minimizer(self):
        H = np.array([[2.0, 0.5], [0.5, 1.0]])
        f = np.array([-1.0, -1.0])
        sol = solve_qp(Qp(H, f, np.eye(2)))
        np.testing.assert_allclose(sol.b, np.linalg.solve(H, -f), atol=1e-12)
        assert sol.active_set == ()

    def test_no_constraints(self):
        sol = solve_qp(Qp(np.diag([1.0, 4.0]), [2.0, -4.0], np.zeros((0, 2))))
        np.testing.assert_allclose(sol.b, [-2.0, 1.0])


class TestKktResidual:
    def test_zero_point_equals_sup_norm_of_f(self):
        qp = Qp(np.eye(3), [0.5, -2.0, 1.0], np.eye(3))
        assert kkt_residual(qp, np.zeros(3), np.zeros(3)) == 2.0

    def test_optimal_pair_is_small_and_perturbation_is_not(self, rng):
        qp = random_qp(rng, 4, 6)
        sol = solve_qp(qp)
        assert kkt_residual(qp, sol.b, sol.multipliers) <= 1e-8
        bumped = sol.b + 0.01 * np.eye(4)[0]
        assert kkt_residual(qp, bumped, sol.multipliers) > 0


class TestValidation:
    def test_rejects_asymmetric_h(self):
        with pytest.raises(ValueError):
            Qp(np.array([[1.0, 1.0], [0.0, 1.0]]), [0.0, 0.0], np.eye(2))

    def test_rejects_indefinite_h(self):
        with pytest.raises(ValueError):
            solve_qp(Qp(np.diag([1.0, -1.0]), [0.0, 0.0], np.eye(2)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Qp(np.eye(3), [0.0, 0.0], np.eye(2))

    def test_rejects_infeasible_constraints(self):
        """``x >= 1`` and ``-x >= 0`` cannot hold together."""
        with pytest.raises(ValueError, match="infeasible"):
            solve_qp(Qp(np.eye(1), [0.0], [[1.0], [-1.0]], lb=[1.0, 0.0]))

    def test_iteration_cap_reports_max_iter(self, rng):
        qp = random_qp(rng, 4, 30)
        full = solve_qp(qp)
        if full.iterations > 1:
            assert solve_qp(qp, max_iter=1).status is QpStatus.MAX_ITER


class TestAgainstLattice:
    @pytest.mark.parametrize("seed", range(12))
    def test_objective_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 7))
        qp = random_qp(rng, k, m)
        sol = solve_qp(qp)
        _, ref = lattice_qp(qp.H, qp.f, qp.A, points=41 if k <= 2 else 15)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.objective <= ref + 1e-6 * (1 + abs(ref))
        assert sol.objective >= ref - 1e-6 * (1 + abs(ref))


class TestProperties:
    @pytest.mark.parametrize("seed", range(200))
    def test_kkt_certificate_on_random_instances(self, seed):
        rng = np.random.default_rng(1000 + seed)
        k = int(rng.integers(1, 9))
        m = int(rng.integers(0, 31))
        qp = random_qp(rng, k, m, singular=seed % 10 == 0)
        sol = solve_qp(qp)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-8 * (1 + np.abs(qp.f).max())
        assert np.all(qp.A @ sol.b >= -1e-8)
        lam = sol.multipliers
        assert np.all(lam >= -1e-12)
        assert np.abs(lam * (qp.A @ sol.b)).max(initial=0) <= 1e-8

    @given(st.integers(0, 10_000))
    def test_constrained_objective_above_unconstrained(self, seed):
        rng = np.random.default_rng(seed)
        qp = random_qp(rng, 3, 5)
        con = solve_qp(qp)
        unc = solve_qp(Qp(qp.H, qp.f, np.zeros((0, 3))))
        assert con.objective >= unc.objective - 1e-10

    @given(st.integers(0, 10_000))
    def test_row_rescaling_invariance(self, seed):
        rng = np.random.default_rng(seed)
        qp = random_qp(rng, 4, 8)
        scale = rng.uniform(0.01, 100, size=8)
        a = solve_qp(qp)
        b = solve_qp(Qp(qp.H, qp.f, qp.A * scale[:, None]))
        np.testing.assert_allclose(a.b, b.b, atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_adding_rows_never_lowers_objective(self, seed):
        rng = np.random.default_rng(seed)
        qp = random_qp(rng, 4, 10)
        fewer = solve_qp(Qp(qp.H, qp.f, qp.A[:5]))
        more = solve_qp(qp)
        assert more.objective >= fewer.objective - 1e-10

    def test_duplicated_and_collinear_rows(self):
        t = np.linspace(0, 1, 200)
        A = np.column_stack([np.ones_like(t), t, t**2])
        A = np.vstack([A, A[:50]])
        qp = Qp(np.eye(3), [1.0, 2.0, -0.5], A)
        sol = solve_qp(qp)
        assert sol.status is QpStatus.OPTIMAL
        _, ref = lattice_qp(qp.H, qp.f, qp.A, points=41)
        assert sol.objective == pytest.approx(ref, abs=1e-6)

    def test_singular_hessian_gets_ridge(self):
        H = np.array([[1.0, 1.0], [1.0, 1.0]])
        sol = solve_qp(Qp(H, [-1.0, -1.0], np.eye(2)))
        assert sol.ridge > 0
        assert sol.status is QpStatus.OPTIMAL


class TestNormBound:
    @pytest.mark.parametrize("bound", [0.1, 0.5, 1.0])
    def test_ball_constraint_holds(self, bound, rng):
        qp = random_qp(rng, 3, 4)
        sol = solve_qp(Qp(qp.H, qp.f, qp.A, norm_bound=bound))
        assert np.linalg.norm(sol.b) <= bound + 1e-8

    def test_inactive_ball_changes_nothing(self, rng):
        qp = random_qp(rng, 3, 4)
        free = solve_qp(qp)
        big = solve_qp(Qp(qp.H, qp.f, qp.A, norm_bound=10 * np.linalg.norm(free.b) + 1))
        np.testing.assert_allclose(free.b, big.b)
        assert big.ball_multiplier == 0.0
