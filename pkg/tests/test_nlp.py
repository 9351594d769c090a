"""Interior-point solver and problem-container tests.

Oracles: closed-form optima, a numpy KKT solve for the equality QP, and an
independent scipy SLSQP run for the classic four-variable benchmark.
"""

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import minimize

from timefreeze.nlp import IpmOptions, NlpProblem, hessian, solve_nlp


class TestProblemValidation:
    def test_collapsed_bounds_rejected(self):
        with pytest.raises(ValueError, match="equality row"):
            NlpProblem(n=2, objective=lambda x: x[0], lb=[0.0, 1.0], ub=[5.0, 1.0])

    def test_eq_count_mismatch(self):
        with pytest.raises(ValueError):
            NlpProblem(n=2, objective=lambda x: x[0], eq_con=lambda x: [x[0]], n_eq=0)

    def test_pattern_shape_mismatch(self):
        pat = sparse.csr_matrix(np.ones((2, 3), dtype=bool))
        with pytest.raises(ValueError, match="pattern"):
            NlpProblem(
                n=2, objective=lambda x: x[0],
                eq_con=lambda x: [x[0], x[1]], n_eq=2, eq_jac_pattern=pat,
            )

    def test_wrong_constraint_length_caught_at_evaluation(self):
        p = NlpProblem(
            n=2, objective=lambda x: x[0],
            eq_con=lambda x: [x[0], x[1], x[0]], n_eq=2,
        )
        with pytest.raises(ValueError, match="eq_con returned"):
            p.eq(np.zeros(2))

    def test_default_derivatives_match_fd(self):
        rng = np.random.default_rng(7)
        p = NlpProblem(
            n=3,
            objective=lambda x: x[0] * np.sin(x[1]) + x[2] ** 3,
            eq_con=lambda x: [x[0] * x[1] - x[2], np.exp(x[0]) + x[2]],
            n_eq=2,
        )
        x = rng.normal(size=3)
        f0, g = p.f_grad(x)
        c0, J = p.eq_jac(x)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            assert g[i] == pytest.approx(
                (p.f(x + e) - p.f(x - e)) / (2 * h), rel=1e-6, abs=1e-8
            )
            fd_col = (p.eq(x + e) - p.eq(x - e)) / (2 * h)
            np.testing.assert_allclose(J.toarray()[:, i], fd_col, rtol=1e-6, atol=1e-8)

    def test_colored_jacobian_agrees_with_dense(self):
        def con(x):
            return [x[0] * x[1], x[1] + x[2] ** 2, x[2] * x[3], x[0] + x[3]]

        pat = sparse.csr_matrix(
            np.array(
                [
                    [1, 1, 0, 0],
                    [0, 1, 1, 0],
                    [0, 0, 1, 1],
                    [1, 0, 0, 1],
                ],
                dtype=bool,
            )
        )
        dense = NlpProblem(n=4, objective=lambda x: x[0], eq_con=con, n_eq=4)
        colored = NlpProblem(
            n=4, objective=lambda x: x[0], eq_con=con, n_eq=4, eq_jac_pattern=pat
        )
        x = np.array([1.0, 2.0, -0.5, 3.0])
        _, J_d = dense.eq_jac(x)
        _, J_c = colored.eq_jac(x)
        np.testing.assert_allclose(J_c.toarray(), J_d.toarray(), rtol=1e-14)


class TestSolverBasics:
    def test_unconstrained_quadratic(self):
        p = NlpProblem(n=2, objective=lambda x: (x[0] - 3.0) ** 2 + 2.0 * (x[1] + 1.0) ** 2)
        r = solve_nlp(p, np.zeros(2))
        assert r.converged
        np.testing.assert_allclose(r.x, [3.0, -1.0], atol=1e-7)

    def test_equality_qp_matches_kkt_oracle(self):
        # min x'Qx/2 + c'x  s.t.  Ax = b, solved directly from the KKT system
        Q = np.array([[3.0, 0.5], [0.5, 1.0]])
        c = np.array([-1.0, 2.0])
        A = np.array([[1.0, 1.0]])
        b = np.array([2.0])
        kkt = np.block([[Q, A.T], [A, np.zeros((1, 1))]])
        sol = np.linalg.solve(kkt, np.concatenate([-c, b]))
        x_star, lam_star = sol[:2], sol[2:]

        def quad_obj(x):
            qx0 = Q[0, 0] * x[0] + Q[0, 1] * x[1]
            qx1 = Q[1, 0] * x[0] + Q[1, 1] * x[1]
            return 0.5 * (x[0] * qx0 + x[1] * qx1) + c[0] * x[0] + c[1] * x[1]

        p = NlpProblem(
            n=2,
            objective=quad_obj,
            eq_con=lambda x: [x[0] + x[1] - 2.0],
            n_eq=1,
        )
        r = solve_nlp(p, np.array([10.0, -10.0]))
        assert r.converged
        np.testing.assert_allclose(r.x, x_star, atol=1e-8)
        np.testing.assert_allclose(r.lam_eq, lam_star, atol=1e-7)

    def test_active_inequality_and_its_multiplier(self):
        p = NlpProblem(
            n=2,
            objective=lambda x: x[0] ** 2 + x[1] ** 2,
            ineq_con=lambda x: [1.0 - x[0] - x[1]],
            n_ineq=1,
        )
        r = solve_nlp(p, np.array([2.0, 2.0]))
        assert r.converged
        np.testing.assert_allclose(r.x, [0.5, 0.5], atol=1e-7)
        assert r.lam_ineq[0] == pytest.approx(1.0, abs=1e-6)

    def test_inactive_inequality_has_zero_multiplier(self):
        p = NlpProblem(
            n=2,
            objective=lambda x: (x[0] - 0.1) ** 2 + x[1] ** 2,
            ineq_con=lambda x: [x[0] + x[1] - 10.0],
            n_ineq=1,
        )
        r = solve_nlp(p, np.array([5.0, 5.0]))
        assert r.converged
        np.testing.assert_allclose(r.x, [0.1, 0.0], atol=1e-6)
        assert abs(r.lam_ineq[0]) <= 1e-7

    def test_bound_active_with_correct_multiplier(self):
        p = NlpProblem(n=1, objective=lambda x: (x[0] + 2.0) ** 2, lb=0.0, ub=10.0)
        r = solve_nlp(p, np.array([5.0]))
        assert r.converged
        assert abs(r.x[0]) <= 1e-7
        assert r.z_lower[0] == pytest.approx(4.0, abs=1e-5)
        assert np.all(r.z_lower >= 0.0) and np.all(r.z_upper >= 0.0)

    def test_barrier_parameter_is_monotone(self):
        p = NlpProblem(
            n=2,
            objective=lambda x: x[0] ** 2 + x[1] ** 2,
            ineq_con=lambda x: [1.0 - x[0] - x[1]],
            n_ineq=1,
        )
        r = solve_nlp(p, np.array([2.0, 2.0]))
        mus = [row[0] for row in r.log]
        assert all(b <= a for a, b in zip(mus, mus[1:]))


def four_var_objective(x):
    return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]


def four_var_eq(x):
    return [x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2 - 40.0]


def four_var_ineq(x):
    return [25.0 - x[0] * x[1] * x[2] * x[3]]


def four_var_lag_hess(x, sigma_f, lam, nu):
    def lagrangian(z):
        return (
            sigma_f * four_var_objective(z)
            + lam[0] * four_var_eq(z)[0]
            + nu[0] * four_var_ineq(z)[0]
        )

    return hessian(lagrangian, x)[2]


@pytest.fixture(scope="module")
def slsqp_reference():
    r = minimize(
        four_var_objective,
        np.array([1.0, 5.0, 5.0, 1.0]),
        method="SLSQP",
        bounds=[(1.0, 5.0)] * 4,
        constraints=[
            {"type": "eq", "fun": lambda x: four_var_eq(x)[0]},
            {"type": "ineq", "fun": lambda x: -four_var_ineq(x)[0]},
        ],
        options={"ftol": 1e-12, "maxiter": 200},
    )
    assert r.success
    return r


class TestFourVarBenchmark:
    def build(self, with_hessian):
        return NlpProblem(
            n=4,
            objective=four_var_objective,
            eq_con=four_var_eq,
            n_eq=1,
            ineq_con=four_var_ineq,
            n_ineq=1,
            lb=1.0,
            ub=5.0,
            lag_hess=four_var_lag_hess if with_hessian else None,
        )

    @pytest.mark.parametrize("with_hessian", [True, False], ids=["exact", "bfgs"])
    def test_matches_slsqp(self, with_hessian, slsqp_reference):
        r = solve_nlp(self.build(with_hessian), np.array([1.0, 5.0, 5.0, 1.0]))
        assert r.converged
        assert r.f == pytest.approx(slsqp_reference.fun, rel=1e-7)
        np.testing.assert_allclose(r.x, slsqp_reference.x, atol=1e-5)
        assert r.kkt_error <= 1e-8
        assert r.constraint_violation <= 1e-8

    def test_exact_hessian_converges_in_fewer_iterations(self, slsqp_reference):
        x0 = np.array([1.0, 5.0, 5.0, 1.0])
        r_exact = solve_nlp(self.build(True), x0)
        r_bfgs = solve_nlp(self.build(False), x0)
        assert r_exact.iterations < r_bfgs.iterations

    def test_warm_start_is_cheaper(self):
        x0 = np.array([1.0, 5.0, 5.0, 1.0])
        cold = solve_nlp(self.build(True), x0)
        warm = solve_nlp(
            self.build(True),
            cold.x,
            options=IpmOptions(mu0=1e-4),
            lam_eq0=cold.lam_eq,
            lam_ineq0=cold.lam_ineq,
        )
        assert warm.converged
        assert warm.iterations < cold.iterations


class TestHardCases:
    def test_nonconvex_needs_and_gets_regularization(self):
        p = NlpProblem(
            n=2,
            objective=lambda x: -(x[0] ** 2 + x[1] ** 2),
            lb=-1.0,
            ub=2.0,
            lag_hess=lambda x, sf, lam, nu: sparse.diags([-2.0 * sf, -2.0 * sf]),
        )
        r = solve_nlp(p, np.array([0.3, -0.4]))
        assert r.converged
        np.testing.assert_allclose(r.x, [2.0, -1.0], atol=1e-6)
        assert any(row[5] > 0.0 for row in r.log)  # delta_w was engaged

    def test_rank_deficient_jacobian_duplicated_rows(self):
        p = NlpProblem(
            n=2,
            objective=lambda x: (x[0] - 1.0) ** 2 + (x[1] - 2.0) ** 2,
            eq_con=lambda x: [x[0] + x[1] - 1.0, x[0] + x[1] - 1.0],
            n_eq=2,
        )
        r = solve_nlp(p, np.array([3.0, 3.0]))
        assert r.converged
        # projection of (1, 2) onto x + y = 1
        np.testing.assert_allclose(r.x, [0.0, 1.0], atol=1e-7)

    def test_inconsistent_equalities_do_not_converge(self):
        p = NlpProblem(
            n=1,
            objective=lambda x: x[0] ** 2,
            eq_con=lambda x: [x[0] - 1.0, x[0] - 2.0],
            n_eq=2,
        )
        r = solve_nlp(p, np.array([0.0]), options=IpmOptions(max_iter=50))
        assert not r.converged
        assert r.status in ("regularization-failure", "max-iter")
        assert r.constraint_violation >= 0.4

    def test_iteration_limit_reported(self):
        p = NlpProblem(
            n=4,
            objective=four_var_objective,
            eq_con=four_var_eq,
            n_eq=1,
            ineq_con=four_var_ineq,
            n_ineq=1,
            lb=1.0,
            ub=5.0,
        )
        r = solve_nlp(p, np.array([1.0, 5.0, 5.0, 1.0]), options=IpmOptions(max_iter=3))
        assert not r.converged
        assert r.status == "max-iter"
