"""Forward-mode derivative machinery against finite differences and closed forms."""

import numpy as np
import pytest
from scipy import sparse

from timefreeze.nlp import (
    Dual,
    Dual2,
    colored_jacobian,
    derivatives,
    greedy_column_groups,
    hessian,
    jacobian,
    seed,
    seed2,
    value_and_grad,
    where,
)

RNG = np.random.default_rng(20260817)


def central_diff(f, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = eps
        g[i] = (f(x + dx) - f(x - dx)) / (2 * eps)
    return g


def gnarly(x):
    # exercises sin, cos, exp, sqrt, power, division and comparisons
    return np.sin(x[0] * x[1]) + np.exp(-x[0]) / np.sqrt(1.0 + x[1] ** 2) + x[0] ** 3


class TestDualArithmetic:
    @pytest.mark.parametrize("trial", range(4))
    def test_gradient_matches_fd(self, trial):
        x = RNG.uniform(-1.5, 1.5, size=2)
        val, grad = value_and_grad(gnarly, x)
        assert val == pytest.approx(gnarly(x), rel=1e-14)
        np.testing.assert_allclose(grad, central_diff(gnarly, x), rtol=2e-8, atol=2e-9)

    def test_division_rule(self):
        (a, b) = seed([3.0, 2.0])
        r = a / b
        np.testing.assert_allclose(r.dot, [1 / 2.0, -3 / 4.0])

    def test_chain_through_maximum(self):
        (a,) = seed([2.0])
        out = np.maximum(a * a, 1.0)
        assert out.val == 4.0
        np.testing.assert_allclose(out.dot, [4.0])
        out_low = np.maximum((a - 2.0) ** 2, 1.0)
        np.testing.assert_allclose(out_low.dot, [0.0])  # flat branch wins

    def test_where_differentiates_active_branch(self):
        (a,) = seed([1.5])
        out = where(a.val > 1.0, a * a, -a)
        assert out.val == pytest.approx(2.25)
        np.testing.assert_allclose(out.dot, [3.0])

    def test_array_payload_broadcasting(self):
        xs = np.linspace(0.0, 2.0, 7)
        (a,) = seed([0.7])
        out = np.sin(a * xs)
        assert out.val.shape == (7,)
        np.testing.assert_allclose(out.dot[0], xs * np.cos(0.7 * xs), atol=1e-15)

    def test_clip_endpoints(self):
        (a,) = seed([2.0])
        mid = np.clip(a, 0.0, 5.0)
        np.testing.assert_allclose(mid.dot, [1.0])
        hi = np.clip(a + 10.0, 0.0, 5.0)
        np.testing.assert_allclose(hi.dot, [0.0])


class TestSecondOrder:
    def test_hessian_closed_form(self):
        # f = x0^2 x1 + sin(x0 x1):
        #   H = [[2 x1 - x1^2 sin, 2 x0 + cos - x0 x1 sin],
        #        [sym, -x0^2 sin]]
        x = np.array([0.8, -1.3])
        val, grad, hess = hessian(lambda z: z[0] ** 2 * z[1] + np.sin(z[0] * z[1]), x)
        s, c = np.sin(x[0] * x[1]), np.cos(x[0] * x[1])
        expected = np.array(
            [
                [2 * x[1] - x[1] ** 2 * s, 2 * x[0] + c - x[0] * x[1] * s],
                [2 * x[0] + c - x[0] * x[1] * s, -(x[0] ** 2) * s],
            ]
        )
        np.testing.assert_allclose(hess, expected, rtol=1e-12)
        np.testing.assert_allclose(hess, hess.T)

    def test_division_second_order(self):
        (a, b) = seed2([1.7, -0.9])
        out = a / b
        # d2/dadb (a/b) = -1/b^2, d2/db2 (a/b) = 2a/b^3
        np.testing.assert_allclose(out.hess[0, 1], -1.0 / 0.81, rtol=1e-13)
        np.testing.assert_allclose(out.hess[1, 1], 2 * 1.7 / (-0.9) ** 3, rtol=1e-13)
        np.testing.assert_allclose(out.hess, np.swapaxes(out.hess, 0, 1))

    @pytest.mark.parametrize("trial", range(3))
    def test_hessian_matches_fd_of_gradient(self, trial):
        x = RNG.uniform(0.2, 1.2, size=2)
        _, _, hess = hessian(gnarly, x)
        eps = 1e-6
        for i in range(2):
            dx = np.zeros(2)
            dx[i] = eps
            gp = value_and_grad(gnarly, x + dx)[1]
            gm = value_and_grad(gnarly, x - dx)[1]
            np.testing.assert_allclose(hess[i], (gp - gm) / (2 * eps), rtol=5e-6, atol=5e-7)


class TestJacobianHelpers:
    @staticmethod
    def vec_fn(x):
        return np.stack([x[0] * x[1], np.exp(x[2]), x[0] + np.sin(x[2])])

    def test_dense_jacobian(self):
        x = np.array([1.0, 2.0, 0.3])
        val, jac = jacobian(self.vec_fn, x)
        expected = np.array(
            [
                [2.0, 1.0, 0.0],
                [0.0, 0.0, np.exp(0.3)],
                [1.0, 0.0, np.cos(0.3)],
            ]
        )
        np.testing.assert_allclose(jac, expected, rtol=1e-14)

    def test_derivatives_dispatches_on_output_shape(self):
        x = np.array([0.4, 0.9])
        v, g = derivatives(lambda z: z[0] * z[1] ** 2, x)
        assert np.ndim(v) == 0 and g.shape == (2,)
        v2, j2 = derivatives(lambda z: np.stack([z[0], z[1] ** 2]), x)
        assert j2.shape == (2, 2)


class TestColoring:
    def test_groups_are_a_proper_coloring(self):
        rows, cols = 40, 25
        pat = sparse.random(rows, cols, density=0.15, random_state=7, dtype=bool)
        pat = sparse.csc_matrix(pat)
        groups = greedy_column_groups(pat)
        # columns sharing a row must not share a group
        dense = pat.toarray()
        for r in range(rows):
            cs = np.flatnonzero(dense[r])
            assert len(set(groups[cs].tolist())) == len(cs)

    def test_banded_jacobian_with_few_seeds(self):
        n = 30

        def f(x):
            # tridiagonal coupling through a one-slot shift
            return x * x + 0.5 * _shift(x)

        def _shift(x):
            if isinstance(x, Dual):
                return Dual(_roll(x.val), _roll_dot(x.dot))
            return _roll(x)

        def _roll(v):
            out = np.zeros_like(v)
            out[1:] = v[:-1]
            return out

        def _roll_dot(d):
            out = np.zeros_like(d)
            out[:, 1:] = d[:, :-1]
            return out

        pattern = sparse.diags([np.ones(n - 1), np.ones(n)], offsets=[-1, 0]).tocsr()
        x = RNG.uniform(0.5, 1.5, size=n)
        val, jac = colored_jacobian(f, x, pattern)
        groups = greedy_column_groups(pattern)
        assert groups.max() + 1 <= 3  # a tridiagonal band needs at most 3 colors
        dense_val, dense_jac = jacobian(f, x)
        np.testing.assert_allclose(val, dense_val, rtol=1e-14)
        np.testing.assert_allclose(jac.toarray(), dense_jac, rtol=1e-13, atol=1e-15)


class TestModelFunctionsThroughDuals:
    def test_track_height_derivative_consistency(self):
        # track_height returns analytic h' and h''; pushing a Dual through the
        # height must reproduce them, including inside the fade-out window.
        from timefreeze.models import PumpParams, track_height

        p = PumpParams()
        for q in [0.3, 2.5, 19.9, 21.7, 24.99, 26.0]:
            (d,) = seed([q])
            h, dh, ddh = track_height(p, d)
            assert float(h.dot[0]) == pytest.approx(float(dh.val), rel=1e-12, abs=1e-12)
            assert float(dh.dot[0]) == pytest.approx(float(ddh.val), rel=1e-10, abs=1e-10)
