"""Region classification, mode blending and sliding weights."""

import numpy as np
import pytest

from timefreeze import (
    ExtendedState,
    FilippovSystem,
    ModeWeights,
    RegionLabel,
    SlidingModeError,
    SwitchingFunctions,
    classify_region,
    filippov_rhs,
    sliding_weights,
)
from timefreeze.core import check_vector_fields
from timefreeze.models import PumpParams, SkiParams, build_pump_system, build_ski_system


def _flat_bouncer(k_n=50.0, g=9.81):
    """Minimal 1-dof system: a point mass above flat ground, c1 = q, c2 = v."""
    return FilippovSystem(
        n_q=1,
        n_u=0,
        f_free=lambda x, u: np.array([x[1], -g, 1.0]),
        f_aux=lambda x: np.array([0.0, k_n, 0.0]),
        switching=SwitchingFunctions(
            c1=lambda x: x[0],
            c2=lambda x: x[1],
            grad_c1=lambda x: np.array([1.0, 0.0, 0.0]),
            grad_c2=lambda x: np.array([0.0, 1.0, 0.0]),
            name="ground",
        ),
        name="bouncer",
    )


class TestExtendedState:
    def test_round_trip(self):
        s = ExtendedState(q=[1.0, 2.0], v=[3.0, 4.0], t_clock=0.5)
        assert s.n_q == 2
        np.testing.assert_array_equal(s.as_vector(), [1, 2, 3, 4, 0.5])
        s2 = ExtendedState.from_vector(s.as_vector())
        np.testing.assert_array_equal(s2.q, s.q)
        assert s2.t_clock == 0.5

    def test_rejects_even_length_vector(self):
        with pytest.raises(ValueError):
            ExtendedState.from_vector(np.zeros(4))

    def test_rejects_negative_clock(self):
        with pytest.raises(ValueError):
            ExtendedState(q=[0.0], v=[0.0], t_clock=-1.0)

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ValueError):
            ExtendedState(q=[0.0, 1.0], v=[0.0], t_clock=0.0)


class TestModeWeights:
    @pytest.mark.parametrize("t1", [0.0, 0.25, 1.0])
    def test_theta2_complements(self, t1):
        w = ModeWeights(theta1=t1)
        assert w.theta1 + w.theta2 == 1.0

    @pytest.mark.parametrize("t1", [-0.1, 1.1, np.nan])
    def test_rejects_out_of_range(self, t1):
        with pytest.raises(ValueError):
            ModeWeights(theta1=t1)

    def test_clamps_roundoff(self):
        assert ModeWeights(theta1=1.0 + 5e-13).theta1 == 1.0


class TestClassifyRegion:
    sys = _flat_bouncer()

    @pytest.mark.parametrize(
        "q, v, label",
        [
            (1.0, 0.0, RegionLabel.R1),            # airborne
            (-1.0, -1.0, RegionLabel.R2),          # penetrating, still closing
            (-1.0, 1.0, RegionLabel.R1),           # penetrating but opening
            (0.0, -1.0, RegionLabel.BOUNDARY_C1),  # touching with impact speed
            (-1.0, 0.0, RegionLabel.BOUNDARY_C2),  # below, normal rate zero
            (0.0, 0.0, RegionLabel.BOUNDARY_BOTH),
        ],
    )
    def test_labels(self, q, v, label):
        assert classify_region(self.sys, np.array([q, v, 0.0])) is label

    def test_tolerance_band(self):
        x = np.array([5e-10, -1.0, 0.0])
        assert classify_region(self.sys, x) is RegionLabel.BOUNDARY_C1
        assert classify_region(self.sys, x, tol=1e-12) is RegionLabel.R1

    def test_boundary_labels_report_boundary(self):
        assert RegionLabel.BOUNDARY_BOTH.is_boundary
        assert not RegionLabel.R1.is_boundary


class TestFilippovRhs:
    sys = _flat_bouncer()

    def test_pure_modes(self):
        x = np.array([0.0, -2.0, 0.0])
        f1 = filippov_rhs(self.sys, x, np.zeros(0), ModeWeights(1.0))
        f2 = filippov_rhs(self.sys, x, np.zeros(0), ModeWeights(0.0))
        np.testing.assert_allclose(f1, [-2.0, -9.81, 1.0])
        np.testing.assert_allclose(f2, [0.0, 50.0, 0.0])

    def test_convex_combination(self):
        x = np.array([0.0, -2.0, 0.0])
        th = 0.3
        f = filippov_rhs(self.sys, x, np.zeros(0), ModeWeights(th))
        f1 = filippov_rhs(self.sys, x, np.zeros(0), ModeWeights(1.0))
        f2 = filippov_rhs(self.sys, x, np.zeros(0), ModeWeights(0.0))
        np.testing.assert_allclose(f, th * f1 + (1 - th) * f2, rtol=0, atol=1e-15)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            filippov_rhs(self.sys, np.zeros(4), np.zeros(0), ModeWeights(1.0))


class TestSlidingWeights:
    def test_flat_rest_value(self):
        # At rest on flat ground: a_free = -g, a_aux = k_n, so
        # theta1 = k_n / (k_n + g) exactly.
        sys = _flat_bouncer(k_n=50.0, g=9.81)
        w = sliding_weights(sys, np.array([0.0, 0.0, 0.0]), np.zeros(0))
        assert w.theta1 == pytest.approx(50.0 / 59.81, rel=1e-14)

    def test_drift_cancels(self):
        # The blended field must keep c2 stationary: grad_c2 . f_blend = 0.
        sys = _flat_bouncer()
        x = np.array([0.0, 0.0, 0.0])
        w = sliding_weights(sys, x, np.zeros(0))
        f = filippov_rhs(sys, x, np.zeros(0), w)
        g2 = sys.switching.grad_c2(x)
        assert abs(g2 @ f) < 1e-12

    def test_pump_trough_at_22kmh(self):
        # Sliding through the trough at 22 km/h: a_free = -v^2 h'' - g with
        # h'' = A k^2, a_aux = k_n.  Oracle evaluated from those closed forms.
        p = PumpParams()
        v0 = 22.0 / 3.6
        k = 2 * np.pi / p.wavelength
        a_free = -(v0**2) * p.amplitude * k**2 - p.g
        expected = p.k_n / (p.k_n - a_free)
        sys = build_pump_system(p)
        x = np.array([0.0, 0.0, 0.65, v0, 0.0, 0.0, 0.0])
        w = sliding_weights(sys, x, np.zeros(1))
        assert w.theta1 == pytest.approx(expected, rel=1e-12)
        assert 0.65 < w.theta1 < 0.66

    def test_crest_at_22kmh_is_not_attractive(self):
        # Fast over the crest the free field pulls away from the track, so
        # sliding weights are undefined with reason "free-mode".
        p = PumpParams()
        v_crest_sq = (22.0 / 3.6) ** 2 - 2 * p.g * 2 * p.amplitude
        x = np.array([2.5, 0.0, 0.65, np.sqrt(v_crest_sq), 0.0, 0.0, 0.0])
        with pytest.raises(SlidingModeError) as err:
            sliding_weights(build_pump_system(p), x, np.zeros(1))
        assert err.value.reason == "free-mode"
        assert err.value.a_free > 0.0

    def test_broken_auxiliary_field(self):
        sys = FilippovSystem(
            n_q=1,
            n_u=0,
            f_free=lambda x, u: np.array([x[1], -9.81, 1.0]),
            f_aux=lambda x: np.array([0.0, -1.0, 0.0]),  # pushes the wrong way
            switching=_flat_bouncer().switching,
        )
        with pytest.raises(SlidingModeError) as err:
            sliding_weights(sys, np.array([0.0, 0.0, 0.0]), np.zeros(0))
        assert err.value.reason == "auxiliary"

    def test_ski_inrun_start(self):
        # At rest on the in-run the slope satisfies h' = -h/L, so at the 45 m
        # start h' = -3 exactly and theta1 = k_n (1 + h'^2) / (k_n (1 + h'^2) + g).
        p = SkiParams()
        sys = build_ski_system(p)
        q1 = p.ramp_decay * np.log(p.ramp_height / 45.0)
        x = np.array([q1, 45.0, 0.0, 0.0, 0.0])
        w = sliding_weights(sys, x, np.zeros(0))
        a_aux = p.k_n * (1.0 + 9.0)
        assert w.theta1 == pytest.approx(a_aux / (a_aux + p.g), rel=1e-12)


class TestVectorFieldContract:
    def test_accepts_well_formed(self):
        check_vector_fields(_flat_bouncer(), np.array([1.0, 0.0, 0.0]), np.zeros(0))

    def test_rejects_wrong_clock_rate(self):
        sys = FilippovSystem(
            n_q=1,
            n_u=0,
            f_free=lambda x, u: np.array([x[1], -9.81, 0.999]),
            f_aux=lambda x: np.array([0.0, 50.0, 0.0]),
            switching=_flat_bouncer().switching,
        )
        from timefreeze import EvaluationError

        with pytest.raises(EvaluationError, match="clock rate"):
            check_vector_fields(sys, np.array([1.0, 0.0, 0.0]), np.zeros(0))
