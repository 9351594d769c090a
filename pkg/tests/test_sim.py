"""Integration driver: ballistic exactness, impacts, sliding, events, recovery."""

import numpy as np
import pytest

from timefreeze import (
    IntegratorOptions,
    PiecewiseConstantControl,
    PumpParams,
    SimulationError,
    SkiParams,
    StopCondition,
    build_pump_system,
    build_ski_system,
    integrate,
    locate_event,
    recover_physical,
    simulate_pump,
    simulate_ski,
)
from timefreeze.models import landing_height, pump_energy, ski_energy, track_height
from timefreeze.models.ski import LAND
from timefreeze.sim import BracketingError

G = 9.81


# ---------------------------------------------------------------------------
# locate_event on analytic functions
# ---------------------------------------------------------------------------


class TestLocateEvent:
    def test_linear_to_machine_precision(self):
        root = locate_event(lambda t: 3.0 * (t - 0.437), 0.0, 1.0)
        assert abs(root - 0.437) <= 1e-12

    def test_ballistic_impact_time(self):
        z0, h = 5.0, 1.0
        exact = np.sqrt(2 * (z0 - h) / G)
        root = locate_event(lambda t: z0 - 0.5 * G * t * t - h, 0.0, 1.5)
        assert abs(root - exact) <= 1e-10

    def test_invalid_bracket_raises(self):
        with pytest.raises(BracketingError):
            locate_event(lambda t: 1.0 + t * t, -1.0, 1.0)

    def test_double_near_root_stays_inside_bracket(self):
        # two close roots plus a distant one; whichever root is found must be
        # a genuine root inside the bracket
        f = lambda t: (t - 0.30) * (t - 0.31) * (t - 0.90)
        root = locate_event(f, 0.0, 0.95)
        assert 0.0 < root < 0.95
        assert abs(f(root)) <= 1e-9

    def test_tolerance_violation_reported(self):
        # a function that jumps across zero without passing near it
        step = lambda t: -1.0 if t < 0.5 else 1.0
        with pytest.raises(BracketingError, match="[|]c[|]"):
            locate_event(step, 0.0, 1.0, value_tol=1e-9)


# ---------------------------------------------------------------------------
# free flight against the closed-form parabola
# ---------------------------------------------------------------------------


class TestBallistic:
    def test_ski_flight_matches_parabola(self):
        sys = build_ski_system(SkiParams())
        x0 = np.array([35.0, 30.0, 12.0, 3.0, 0.0])
        traj = integrate(sys, x0, stop=StopCondition(tau_final=2.0))
        ts = traj.tau_grid
        np.testing.assert_allclose(traj.states[:, 0], 35.0 + 12.0 * ts, atol=1e-8)
        np.testing.assert_allclose(
            traj.states[:, 1], 30.0 + 3.0 * ts - 0.5 * G * ts**2, atol=1e-8
        )
        np.testing.assert_allclose(traj.states[:, 3], 3.0 - G * ts, atol=1e-9)
        np.testing.assert_allclose(traj.states[:, 4], ts, atol=1e-12)

    def test_dense_output_between_samples(self):
        sys = build_ski_system(SkiParams())
        x0 = np.array([35.0, 30.0, 12.0, 3.0, 0.0])
        traj = integrate(sys, x0, stop=StopCondition(tau_final=2.0))
        rng = np.random.default_rng(3)
        taus = rng.uniform(0.0, 2.0, size=40)
        states = traj.sample(taus)
        np.testing.assert_allclose(states[:, 1], 30.0 + 3.0 * taus - 0.5 * G * taus**2,
                                   atol=1e-8)

    def test_energy_conserved_in_flight(self):
        p = SkiParams()
        sys = build_ski_system(p)
        x0 = np.array([35.0, 30.0, 12.0, 3.0, 0.0])
        traj = integrate(sys, x0, stop=StopCondition(tau_final=2.0))
        E = np.array([ski_energy(p, s) for s in traj.states])
        assert np.max(np.abs(E - E[0])) / E[0] <= 1e-8


# ---------------------------------------------------------------------------
# flat-surface drop against the explicit reset oracle
# ---------------------------------------------------------------------------


def flat_drop_oracle(z0, v1, t):
    """Free fall onto flat ground with an inelastic reset at t* = sqrt(2 z0/g).

    Returns (q1, q2, v1, v2) at physical times t (vectorized).
    """
    t = np.asarray(t, dtype=float)
    t_imp = np.sqrt(2 * z0 / G)
    before = t < t_imp
    q2 = np.where(before, z0 - 0.5 * G * t**2, 0.0)
    v2 = np.where(before, -G * t, 0.0)
    return v1 * t, q2, np.full_like(t, v1), v2


@pytest.fixture(scope="module")
def drop():
    p = PumpParams(amplitude=0.0)
    sys = build_pump_system(p)
    x0 = np.array([0.0, 2.0, 0.65, 1.0, 0.0, 0.0, 0.0])
    traj = integrate(sys, x0, stop=StopCondition(tau_final=2.0))
    return p, traj


class TestFlatDrop:
    def test_impact_time_located(self, drop):
        _, traj = drop
        imp = [e for e in traj.events if e.kind == "impact-entry"][0]
        assert abs(imp.t_clock - np.sqrt(2 * 2.0 / G)) <= 1e-10
        assert abs(imp.c_values[0]) <= 1e-9

    def test_physical_recovery_matches_reset_oracle(self, drop):
        _, traj = drop
        ph = recover_physical(traj)
        q1o, q2o, v1o, v2o = flat_drop_oracle(2.0, 1.0, ph.t)
        # skip the duplicated impact instant where pre/post states differ by design
        imp_t = np.sqrt(2 * 2.0 / G)
        mask = np.abs(ph.t - imp_t) > 1e-9
        assert np.max(np.abs(ph.q[mask, 1] - q2o[mask])) <= 1e-6
        assert np.max(np.abs(ph.v[mask, 1] - v2o[mask])) <= 1e-6
        assert np.max(np.abs(ph.v[mask, 0] - v1o[mask])) <= 1e-6

    def test_impact_instant_carries_both_velocities(self, drop):
        _, traj = drop
        ph = recover_physical(traj)
        imp_t = np.sqrt(2 * 2.0 / G)
        at_imp = np.flatnonzero(np.abs(ph.t - imp_t) <= 1e-9)
        assert at_imp.size == 2
        v2_pair = sorted(ph.v[at_imp, 1])
        assert v2_pair[0] == pytest.approx(-G * imp_t, abs=1e-6)
        assert abs(v2_pair[1]) <= 1e-6
        assert ph.impact_times == [pytest.approx(imp_t, abs=1e-9)]

    def test_clock_frozen_through_restoration(self, drop):
        _, traj = drop
        imp = [e for e in traj.events if e.kind == "impact-entry"][0]
        ex = [e for e in traj.events if e.kind == "aux-exit"][0]
        assert ex.tau > imp.tau
        assert abs(ex.t_clock - imp.t_clock) <= 1e-12


# ---------------------------------------------------------------------------
# the ski jump end to end
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ski45():
    return simulate_ski(SkiParams(), 45.0)


@pytest.fixture(scope="module")
def ski50():
    return simulate_ski(SkiParams(), 50.0)


class TestSkiJump:
    def test_event_sequence(self, ski45):
        kinds = ski45.trajectory.event_kinds()
        assert kinds == [
            "slide-start",
            "slide-end",
            "detach",
            "impact-entry",
            "aux-exit",
            "slide-start",
        ]

    def test_detach_happens_at_the_edge(self, ski45):
        det = [e for e in ski45.trajectory.events if e.kind == "detach"][0]
        x = ski45.trajectory.states[det.sample_index]
        assert x[0] == pytest.approx(SkiParams().edge, abs=1e-6)

    def test_lands_on_landing_surface(self, ski45):
        p = SkiParams()
        y, z = ski45.landing_point
        assert y > p.edge
        assert z == pytest.approx(landing_height(p, y)[0], abs=1e-6)
        assert ski45.jump_distance == pytest.approx(y - p.edge, rel=1e-15)

    def test_longer_from_higher_start(self, ski45, ski50):
        assert ski50.jump_distance > ski45.jump_distance
        assert ski50.landing_point[0] > ski45.landing_point[0]

    def test_energy_account(self, ski45):
        p = SkiParams()
        tr = ski45.trajectory
        imp = [e for e in tr.events if e.kind == "impact-entry"][0]
        ex = [e for e in tr.events if e.kind == "aux-exit"][0]
        E0 = ski_energy(p, tr.states[0])
        E_in = ski_energy(p, tr.states[imp.sample_index])
        E_out = ski_energy(p, tr.states[ex.sample_index])
        assert abs(E_in - E0) / E0 <= 1e-8   # slide and flight conserve
        assert E_out < E_in                  # impact strictly dissipates

    def test_takeoff_speed_from_energy(self, ski45):
        p = SkiParams()
        expected = np.sqrt(2 * G * (45.0 - p.edge_height))
        assert ski45.takeoff_speed == pytest.approx(expected, rel=1e-6)

    def test_tangential_velocity_preserved_at_landing(self, ski45):
        p = SkiParams()
        tr = ski45.trajectory
        imp = [e for e in tr.events if e.kind == "impact-entry"][0]
        ex = [e for e in tr.events if e.kind == "aux-exit"][0]
        xi, xo = tr.states[imp.sample_index], tr.states[ex.sample_index]
        dh = landing_height(p, xi[0])[1]
        assert xi[2] + dh * xi[3] == pytest.approx(xo[2] + dh * xo[3], abs=1e-9)
        assert abs(xo[3] - dh * xo[2]) <= 1e-6  # normal rate wiped out
        np.testing.assert_array_equal(xi[:2], xo[:2])  # positions frozen

    def test_start_barely_above_edge_still_jumps(self):
        # one metre of drop gives v1^2 > g at the edge, enough to detach there
        p = SkiParams()
        res = simulate_ski(p, p.edge_height + 1.0)
        assert "detach" in res.trajectory.event_kinds()
        assert res.jump_distance > 0.0
        assert res.flight_time > 0.0

    def test_start_from_rest_at_edge_rolls_onto_landing(self):
        # from rest the edge speed never reaches the detachment threshold; the
        # skier follows the rounded-over crest until it meets the landing slope
        p = SkiParams()
        res = simulate_ski(p, p.edge_height + 1e-9)
        kinds = res.trajectory.event_kinds()
        assert "detach" not in kinds
        assert "impact-entry" in kinds
        assert res.flight_time == 0.0
        assert 0.0 < res.jump_distance < 1.0

    def test_no_landing_within_horizon_raises(self):
        with pytest.raises(SimulationError, match="no landing impact"):
            simulate_ski(SkiParams(), 45.0, tau_final=1.0)


# ---------------------------------------------------------------------------
# pump track scenarios
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def pump22():
    return simulate_pump(PumpParams(), 22.0 / 3.6)


class TestPumpScenarios:
    def test_slow_start_never_reaches_goal(self):
        res = simulate_pump(PumpParams(), 10.0 / 3.6, tau_final=20.0)
        assert not res.reached_goal
        assert res.t_goal is None
        assert res.final_q1 < PumpParams().q_goal

    def test_medium_start_slides_through(self):
        res = simulate_pump(PumpParams(), 15.0 / 3.6)
        assert res.reached_goal
        assert res.trajectory.event_kinds() == ["slide-start"]
        assert abs(res.final_q1 - PumpParams().q_goal) <= 1e-9

    def test_fast_start_jumps(self, pump22):
        assert pump22.reached_goal
        kinds = pump22.trajectory.event_kinds()
        for sub in ["detach", "impact-entry", "aux-exit", "slide-start"]:
            assert sub in kinds
        i_det = kinds.index("detach")
        i_imp = kinds.index("impact-entry")
        i_exit = kinds.index("aux-exit")
        i_slide = len(kinds) - 1 - kinds[::-1].index("slide-start")
        assert i_det < i_imp < i_exit < i_slide

    def test_faster_start_arrives_sooner(self, pump22):
        t15 = simulate_pump(PumpParams(), 15.0 / 3.6).t_goal
        assert pump22.t_goal < t15

    def test_impacts_happen_midair_to_ground(self, pump22):
        tr = pump22.trajectory
        for e in tr.events:
            if e.kind == "impact-entry":
                assert abs(e.c_values[0]) <= 1e-9   # on the surface
                assert e.c_values[1] < 0.0          # moving into it

    def test_normal_rate_removed_by_each_restoration(self, pump22):
        tr = pump22.trajectory
        for e in tr.events:
            if e.kind == "aux-exit":
                x = tr.states[e.sample_index]
                assert abs(x[4]) <= 1e-6

    def test_first_steep_impact_dissipates(self, pump22):
        p = PumpParams()
        tr = pump22.trajectory
        imps = [e for e in tr.events if e.kind == "impact-entry"]
        exits = [e for e in tr.events if e.kind == "aux-exit"]
        E_in = pump_energy(p, tr.states[imps[0].sample_index])
        E_out = pump_energy(p, tr.states[exits[0].sample_index])
        assert E_out < E_in

    def test_clock_frozen_in_every_restoration(self, pump22):
        tr = pump22.trajectory
        imps = [e for e in tr.events if e.kind == "impact-entry"]
        exits = [e for e in tr.events if e.kind == "aux-exit"]
        assert len(imps) == len(exits)
        for a, b in zip(imps, exits):
            assert abs(b.t_clock - a.t_clock) <= 1e-12
        assert np.all(np.diff(tr.t_clock) >= -1e-15)

    def test_post_impact_state_insensitive_to_kn(self):
        r1 = simulate_pump(PumpParams(k_n=50.0), 22.0 / 3.6)
        r2 = simulate_pump(PumpParams(k_n=100.0), 22.0 / 3.6)
        e1 = [e for e in r1.trajectory.events if e.kind == "aux-exit"]
        e2 = [e for e in r2.trajectory.events if e.kind == "aux-exit"]
        assert len(e1) == len(e2)
        for a, b in zip(e1, e2):
            xa = r1.trajectory.states[a.sample_index]
            xb = r2.trajectory.states[b.sample_index]
            assert np.max(np.abs(xa - xb)) <= 1e-6

    def test_event_sequence_stable_under_tighter_tolerances(self, pump22):
        tight = IntegratorOptions(rel_tol=0.5e-8, abs_tol=0.5e-10)
        again = simulate_pump(PumpParams(), 22.0 / 3.6, options=tight)
        assert again.trajectory.event_kinds() == pump22.trajectory.event_kinds()

    def test_zeno_guard_trips(self):
        opts = IntegratorOptions(max_events=3)
        with pytest.raises(SimulationError, match="events"):
            simulate_pump(PumpParams(), 22.0 / 3.6, options=opts)


class TestControlledPump:
    def test_unweighting_the_first_climb_rescues_a_slow_start(self):
        # pulling the rider up (u < 0) cuts the normal force and with it the
        # slope drag; a start that stalls without control then clears the track
        p = PumpParams()
        stalled = simulate_pump(p, 10.0 / 3.6, tau_final=20.0)
        assert not stalled.reached_goal
        u = PiecewiseConstantControl(knots=[0.0, 1.2, 20.0], values=[[p.u_min], [0.0]])
        res = simulate_pump(p, 10.0 / 3.6, control=u, tau_final=20.0)
        assert res.reached_goal

    def test_link_acceleration_blends_with_sliding_weight(self):
        # on flat ground the sliding weight is constant, so the link velocity
        # grows linearly at theta1 * u (m1+m2)/(m1 m2)
        p = PumpParams(amplitude=0.0)
        u = PiecewiseConstantControl(knots=[0.0, 0.5], values=[[90.0]])
        res = simulate_pump(p, 1.0, control=u, tau_final=0.5)
        theta1 = p.k_n / (p.k_n + 90.0 / p.m1 + p.g)
        a_link = 90.0 * (p.m1 + p.m2) / (p.m1 * p.m2)
        assert res.trajectory.states[-1, 5] == pytest.approx(
            theta1 * a_link * 0.5, rel=1e-9
        )

    def test_control_lookup_semantics(self):
        u = PiecewiseConstantControl(knots=[0.0, 1.0, 2.0], values=[[5.0], [7.0]])
        assert u(0.0)[0] == 5.0
        assert u(0.999)[0] == 5.0
        assert u(1.0)[0] == 7.0
        assert u(5.0)[0] == 7.0
        assert u.next_change(0.2) == 1.0
        assert u.next_change(1.0) == 2.0
        assert u.next_change(2.5) == np.inf

    def test_control_validation(self):
        with pytest.raises(ValueError):
            PiecewiseConstantControl(knots=[0.0, 0.0, 1.0], values=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            PiecewiseConstantControl(knots=[0.0, 1.0], values=[[1.0], [2.0]])


class TestStructuralChecks:
    def test_wrong_state_shape_rejected(self):
        sys = build_pump_system(PumpParams())
        with pytest.raises(ValueError):
            integrate(sys, np.zeros(5), stop=StopCondition(tau_final=1.0))

    def test_trajectory_theta_spans_modes(self, pump22):
        th = pump22.trajectory.theta1
        assert th.min() == 0.0           # auxiliary segments present
        assert th.max() == 1.0           # flight segments present
        assert np.all((0.0 <= th) & (th <= 1.0))

    def test_sample_reproduces_grid_points(self, pump22):
        tr = pump22.trajectory
        idx = [0, len(tr.tau_grid) // 2, -1]
        for i in idx:
            np.testing.assert_allclose(tr.sample(tr.tau_grid[i]), tr.states[i],
                                       rtol=0, atol=1e-12)
