import math
from dataclasses import replace

import numpy as np
import pytest

from pcsracing.arena import StartLine
from pcsracing.errors import PlannerBlocked
from pcsracing.planning import CandidateTrajectory, pure_pursuit, sample_goals, select_trajectory, solve_clothoid
from pcsracing.planning.clothoid import sample_clothoids, solve_clothoids
from pcsracing.planning.costs import hysteresis_cost, score_candidates
from pcsracing.planning.pure_pursuit import lookahead_index
from pcsracing.schemas import PolicyParams
from pcsracing.track import default_raceline
from pcsracing.vehicle_sim import Observation, VehicleState, simulate_lidar


def _straight(n=11, length=5.0, y=0.0):
    x = np.linspace(0.0, length, n)
    return np.column_stack([x, np.full(n, y), np.zeros(n), np.zeros(n)])


def _candidate(terms, collides=False, speed=4.0):
    path = _straight()
    return CandidateTrajectory(path=path, arc_length=5.0, velocity_profile=np.full(len(path), speed),
                               cost_terms=np.asarray(terms, dtype=float), collides=collides)


# --- Clothoids ---
def test_straight_goal_gives_a_straight_clothoid():
    coefs, feasible = solve_clothoids(np.zeros(1), np.array([[5.0, 0.0, 0.0, 0.0]]))
    assert feasible[0]
    assert np.allclose(coefs[0], [0.0, 0.0, 0.0, 5.0], atol=1e-6)


def test_constant_curvature_arc_is_recovered():
    radius, phi = 5.0, 0.8
    goal = [radius * math.sin(phi), radius * (1.0 - math.cos(phi)), phi]
    path = solve_clothoid(np.array([0.0, 0.0, 0.0, 1.0 / radius]), np.array(goal), kappa_goal=1.0 / radius)
    assert path is not None
    assert path.arc_length == pytest.approx(radius * phi, abs=1e-3)
    assert np.allclose(path.kappa, 1.0 / radius, atol=1e-3)
    assert path.x[-1] == pytest.approx(goal[0], abs=1e-3)
    assert path.y[-1] == pytest.approx(goal[1], abs=1e-3)


def test_random_forward_goals_are_mostly_reached():
    rng = np.random.default_rng(5)
    n = 500
    goals = np.column_stack([rng.uniform(2.0, 5.0, n), rng.uniform(-1.0, 1.0, n), rng.uniform(-0.5, 0.5, n),
                             np.zeros(n)])
    coefs, feasible = solve_clothoids(np.zeros(n), goals)
    assert feasible.mean() > 0.7

    idx = np.nonzero(feasible)[0]
    pts = sample_clothoids(np.zeros((len(idx), 3)), np.zeros(len(idx)), coefs[idx])
    assert np.allclose(pts[:, -1, 0], goals[idx, 0], atol=2e-3)
    assert np.allclose(pts[:, -1, 1], goals[idx, 1], atol=2e-3)
    assert np.all(pts[:, 0, :2] == 0.0)


def test_goal_behind_the_start_is_infeasible():
    _, feasible = solve_clothoids(np.zeros(2), np.array([[-1.0, 0.5, 0.0, 0.0], [3.0, 0.0, 0.0, 0.0]]))
    assert feasible.tolist() == [False, True]


def test_coincident_start_and_goal_is_an_error():
    with pytest.raises(ValueError):
        solve_clothoid(np.array([1.0, 2.0, 0.0, 0.0]), np.array([1.0, 2.0, 0.5]))


def test_world_frame_solution_starts_at_the_start_pose():
    start = np.array([3.0, -2.0, math.pi / 2, 0.0])
    path = solve_clothoid(start, np.array([3.5, 2.0, math.pi / 2]))
    assert path is not None
    assert (path.x[0], path.y[0]) == pytest.approx((3.0, -2.0))
    assert path.theta[0] == pytest.approx(math.pi / 2)
    assert (path.x[-1], path.y[-1]) == pytest.approx((3.5, 2.0), abs=1e-3)


# --- Lattice ---
def test_lattice_goals_lie_ahead_of_the_ego(ring):
    raceline = default_raceline(ring, 3.0)
    x, y = raceline.waypoints[0, :2]
    goals = sample_goals(raceline, x, y, lookahead=3.0, lateral_span=2.0, n_lat=5, n_long=4)
    assert len(goals) == 20
    s0 = raceline.project(x, y).s
    assert goals.s.min() == pytest.approx(s0 + 1.5)
    assert goals.s.max() == pytest.approx(s0 + 3.0)
    assert goals.d.min() == pytest.approx(-1.0)
    assert goals.d.max() == pytest.approx(1.0)
    # longitudinal index major
    assert np.all(goals.s[:5] == goals.s[0])

    with pytest.raises(ValueError):
        sample_goals(raceline, x, y, lookahead=0.0, lateral_span=2.0, n_lat=3, n_long=2)


# --- Selection ---
def test_selection_takes_the_weighted_argmin():
    candidates = [_candidate([1, 1, 1, 1, 1, 1, 1]), _candidate([0, 0, 0, 0, 0, 0, 0.5]),
                  _candidate([0, 0, 0, 0, 0, 0, 0.2])]
    chosen = select_trajectory(PolicyParams(), candidates)
    assert chosen.total_cost == pytest.approx(0.2)

    # weighting the last term hands the choice to the candidate without it
    heavy = PolicyParams(w_v2=10.0)
    candidates[0] = _candidate([0.1, 0, 0, 0, 0, 0, 0])
    assert select_trajectory(heavy, candidates).total_cost == pytest.approx(0.1)


def test_selection_breaks_ties_by_index_and_skips_collisions():
    a = _candidate([1, 0, 0, 0, 0, 0, 0], speed=1.0)
    b = _candidate([1, 0, 0, 0, 0, 0, 0], speed=2.0)
    assert select_trajectory(PolicyParams(), [a, b]).velocity_profile[0] == 1.0
    blocked = _candidate([0, 0, 0, 0, 0, 0, 0], collides=True)
    assert select_trajectory(PolicyParams(), [blocked, b]).velocity_profile[0] == 2.0


def test_selection_raises_when_everything_collides():
    with pytest.raises(PlannerBlocked):
        select_trajectory(PolicyParams(), [_candidate([0] * 7, collides=True)])
    with pytest.raises(PlannerBlocked):
        select_trajectory(PolicyParams(), [])


def test_velocity_scale_applies_unless_frozen():
    params = PolicyParams(gamma_v=0.8)
    chosen = select_trajectory(params, [_candidate([0] * 7, speed=5.0)])
    assert np.allclose(chosen.velocity_profile, 4.0)
    frozen = select_trajectory(params, [_candidate([0] * 7, speed=5.0)], freeze_gamma_v=True)
    assert np.allclose(frozen.velocity_profile, 5.0)


def test_hysteresis_is_zero_without_a_change_of_plan():
    cand = _candidate([0] * 7)
    assert hysteresis_cost(cand, None, None, 20) == 0.0
    assert hysteresis_cost(cand, cand, np.array([0.0, 0.0]), 20) == pytest.approx(0.0, abs=1e-12)
    shifted = CandidateTrajectory(path=_straight(y=0.5), arc_length=5.0, velocity_profile=np.full(11, 4.0))
    assert hysteresis_cost(shifted, cand, np.array([0.0, 0.0]), 20) == pytest.approx(0.5)


# --- Tracking ---
def test_pure_pursuit_steers_towards_the_path():
    state = VehicleState(0.0, 0.0, 0.0)
    ahead = _straight()[:, :2]
    speeds = np.linspace(1.0, 3.0, len(ahead))
    u = pure_pursuit(state, ahead, speeds, 1.0, 0.33)
    assert u.delta_des == pytest.approx(0.0)
    assert u.v_des == pytest.approx(speeds[lookahead_index(ahead, 0.0, 0.0, 1.0)])

    left = _straight(y=1.0)[:, :2]
    assert pure_pursuit(state, left, speeds, 1.0, 0.33).delta_des > 0.0
    with pytest.raises(ValueError):
        pure_pursuit(state, np.empty((0, 2)), np.empty(0), 1.0, 0.33)


def test_lattice_planner_produces_a_finite_control(ring_arena):
    planner = ring_arena.lattice_planner(PolicyParams())
    ego, opp = ring_arena.initial_states(StartLine(1.0), 0.4)
    sim = ring_arena.settings.sim
    scan = simulate_lidar(ring_arena.track, [ego, opp], 0, sim.lidar_beams, sim.lidar_fov, sim.lidar_max_range)
    u = planner(Observation(own=ego, opponents=[opp], scan=scan, time=0.0))
    assert np.isfinite(u.delta_des)
    assert u.v_des > 0.0
    assert planner.blocked_count == 0
    assert planner.previous is not None

    forked = planner.fork()
    forked.reset()
    assert forked.previous is None
    assert planner.previous is not None


def test_scored_totals_are_the_weighted_terms(ring_arena):
    params = PolicyParams(w_mc=2.0, w_co=3.0)
    planner = ring_arena.lattice_planner(params)
    ego, _ = ring_arena.initial_states(StartLine(1.0), 0.4)
    candidates = planner.candidates(ego)
    assert candidates
    context = planner.context(ego, None)

    unweighted = score_candidates(candidates, context)
    assert all(c.total_cost is None for c in unweighted if not c.collides)

    scored = score_candidates(candidates, context, weights=params.weights)
    for c in scored:
        if c.collides:
            assert c.total_cost == math.inf
        else:
            assert c.total_cost == pytest.approx(float(params.weights @ c.cost_terms))
    chosen = select_trajectory(params, scored)
    assert chosen.total_cost == pytest.approx(min(c.total_cost for c in scored))


@pytest.mark.parametrize("delta", [0.4, -0.4])
def test_planner_keeps_driving_with_wheels_past_the_curvature_limit(ring_arena, delta):
    planner = ring_arena.lattice_planner(PolicyParams())
    ego, _ = ring_arena.initial_states(StartLine(1.0), 0.4)
    # tan(0.4) / wheelbase exceeds kappa_max
    assert abs(math.tan(delta)) / ring_arena.settings.vehicle.wheelbase > ring_arena.settings.planner.kappa_max
    ego = replace(ego, v=3.0, delta=delta)
    sim = ring_arena.settings.sim
    scan = simulate_lidar(ring_arena.track, [ego], 0, sim.lidar_beams, sim.lidar_fov, sim.lidar_max_range)
    for step in range(3):
        u = planner(Observation(own=ego, opponents=[], scan=scan, time=0.1 * step))
        assert np.isfinite(u.delta_des)
        assert u.v_des > 0.0
    assert planner.blocked_count == 0


def test_blocked_planner_brakes_with_straight_wheels(ring_arena, monkeypatch):
    planner = ring_arena.lattice_planner(PolicyParams())
    ego, _ = ring_arena.initial_states(StartLine(1.0), 0.4)
    ego = replace(ego, v=2.0, delta=0.3)

    def blocked(state, opponent=None):
        raise PlannerBlocked("No feasible clothoid to any lattice goal")

    monkeypatch.setattr(planner, "plan", blocked)
    sim = ring_arena.settings.sim
    scan = simulate_lidar(ring_arena.track, [ego], 0, sim.lidar_beams, sim.lidar_fov, sim.lidar_max_range)
    u = planner(Observation(own=ego, opponents=[], scan=scan, time=0.0))
    assert u.delta_des == 0.0
    assert u.v_des == 0.0
    assert planner.blocked_count == 1
