# pcsracing/planning/planner.py
#
# The parameterized policy: lattice goals -> clothoid candidates -> weighted-cost
# selection -> pure pursuit. One LatticePlanner instance belongs to one agent of one
# rollout; fork() gives an independent copy for branching game trees.

import copy
import logging
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from ..config import PlannerSettings, VehicleParams
from ..errors import PlannerBlocked
from ..schemas import PolicyParams
from ..track import Raceline, TrackMap, to_frenet
from ..vehicle_sim import GRAVITY, ControlInput, Observation, VehicleState
from .clothoid import sample_clothoids, solve_clothoids, to_start_frame
from .costs import CandidateTrajectory, CostContext, score_candidates
from .lattice import sample_goals
from .pure_pursuit import pure_pursuit

logger = logging.getLogger(__name__)


def select_trajectory(params: PolicyParams, candidates: Sequence[CandidateTrajectory],
                      freeze_gamma_v: bool = False) -> CandidateTrajectory:
    """Weighted-sum argmin, ties to the lowest index; the chosen profile is scaled by gamma_v."""
    if not candidates:
        raise PlannerBlocked("No candidate trajectories")
    weights = params.weights
    totals = np.array([
        np.inf if c.collides or not np.all(np.isfinite(c.cost_terms)) else float(weights @ c.cost_terms)
        for c in candidates
    ])
    if not np.isfinite(totals).any():
        raise PlannerBlocked(f"All {len(candidates)} candidates have infinite cost")
    best = int(np.argmin(totals))
    gamma = 1.0 if freeze_gamma_v else params.gamma_v
    chosen = candidates[best]
    return replace(chosen, total_cost=float(totals[best]), velocity_profile=chosen.velocity_profile * gamma)


class LatticePlanner:
    """Policy pi(theta) for one agent; callable as a rollout planner."""

    def __init__(self, track: TrackMap, raceline: Raceline, params: PolicyParams, settings: PlannerSettings,
                 vehicle: VehicleParams, footprint_radius: float = 0.3):
        self.track = track
        self.raceline = raceline
        self.params = params
        self.settings = settings
        self.vehicle = vehicle
        self.footprint_radius = footprint_radius
        self.previous: Optional[CandidateTrajectory] = None
        self.blocked_count = 0

    def set_params(self, params: PolicyParams) -> None:
        self.params = params

    def fork(self) -> "LatticePlanner":
        # candidate trajectories are immutable, a shallow copy is independent
        return copy.copy(self)

    def reset(self) -> None:
        self.previous = None
        self.blocked_count = 0

    def _lateral_span(self, state: VehicleState) -> float:
        if self.settings.lateral_span is not None:
            return self.settings.lateral_span
        width = self.track.local_width(to_frenet(self.track, state.x, state.y).s)
        return max(width - 2.0 * self.footprint_radius, 0.0)

    def _velocity_profiles(self, paths: np.ndarray) -> np.ndarray:
        """Raceline speed at each path point, capped by friction on curvature."""
        b, p, _ = paths.shape
        s, _ = self.raceline.project_many(paths[:, :, :2].reshape(-1, 2))
        v = self.raceline.sample(s)[:, 3].reshape(b, p)
        kappa = np.abs(paths[:, :, 3])
        with np.errstate(divide="ignore"):
            cap = np.sqrt(self.vehicle.mu * GRAVITY / kappa)
        return np.minimum(v, cap)

    def candidates(self, state: VehicleState, opponent: Optional[VehicleState] = None) -> List[CandidateTrajectory]:
        cfg = self.settings
        lookahead = max(cfg.lookahead, state.v * cfg.lookahead_time)
        goal_set = sample_goals(self.raceline, state.x, state.y, lookahead, self._lateral_span(state),
                                cfg.n_lat, cfg.n_long, cfg.velocity_factors, cfg.lookahead_min_ratio)
        start = np.array([state.x, state.y, state.psi])
        kappa0 = float(np.clip(np.tan(state.delta) / self.vehicle.wheelbase, -cfg.kappa_max, cfg.kappa_max))
        goals = np.column_stack([goal_set.goals, np.zeros(len(goal_set))])
        local = to_start_frame(start, goals)
        coefs, feasible = solve_clothoids(np.full(len(goals), kappa0), local, cfg.clothoid_samples,
                                          cfg.clothoid_max_iter, cfg.clothoid_tol, cfg.kappa_max)
        if not feasible.any():
            return []
        idx = np.nonzero(feasible)[0]
        paths = sample_clothoids(np.tile(start, (len(idx), 1)), np.full(len(idx), kappa0), coefs[idx],
                                 cfg.clothoid_samples)
        base_speed = self._velocity_profiles(paths)

        out = []
        for row, i in enumerate(idx):
            for factor in goal_set.velocity_factors:
                profile = np.clip(base_speed[row] * factor, cfg.v_min, cfg.v_max)
                out.append(CandidateTrajectory(path=paths[row], arc_length=float(coefs[i, 3]),
                                               velocity_profile=profile, goal_d=float(goal_set.d[i]),
                                               velocity_factor=float(factor)))
        return out

    def context(self, state: VehicleState, opponent: Optional[VehicleState]) -> CostContext:
        cfg = self.settings
        opp = None if opponent is None else np.array([opponent.x, opponent.y, opponent.psi, opponent.v])
        return CostContext(raceline=self.raceline, track=self.track, previous=self.previous,
                           ego_xy=np.array([state.x, state.y]), opponent=opp,
                           footprint_radius=self.footprint_radius, v_max=cfg.v_max, kappa_max=cfg.kappa_max,
                           unit_cost=cfg.collision_unit_cost, hysteresis_points=cfg.hysteresis_points)

    def _plan_from(self, state: VehicleState, opponent: Optional[VehicleState]) -> CandidateTrajectory:
        candidates = self.candidates(state, opponent)
        if not candidates:
            raise PlannerBlocked("No feasible clothoid to any lattice goal")
        scored = score_candidates(candidates, self.context(state, opponent), self.settings.normalize_costs,
                                  self.params.weights)
        return select_trajectory(self.params, scored, self.settings.freeze_gamma_v)

    def plan(self, state: VehicleState, opponent: Optional[VehicleState] = None) -> CandidateTrajectory:
        try:
            chosen = self._plan_from(state, opponent)
        except PlannerBlocked as e:
            if state.delta == 0.0:
                raise
            # replan from straight wheels; the steering slews back within a few steps
            logger.debug(f"Blocked from steering angle {state.delta:.3f} ({e}), replanning from zero")
            chosen = self._plan_from(replace(state, delta=0.0), opponent)
        self.previous = chosen
        return chosen

    def __call__(self, obs: Observation) -> ControlInput:
        state = obs.own
        opponent = obs.opponents[0] if obs.opponents else None
        try:
            chosen = self.plan(state, opponent)
        except PlannerBlocked as e:
            self.blocked_count += 1
            logger.debug(f"Planner blocked at t={obs.time:.2f}s, braking with straight wheels: {e}")
            return ControlInput(delta_des=0.0, v_des=0.0)
        return pure_pursuit(state, chosen.xy, chosen.velocity_profile, self.settings.pure_pursuit_lookahead,
                            self.vehicle.wheelbase)


class RacelineFollower:
    """Fixed pure-pursuit raceline tracker; stands in for an unseen competition planner."""

    def __init__(self, raceline: Raceline, lookahead: float, speed_scale: float, wheelbase: float):
        self.raceline = raceline
        self.lookahead = lookahead
        self.speed_scale = speed_scale
        self.wheelbase = wheelbase

    def fork(self) -> "RacelineFollower":
        return self

    def __call__(self, obs: Observation) -> ControlInput:
        state = obs.own
        s0 = self.raceline.project(state.x, state.y).s
        window = self.raceline.sample(s0 + np.linspace(0.0, 3.0 * self.lookahead, 31))
        return pure_pursuit(state, window[:, :2], window[:, 3] * self.speed_scale, self.lookahead, self.wheelbase)
