# pcsracing/planning/costs.py
#
# The seven trajectory cost terms, in COST_NAMES order:
#   mc  max |curvature|           al  arc length
#   hys distance to the previous selection, shifted by the distance since travelled
#   do  mean lateral deviation from the raceline
#   co  predicted opponent overlap, discounted by relative speed
#   v1  shortfall of mean speed below v_max
#   v2  co-occurrence of high speed and high curvature
# Environment collisions make the total cost infinite.

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from ..track import Raceline, TrackMap, is_collision_many

logger = logging.getLogger(__name__)

N_TERMS = 7


@dataclass(frozen=True)
class CandidateTrajectory:
    """One lattice candidate; path rows are (x, y, psi, kappa) at equal arc spacing."""
    path: np.ndarray
    arc_length: float
    velocity_profile: np.ndarray
    cost_terms: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS))
    total_cost: Optional[float] = None  # None until weighted
    collides: bool = False
    goal_d: float = 0.0
    velocity_factor: float = 1.0

    @property
    def xy(self) -> np.ndarray:
        return self.path[:, :2]


@dataclass
class CostContext:
    raceline: Raceline
    track: Optional[TrackMap] = None
    previous: Optional[CandidateTrajectory] = None
    ego_xy: Optional[np.ndarray] = None
    opponent: Optional[np.ndarray] = None  # (x, y, psi, v)
    footprint_radius: float = 0.3
    v_max: float = 8.0
    kappa_max: float = 1.2
    unit_cost: float = 1.0
    hysteresis_points: int = 20


# --- Helpers ---
def _arc(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _resample(points: np.ndarray, n: int, start: float, end: float) -> np.ndarray:
    arc = _arc(points)
    targets = np.linspace(start, end, n)
    return np.column_stack([np.interp(targets, arc, points[:, 0]), np.interp(targets, arc, points[:, 1])])


def arrival_times(path_xy: np.ndarray, speeds: np.ndarray) -> np.ndarray:
    """Time to reach each path point driving the given speed profile."""
    seg = np.hypot(*np.diff(path_xy, axis=0).T)
    mean_v = np.maximum(0.5 * (speeds[1:] + speeds[:-1]), 1e-6)
    return np.concatenate([[0.0], np.cumsum(seg / mean_v)])


def predict_constant_velocity(opponent: np.ndarray, times: np.ndarray) -> np.ndarray:
    x, y, psi, v = opponent
    return np.column_stack([x + v * np.cos(psi) * times, y + v * np.sin(psi) * times])


# --- Individual terms ---
def hysteresis_cost(candidate: CandidateTrajectory, previous: Optional[CandidateTrajectory],
                    ego_xy: Optional[np.ndarray], n_points: int) -> float:
    if previous is None:
        return 0.0
    prev_xy = previous.xy
    prev_arc = _arc(prev_xy)
    travelled = 0.0
    if ego_xy is not None:
        travelled = float(prev_arc[np.argmin(np.hypot(*(prev_xy - ego_xy).T))])
    span = min(float(_arc(candidate.xy)[-1]), float(prev_arc[-1]) - travelled)
    if span <= 0.0:
        return float(np.hypot(*(candidate.xy[-1] - prev_xy[-1])))
    mine = _resample(candidate.xy, n_points, 0.0, span)
    theirs = _resample(prev_xy, n_points, travelled, travelled + span)
    return float(np.mean(np.hypot(*(mine - theirs).T)))


def opponent_cost(candidate: CandidateTrajectory, opponent: Optional[np.ndarray], radius: float,
                  v_max: float, unit_cost: float) -> float:
    if opponent is None:
        return 0.0
    times = arrival_times(candidate.xy, candidate.velocity_profile)
    predicted = predict_constant_velocity(opponent, times)
    overlap = np.hypot(*(candidate.xy - predicted).T) < 2.0 * radius
    discount = np.clip((candidate.velocity_profile - opponent[3]) / v_max, 0.0, 1.0)
    return float(unit_cost * np.sum(discount[overlap]))


def evaluate_costs(candidate: CandidateTrajectory, context: CostContext) -> np.ndarray:
    """Raw (unnormalized) cost terms of one candidate."""
    kappa = np.abs(candidate.path[:, 3])
    v = candidate.velocity_profile
    _, d = context.raceline.project_many(candidate.xy)
    return np.array([
        float(np.max(kappa)),
        float(candidate.arc_length),
        hysteresis_cost(candidate, context.previous, context.ego_xy, context.hysteresis_points),
        float(np.mean(np.abs(d))),
        opponent_cost(candidate, context.opponent, context.footprint_radius, context.v_max, context.unit_cost),
        max(0.0, (context.v_max - float(np.mean(v))) / context.v_max),
        float(np.max(v / context.v_max * kappa / context.kappa_max)),
    ])


def score_candidates(candidates: Sequence[CandidateTrajectory], context: CostContext, normalize: bool = True,
                     weights: Optional[np.ndarray] = None) -> List[CandidateTrajectory]:
    """Fills cost_terms and collision flags; terms are max-normalized over the finite candidates.

    With weights, total_cost is the weighted sum of the terms. Without them it stays None,
    except for colliding candidates, whose total is always infinite.
    """
    if not candidates:
        return []
    raw = np.array([evaluate_costs(c, context) for c in candidates])
    collides = np.zeros(len(candidates), dtype=bool)
    if context.track is not None:
        pts = np.concatenate([c.xy for c in candidates])
        hit = is_collision_many(context.track, pts, context.footprint_radius)
        bounds = np.cumsum([0] + [len(c.xy) for c in candidates])
        collides = np.array([hit[a:b].any() for a, b in zip(bounds[:-1], bounds[1:])])
    if normalize and (~collides).any():
        scale = raw[~collides].max(axis=0)
        scale[scale <= 0] = 1.0
        raw = raw / scale
    totals: List[Optional[float]] = [None] * len(candidates)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        totals = [float(w @ row) if np.all(np.isfinite(row)) else np.inf for row in raw]
    return [replace(c, cost_terms=raw[i], collides=bool(collides[i]),
                    total_cost=np.inf if collides[i] else totals[i])
            for i, c in enumerate(candidates)]
