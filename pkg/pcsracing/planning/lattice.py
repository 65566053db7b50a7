# pcsracing/planning/lattice.py
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..track import Raceline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatticeGoalSet:
    """Goal poses on an (n_long x n_lat) Frenet grid, longitudinal index major."""
    goals: np.ndarray  # (n, 3): x, y, theta
    s: np.ndarray
    d: np.ndarray
    velocity_factors: np.ndarray

    def __len__(self) -> int:
        return len(self.goals)


def sample_goals(raceline: Raceline, ego_x: float, ego_y: float, lookahead: float, lateral_span: float,
                 n_lat: int, n_long: int, velocity_factors: Sequence[float] = (1.0,),
                 min_ratio: float = 0.5) -> LatticeGoalSet:
    """Lattice goals ahead of the ego, from min_ratio * lookahead to lookahead along the raceline."""
    if lookahead <= 0:
        raise ValueError(f"Lookahead must be positive, got {lookahead}")
    if n_lat < 1 or n_long < 1:
        raise ValueError("Lattice needs at least one goal per axis")
    s_ego = raceline.project(ego_x, ego_y).s
    if n_long == 1:
        ahead = np.array([lookahead])
    else:
        ahead = lookahead * np.linspace(min_ratio, 1.0, n_long)
    lateral = np.linspace(-0.5 * lateral_span, 0.5 * lateral_span, n_lat) if n_lat > 1 else np.zeros(1)
    s_grid, d_grid = np.meshgrid(s_ego + ahead, lateral, indexing="ij")
    s_flat, d_flat = s_grid.ravel(), d_grid.ravel()
    goals = raceline.offset(s_flat, d_flat)
    return LatticeGoalSet(goals=goals, s=s_flat, d=d_flat, velocity_factors=np.asarray(velocity_factors, dtype=float))
