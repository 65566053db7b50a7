# pcsracing/arena.py
#
# The shared racing world: track, raceline and settings, loaded once and passed
# read-only to every rollout. It also knows how to build the planners for each kind
# of agent and how to place two cars side by side on a start line.

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import Settings
from .planning import LatticePlanner, RacelineFollower
from .schemas import PolicyParams
from .track import Raceline, TrackMap, default_raceline, load_raceline, load_track_from_settings, start_poses
from .vehicle_sim import Planner, RolloutResult, VehicleState, rollout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StartLine:
    """Arc length of the start line on the raceline and which side the ego car takes (0 left, 1 right)."""
    s0: float
    side: int = 0
    opp_lead: float = 0.0

    def swapped(self) -> "StartLine":
        return StartLine(self.s0, 1 - self.side, self.opp_lead)


@dataclass(frozen=True)
class Arena:
    track: TrackMap
    raceline: Raceline
    settings: Settings

    @property
    def footprint_radius(self) -> float:
        return self.settings.track.footprint_radius

    def lattice_planner(self, params: PolicyParams) -> LatticePlanner:
        return LatticePlanner(self.track, self.raceline, params, self.settings.planner, self.settings.vehicle,
                              self.footprint_radius)

    def external_planner(self) -> RacelineFollower:
        exp = self.settings.experiment
        return RacelineFollower(self.raceline, exp.external_lookahead, exp.external_speed_scale,
                                self.settings.vehicle.wheelbase)

    def initial_states(self, start: StartLine, lateral_offset: float) -> Tuple[VehicleState, VehicleState]:
        """(ego, opponent) at rest on the start line; the opponent may start opp_lead meters ahead."""
        poses = start_poses(self.raceline, start.s0, lateral_offset)
        ego_pose = poses[start.side]
        opp_pose = poses[1 - start.side]
        if start.opp_lead > 0:
            d = lateral_offset if start.side == 1 else -lateral_offset
            opp_pose = self.raceline.offset(np.array([start.s0 + start.opp_lead]), np.array([d]))[0]
        ego = VehicleState.on_track(self.track, float(ego_pose[0]), float(ego_pose[1]), float(ego_pose[2]))
        opp = VehicleState.on_track(self.track, float(opp_pose[0]), float(opp_pose[1]), float(opp_pose[2]))
        return ego, opp

    def run(self, planners: Sequence[Planner], states: Sequence[VehicleState], duration: float) -> RolloutResult:
        return rollout(planners, states, duration, self.settings.sim.dt, self.track, self.settings.vehicle,
                       self.settings.sim, self.footprint_radius)

    def random_start_lines(self, n: int, rng: np.random.Generator) -> List[StartLine]:
        return [StartLine(s0=float(s)) for s in rng.uniform(0.0, self.raceline.length, size=n)]


def load_arena(settings: Settings) -> Arena:
    track = load_track_from_settings(settings.track)
    raceline = _raceline_for(track, settings)
    logger.info(f"Arena ready: track length {track.length:.1f} m, raceline length {raceline.length:.1f} m")
    return Arena(track=track, raceline=raceline, settings=settings)


def _raceline_for(track: TrackMap, settings: Settings, path: Optional[str] = None) -> Raceline:
    path = path or settings.track.raceline_file
    if path:
        return load_raceline(path, settings.track.raceline_speed)
    return default_raceline(track, settings.track.raceline_speed)
