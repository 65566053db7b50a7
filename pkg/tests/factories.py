# tests/factories.py
#
# Small synthetic worlds for the test suite: analytic ring and stadium tracks built
# in memory, hand-made trajectories and policy collections, and a fake game
# simulator that moves cars along s without touching a map.

import numpy as np

from pcsracing.arena import Arena
from pcsracing.config import Settings
from pcsracing.enums import CollectionLabel
from pcsracing.errors import SimulationError
from pcsracing.game_cfr import MatchNode, StepOutcome
from pcsracing.pcs_core import PolicyCollection, normalize_pcs
from pcsracing.schemas import PARAM_LOWER, PARAM_UPPER, PolicyParams
from pcsracing.synthesis.subsets import PolicySets
from pcsracing.track import build_track_map, default_raceline
from pcsracing.vehicle_sim import ControlInput, Trajectory, VehicleState

RING_CENTER = (8.0, 8.0)
RING_RADIUS = 6.0
HALF_WIDTH = 1.5

STADIUM_CENTER = (20.0, 8.0)
STADIUM_STRAIGHT = 24.0
STADIUM_RADIUS = 5.0


def _cell_centers(width: float, height: float, resolution: float):
    xs = (np.arange(int(round(width / resolution))) + 0.5) * resolution
    ys = (np.arange(int(round(height / resolution))) + 0.5) * resolution
    return np.meshgrid(xs, ys)  # rows follow y


def ring_track(resolution: float = 0.1, n_points: int = 150):
    """Annulus of half-width 1.5 m around a radius-6 circle, driven counterclockwise."""
    X, Y = _cell_centers(16.0, 16.0, resolution)
    cx, cy = RING_CENTER
    occupancy = np.abs(np.hypot(X - cx, Y - cy) - RING_RADIUS) > HALF_WIDTH
    t = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    centerline = np.column_stack([cx + RING_RADIUS * np.cos(t), cy + RING_RADIUS * np.sin(t)])
    return build_track_map(occupancy, centerline, resolution)


def stadium_centerline(spacing: float = 0.25) -> np.ndarray:
    """Counterclockwise stadium starting at the left end of the bottom straight."""
    cx, cy = STADIUM_CENTER
    half, r = 0.5 * STADIUM_STRAIGHT, STADIUM_RADIUS
    n_straight = int(round(STADIUM_STRAIGHT / spacing))
    n_arc = int(round(np.pi * r / spacing))
    u = np.arange(n_straight) / n_straight
    a = np.arange(n_arc) / n_arc * np.pi
    bottom = np.column_stack([cx - half + u * STADIUM_STRAIGHT, np.full(n_straight, cy - r)])
    right = np.column_stack([cx + half + r * np.sin(a), cy - r * np.cos(a)])
    top = np.column_stack([cx + half - u * STADIUM_STRAIGHT, np.full(n_straight, cy + r)])
    left = np.column_stack([cx - half - r * np.sin(a), cy + r * np.cos(a)])
    return np.vstack([bottom, right, top, left])


def stadium_track(resolution: float = 0.1):
    X, Y = _cell_centers(40.0, 16.0, resolution)
    cx, cy = STADIUM_CENTER
    half = 0.5 * STADIUM_STRAIGHT
    along = np.abs(X - cx)
    dist = np.where(along <= half, np.abs(np.abs(Y - cy) - STADIUM_RADIUS),
                    np.abs(np.hypot(along - half, Y - cy) - STADIUM_RADIUS))
    return build_track_map(dist > HALF_WIDTH, stadium_centerline(), resolution)


def fast_settings(**sections) -> Settings:
    """Settings small enough for unit-test rollouts."""
    base = {
        "sim": {"lidar_beams": 9},
        "planner": {"n_long": 2, "n_lat": 3, "velocity_factors": [1.0], "clothoid_samples": 16, "lookahead": 2.0},
        "track": {"raceline_speed": 3.0},
        "es": {"rollout_duration": 0.5, "n_pairings": 1, "population": 4, "generations": 1},
        "game": {"m": 2, "step_duration": 0.3, "n_init": 1},
        "experiment": {"n_ego_variants": 2, "n_opp_variants": 1, "n_starts": 1},
        "train": {"hidden": 8, "batch": 4, "epochs": 2},
    }
    for name, values in sections.items():
        base[name] = {**base.get(name, {}), **values} if isinstance(values, dict) else values
    return Settings(**base)


def make_arena(track, settings: Settings = None) -> Arena:
    settings = settings or fast_settings()
    return Arena(track=track, raceline=default_raceline(track, settings.track.raceline_speed), settings=settings)


def random_params(rng: np.random.Generator, n: int):
    return [PolicyParams.from_vector(rng.uniform(PARAM_LOWER, PARAM_UPPER)) for _ in range(n)]


def make_collection(n: int = 12, seed: int = 0, label: CollectionLabel = CollectionLabel.ALL) -> PolicyCollection:
    rng = np.random.default_rng(seed)
    raw = np.column_stack([rng.uniform(-2.0, 2.0, n), rng.uniform(-6.0, -1.0, n)])
    return normalize_pcs(PolicyCollection(params=random_params(rng, n), points=raw, label=label))


def make_sets(collection: PolicyCollection) -> PolicySets:
    """Every set is the full collection; enough for harness tests that only draw from them."""
    n = len(collection)
    half = max(n // 2, 1)
    return PolicySets(
        all=collection,
        pareto=collection.subset(range(n), CollectionLabel.PARETO),
        near_optimal=collection.subset(range(n), CollectionLabel.NEAR_OPTIMAL),
        dpp_first=collection.subset(range(half), CollectionLabel.DPP_SUBSET),
        dpp_second=collection.subset(range(half, n), CollectionLabel.DPP_SUBSET),
    )


def make_trajectory(s_values, v: float = 2.0, scan_ranges=None, angles=None, dt: float = 0.1,
                    max_range: float = 10.0) -> Trajectory:
    """Straight-line trajectory along x with the given progress values and optional constant scans."""
    s_values = np.asarray(s_values, dtype=float)
    states = np.zeros((len(s_values), 8))
    states[:, 0] = s_values
    states[:, 3] = v
    states[:, 7] = s_values
    scans = None
    if scan_ranges is not None:
        scans = np.tile(np.asarray(scan_ranges, dtype=float), (len(s_values), 1))
        angles = np.linspace(-1.0, 1.0, scans.shape[1]) if angles is None else np.asarray(angles, dtype=float)
    return Trajectory(states=states, dt=dt, scans=scans, scan_angles=angles, scan_stride=1, max_range=max_range)


class FakeSimulator:
    """Game-step simulator moving each car along s at a speed set by its policy.

    Ego speed is 2 * gamma_v, opponent speed 2 * gamma_v of its own policy. fail_at
    raises on the given step call (1-based) and collide_on collides on it.
    """

    def __init__(self, duration: float = 1.0, fail_at: int = None, collide_on: int = None):
        self.duration = duration
        self.calls = 0
        self.fail_at = fail_at
        self.collide_on = collide_on

    def start(self) -> MatchNode:
        return MatchNode(states=(VehicleState(0.0, 0.0, 0.0), VehicleState(0.0, 1.0, 0.0)))

    def _traj(self, state: VehicleState, speed: float) -> Trajectory:
        s = state.s + speed * np.linspace(0.0, self.duration, 5)
        return make_trajectory(s, v=speed, scan_ranges=[3.0, 2.0, 3.0])

    def step(self, node: MatchNode, ego_params: PolicyParams, opp_params: PolicyParams):
        self.calls += 1
        if self.fail_at is not None and self.calls == self.fail_at:
            raise SimulationError("injected failure")
        ego = self._traj(node.states[0], 2.0 * ego_params.gamma_v)
        opp = self._traj(node.states[1], 2.0 * opp_params.gamma_v)
        child = MatchNode(states=(ego.final, opp.final))
        return child, StepOutcome(ego=ego, opp=opp, collided=self.calls == self.collide_on)


class StoppedPlanner:
    """Holds the car still."""

    def __call__(self, obs) -> ControlInput:
        return ControlInput(delta_des=0.0, v_des=0.0)

    def fork(self):
        return self

    def set_params(self, params) -> None:
        pass


class StraightPlanner:
    """Drives straight ahead at a fixed speed."""

    def __init__(self, speed: float = 3.0):
        self.speed = speed

    def __call__(self, obs) -> ControlInput:
        return ControlInput(delta_des=0.0, v_des=self.speed)

    def fork(self):
        return self

    def set_params(self, params) -> None:
        pass
