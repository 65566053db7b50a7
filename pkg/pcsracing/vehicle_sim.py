# pcsracing/vehicle_sim.py
#
# Fixed-step multi-agent simulation: the single-track vehicle model (dynamic with
# slip above v_switch, kinematic below), a distance-transform ray-marched LiDAR and
# the rollout loop that calls each agent's planner at its replan period.

import csv
import logging
import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .config import SimSettings, VehicleParams
from .errors import SimulationError
from .track import TrackMap, is_collision_many, to_frenet, unwrap_progress

logger = logging.getLogger(__name__)

GRAVITY = 9.81
STATE_FIELDS = ("x", "y", "psi", "v", "delta", "beta", "omega", "s")
# Column indices into trajectory state arrays
X, Y, PSI, V, DELTA, BETA, OMEGA, S = range(len(STATE_FIELDS))


def wrap_angle(angle):
    """Maps angles to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


# --- Domain types ---
@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float = 0.0
    delta: float = 0.0
    beta: float = 0.0
    omega: float = 0.0
    s: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v, self.delta, self.beta, self.omega, self.s])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "VehicleState":
        return cls(*(float(v) for v in values))

    @classmethod
    def on_track(cls, track: TrackMap, x: float, y: float, psi: float, v: float = 0.0) -> "VehicleState":
        """State at rest on the track with s taken from the centerline projection."""
        return cls(x=x, y=y, psi=wrap_angle(psi), v=v, s=to_frenet(track, x, y).s)


@dataclass(frozen=True)
class ControlInput:
    delta_des: float
    v_des: float


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    angles: np.ndarray
    max_range: float


@dataclass(frozen=True)
class Trajectory:
    """States sampled every dt (row i is time i*dt), with scans every scan_stride rows."""
    states: np.ndarray
    dt: float
    scans: Optional[np.ndarray] = None
    scan_angles: Optional[np.ndarray] = None
    scan_stride: int = 1
    max_range: float = 10.0

    def __post_init__(self):
        if len(self.states) == 0:
            raise SimulationError("Trajectory must contain at least one state")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def final(self) -> VehicleState:
        return VehicleState.from_array(self.states[-1])

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    @property
    def scan_speeds(self) -> np.ndarray:
        """Ego speed at each scan."""
        if self.scans is None:
            return np.zeros(0)
        return self.states[::self.scan_stride, V][:len(self.scans)]

    def state(self, i: int) -> VehicleState:
        return VehicleState.from_array(self.states[i])


@dataclass
class Observation:
    own: VehicleState
    opponents: List[VehicleState]
    scan: LidarScan
    time: float


Planner = Callable[[Observation], ControlInput]


@dataclass
class RolloutResult:
    trajectories: List[Trajectory]
    collided: List[bool]
    collision_step: Optional[int] = None
    env_collided: Optional[List[bool]] = None

    @property
    def any_collision(self) -> bool:
        return any(self.collided)


# --- Single-track model ---
def _steering_rate(delta: float, delta_des: float, dt: float, params: VehicleParams) -> float:
    rate = float(np.clip((delta_des - delta) / dt, -params.sv_max, params.sv_max))
    if (delta <= params.s_min and rate <= 0) or (delta >= params.s_max and rate >= 0):
        return 0.0
    return rate


def _acceleration(v: float, v_des: float, params: VehicleParams) -> float:
    # P-controller on speed, then the power limit above v_accel_switch
    accel = 10.0 * params.a_max / params.v_max * (v_des - v)
    pos_limit = params.a_max * params.v_accel_switch / v if v > params.v_accel_switch else params.a_max
    if (v <= 0.0 and accel <= 0) or (v >= params.v_max and accel >= 0):
        return 0.0
    return float(np.clip(accel, -params.a_max, pos_limit))


def _kinematic_rhs(z: np.ndarray, sv: float, accel: float, p: VehicleParams) -> np.ndarray:
    # z = [x, y, delta, v, psi, omega, beta]
    lwb = p.wheelbase
    x_dot = z[3] * np.cos(z[4])
    y_dot = z[3] * np.sin(z[4])
    psi_dot = z[3] / lwb * np.tan(z[2])
    omega_dot = accel / lwb * np.tan(z[2]) + z[3] / (lwb * np.cos(z[2]) ** 2) * sv
    return np.array([x_dot, y_dot, sv, accel, psi_dot, omega_dot, 0.0])


def _dynamic_rhs(z: np.ndarray, sv: float, accel: float, p: VehicleParams) -> np.ndarray:
    lf, lr, h, mu, m, inertia = p.lf, p.lr, p.h, p.mu, p.mass, p.I
    g = GRAVITY
    delta, v, psi, omega, beta = z[2], z[3], z[4], z[5], z[6]
    front = g * lr - accel * h
    rear = g * lf + accel * h
    omega_dot = (
        -mu * m / (v * inertia * (lr + lf)) * (lf ** 2 * p.C_Sf * front + lr ** 2 * p.C_Sr * rear) * omega
        + mu * m / (inertia * (lr + lf)) * (lr * p.C_Sr * rear - lf * p.C_Sf * front) * beta
        + mu * m / (inertia * (lr + lf)) * lf * p.C_Sf * front * delta
    )
    beta_dot = (
        (mu / (v ** 2 * (lr + lf)) * (p.C_Sr * rear * lr - p.C_Sf * front * lf) - 1.0) * omega
        - mu / (v * (lr + lf)) * (p.C_Sr * rear + p.C_Sf * front) * beta
        + mu / (v * (lr + lf)) * p.C_Sf * front * delta
    )
    return np.array([v * np.cos(beta + psi), v * np.sin(beta + psi), sv, accel, omega, omega_dot, beta_dot])


def _integrate(xs: np.ndarray, u: ControlInput, dt: float, params: VehicleParams) -> np.ndarray:
    """One RK4 step on an [x, y, psi, v, delta, beta, omega, s] row; s is left untouched."""
    z = np.array([xs[X], xs[Y], xs[DELTA], xs[V], xs[PSI], xs[OMEGA], xs[BETA]])
    sv = _steering_rate(z[2], u.delta_des, dt, params)
    accel = _acceleration(z[3], u.v_des, params)
    rhs = _kinematic_rhs if abs(z[3]) < params.v_switch else _dynamic_rhs

    k1 = rhs(z, sv, accel, params)
    k2 = rhs(z + 0.5 * dt * k1, sv, accel, params)
    k3 = rhs(z + 0.5 * dt * k2, sv, accel, params)
    k4 = rhs(z + dt * k3, sv, accel, params)
    z = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    out = xs.copy()
    out[X], out[Y] = z[0], z[1]
    out[DELTA] = np.clip(z[2], params.s_min, params.s_max)
    out[V] = np.clip(z[3], 0.0, params.v_max)
    out[PSI] = wrap_angle(z[4])
    out[OMEGA], out[BETA] = z[5], z[6]
    if rhs is _kinematic_rhs:
        # no slip in the kinematic regime
        out[BETA] = 0.0
        out[OMEGA] = out[V] / params.wheelbase * np.tan(out[DELTA])
    if not np.all(np.isfinite(out)):
        raise SimulationError(f"Non-finite vehicle state after step: {out.tolist()}")
    return out


def step_dynamics(state: VehicleState, u: ControlInput, dt: float, params: VehicleParams,
                  track: Optional[TrackMap] = None) -> VehicleState:
    """Advances one vehicle by dt; with a track, s is updated by lap-unwrapped projection."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not (np.isfinite(u.delta_des) and np.isfinite(u.v_des)):
        raise SimulationError(f"Non-finite control input {u}")
    row = _integrate(state.as_array(), u, dt, params)
    if track is not None:
        row[S] = unwrap_progress(track, state.s, row[X], row[Y])
    return VehicleState.from_array(row)


# --- LiDAR ---
def beam_angles(q: int, fov: float) -> np.ndarray:
    if q < 2:
        raise ValueError(f"LiDAR needs at least 2 beams, got {q}")
    return np.linspace(-0.5 * fov, 0.5 * fov, q)


def _march_walls(track: TrackMap, ox: float, oy: float, headings: np.ndarray, max_range: float) -> np.ndarray:
    res = track.resolution
    clearance = track.clearance
    rows, cols = clearance.shape
    min_step = 0.25 * res
    margin = np.sqrt(2.0) * res
    cos_h, sin_h = np.cos(headings), np.sin(headings)
    t = np.zeros(len(headings))
    ranges = np.full(len(headings), max_range)
    active = np.ones(len(headings), dtype=bool)
    while active.any():
        idx = np.nonzero(active)[0]
        row, col = track.cell_of(ox + t[idx] * cos_h[idx], oy + t[idx] * sin_h[idx])
        outside = (row < 0) | (row >= rows) | (col < 0) | (col >= cols)
        clear = np.zeros(len(idx))
        inb = ~outside
        clear[inb] = clearance[row[inb], col[inb]]
        hit = outside | (clear == 0.0)
        ranges[idx[hit]] = np.minimum(t[idx[hit]], max_range)
        active[idx[hit]] = False
        go = idx[~hit]
        t[go] += np.maximum(clear[~hit] - margin, min_step)
        done = go[t[go] >= max_range]
        active[done] = False
    return ranges


def _ray_circle(ox: float, oy: float, headings: np.ndarray, cx: float, cy: float, radius: float) -> np.ndarray:
    """Distance along each ray to a disc, inf when missed; 0 when the origin is inside."""
    ux, uy = np.cos(headings), np.sin(headings)
    rx, ry = ox - cx, oy - cy
    b = ux * rx + uy * ry
    c = rx * rx + ry * ry - radius * radius
    disc = b * b - c
    out = np.full(len(headings), np.inf)
    if c <= 0.0:
        return np.zeros(len(headings))
    ok = disc >= 0.0
    t = -b[ok] - np.sqrt(disc[ok])
    out[ok] = np.where(t > 0.0, t, np.inf)
    return out


def simulate_lidar(track: TrackMap, states: Sequence[VehicleState], ego_index: int, q: int, fov: float,
                   max_range: float, footprint_radius: float = 0.3) -> LidarScan:
    angles = beam_angles(q, fov)
    ego = states[ego_index]
    headings = ego.psi + angles
    ranges = _march_walls(track, ego.x, ego.y, headings, max_range)
    for j, other in enumerate(states):
        if j == ego_index:
            continue
        ranges = np.minimum(ranges, _ray_circle(ego.x, ego.y, headings, other.x, other.y, footprint_radius))
    ranges = np.clip(ranges, 1e-3, max_range)
    return LidarScan(ranges=ranges, angles=angles, max_range=max_range)


# --- Rollouts ---
def _steps(duration: float, dt: float) -> int:
    steps = int(round(duration / dt))
    if steps < 1 or abs(steps * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError(f"Duration {duration} is not a positive multiple of dt {dt}")
    return steps


def _collisions(track: TrackMap, rows: List[np.ndarray], radius: float):
    xy = np.array([[r[X], r[Y]] for r in rows])
    env = is_collision_many(track, xy, radius)
    pair = np.zeros(len(rows), dtype=bool)
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            if np.hypot(*(xy[i] - xy[j])) < 2.0 * radius:
                pair[i] = pair[j] = True
    return env, pair


def rollout(planners: Sequence[Planner], initial: Sequence[VehicleState], duration: float, dt: float,
            track: TrackMap, vehicle: VehicleParams, sim: SimSettings,
            footprint_radius: float = 0.3) -> RolloutResult:
    """Deterministic fixed-step loop; a collision freezes every agent for the rest of the horizon."""
    if len(planners) != len(initial):
        raise ValueError("Need exactly one planner per agent")
    steps = _steps(duration, dt)
    stride = max(int(round(sim.replan_period / dt)), 1)
    n = len(initial)
    rows = [s.as_array() for s in initial]
    history = [np.empty((steps + 1, len(STATE_FIELDS))) for _ in range(n)]
    scans: List[List[np.ndarray]] = [[] for _ in range(n)]
    angles = beam_angles(sim.lidar_beams, sim.lidar_fov)
    controls: List[ControlInput] = [ControlInput(s.delta, s.v) for s in initial]
    collided = [False] * n
    env_hit = [False] * n
    collision_step = None

    for i in range(n):
        history[i][0] = rows[i]
    env, pair = _collisions(track, rows, footprint_radius)
    if env.any() or pair.any():
        collision_step = 0

    for k in range(steps):
        if collision_step is not None:
            break
        if k % stride == 0:
            current = [VehicleState.from_array(r) for r in rows]
            for i in range(n):
                scan = simulate_lidar(track, current, i, sim.lidar_beams, sim.lidar_fov, sim.lidar_max_range,
                                      footprint_radius)
                scans[i].append(scan.ranges)
                obs = Observation(own=current[i], opponents=[c for j, c in enumerate(current) if j != i],
                                  scan=scan, time=k * dt)
                controls[i] = planners[i](obs)
        for i in range(n):
            nxt = _integrate(rows[i], controls[i], dt, vehicle)
            nxt[S] = unwrap_progress(track, rows[i][S], nxt[X], nxt[Y])
            rows[i] = nxt
            history[i][k + 1] = nxt
        env, pair = _collisions(track, rows, footprint_radius)
        if env.any() or pair.any():
            collision_step = k + 1
            logger.debug(f"Collision at step {k + 1}: env={env.tolist()} agents={pair.tolist()}")

    if collision_step is not None:
        for i in range(n):
            history[i][collision_step + 1:] = history[i][collision_step]
            collided[i] = bool(env[i] or pair[i])
            env_hit[i] = bool(env[i])

    trajectories = [
        Trajectory(states=history[i], dt=dt,
                   scans=np.array(scans[i]) if scans[i] else None, scan_angles=angles,
                   scan_stride=stride, max_range=sim.lidar_max_range)
        for i in range(n)
    ]
    return RolloutResult(trajectories=trajectories, collided=collided, collision_step=collision_step,
                         env_collided=env_hit)


def write_trajectory_csv(path: str, trajectories: Sequence[Trajectory], start_time: float = 0.0) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "agent", "x", "y", "psi", "v", "delta", "s"])
        for agent, traj in enumerate(trajectories):
            for t, row in zip(traj.times + start_time, traj.states):
                writer.writerow([f"{t:.4f}", agent] + [f"{row[c]:.6f}" for c in (X, Y, PSI, V, DELTA, S)])
    logger.info(f"Wrote {len(trajectories)} trajectories to {path}")
