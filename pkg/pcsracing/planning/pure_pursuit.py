# pcsracing/planning/pure_pursuit.py
import numpy as np

from ..vehicle_sim import ControlInput, VehicleState


def lookahead_index(xy: np.ndarray, px: float, py: float, lookahead_dist: float) -> int:
    """First point at or beyond the lookahead distance after the nearest point; else the last point."""
    dist = np.hypot(xy[:, 0] - px, xy[:, 1] - py)
    nearest = int(np.argmin(dist))
    beyond = np.nonzero(dist[nearest:] >= lookahead_dist)[0]
    return nearest + int(beyond[0]) if beyond.size else len(xy) - 1


def steering_for_point(state: VehicleState, tx: float, ty: float, wheelbase: float) -> float:
    """Pure-pursuit law: delta = atan(wheelbase * 2 * y / l^2), y lateral in the vehicle frame."""
    dx, dy = tx - state.x, ty - state.y
    local_y = -np.sin(state.psi) * dx + np.cos(state.psi) * dy
    ld_sq = dx * dx + dy * dy
    if ld_sq <= 0.0:
        return 0.0
    return float(np.arctan(wheelbase * 2.0 * local_y / ld_sq))


def pure_pursuit(state: VehicleState, path_xy: np.ndarray, speeds: np.ndarray, lookahead_dist: float,
                 wheelbase: float) -> ControlInput:
    if len(path_xy) == 0:
        raise ValueError("Cannot track an empty trajectory")
    i = lookahead_index(path_xy, state.x, state.y, lookahead_dist)
    delta = steering_for_point(state, path_xy[i, 0], path_xy[i, 1], wheelbase)
    return ControlInput(delta_des=delta, v_des=float(speeds[i]))
