# pcsracing/track.py
#
# Track geometry: the occupancy grid the simulator drives on, the closed centerline
# that defines Frenet coordinates, and the raceline the planner samples its lattice
# around. Everything here is immutable once built and shared read-only by rollouts.

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing

from .errors import TrackError

logger = logging.getLogger(__name__)

SQRT2 = float(np.sqrt(2.0))


# --- Polyline helpers ---
def _closed_segments(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Segment vectors, lengths and cumulative arc (len N+1) of a closed polyline."""
    deltas = np.roll(points, -1, axis=0) - points
    lengths = np.hypot(deltas[:, 0], deltas[:, 1])
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    return deltas, lengths, cumulative


def _project(points: np.ndarray, deltas: np.ndarray, lengths: np.ndarray,
             cumulative: np.ndarray, x: float, y: float) -> Tuple[float, float]:
    """Exact nearest-segment projection of one point; ties go to the lower segment index."""
    rel = np.array([x, y]) - points
    t = np.clip(np.einsum("ij,ij->i", rel, deltas) / lengths ** 2, 0.0, 1.0)
    foot = points + t[:, None] * deltas
    off = np.array([x, y]) - foot
    dist = np.hypot(off[:, 0], off[:, 1])
    i = int(np.argmin(dist))
    s = cumulative[i] + t[i] * lengths[i]
    cross = deltas[i, 0] * off[i, 1] - deltas[i, 1] * off[i, 0]
    d = float(np.sign(cross) * dist[i])
    total = cumulative[-1]
    return float(s % total), d


def _interpolate(points: np.ndarray, deltas: np.ndarray, lengths: np.ndarray,
                 cumulative: np.ndarray, s: np.ndarray):
    """Position, segment index and unit tangent at arc lengths s (wrapped)."""
    s = np.mod(np.asarray(s, dtype=float), cumulative[-1])
    idx = np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, len(points) - 1)
    t = (s - cumulative[idx]) / lengths[idx]
    pos = points[idx] + t[..., None] * deltas[idx]
    tangent = deltas[idx] / lengths[idx][..., None]
    return pos, idx, tangent


def _forward_headings(points: np.ndarray) -> np.ndarray:
    deltas = np.roll(points, -1, axis=0) - points
    return np.arctan2(deltas[:, 1], deltas[:, 0])


def _resample(points: np.ndarray, spacing: float) -> np.ndarray:
    _, lengths, cumulative = _closed_segments(points)
    total = cumulative[-1]
    n = max(int(round(total / spacing)), 4)
    s = np.arange(n) * (total / n)
    deltas = np.roll(points, -1, axis=0) - points
    pos, _, _ = _interpolate(points, deltas, lengths, cumulative, s)
    return pos


# --- Domain types ---
@dataclass(frozen=True)
class FrenetPose:
    s: float
    d: float


@dataclass(frozen=True)
class TrackMap:
    """Occupancy grid plus closed centerline.

    occupancy[row, col] is True for occupied cells; row 0 is the lowest y. The
    centerline is stored without a repeated closing point.
    """
    occupancy: np.ndarray
    origin: Tuple[float, float]
    resolution: float
    centerline: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise TrackError(f"Resolution must be positive, got {self.resolution}")
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 2 or len(self.centerline) < 3:
            raise TrackError("Centerline must be an (N>=3, 2) array")
        for name in ("occupancy", "centerline"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @cached_property
    def _segments(self):
        return _closed_segments(self.centerline)

    @property
    def cumulative_s(self) -> np.ndarray:
        return self._segments[2]

    @property
    def length(self) -> float:
        return float(self._segments[2][-1])

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        rows, cols = self.occupancy.shape
        ox, oy = self.origin
        return ox, oy, ox + cols * self.resolution, oy + rows * self.resolution

    @cached_property
    def padded_occupancy(self) -> np.ndarray:
        """Occupancy with a one-cell occupied ring so the map border acts as a wall."""
        return np.pad(self.occupancy, 1, constant_values=True)

    @cached_property
    def clearance(self) -> np.ndarray:
        """Per padded cell, distance in meters from its center to the nearest occupied cell center."""
        return ndimage.distance_transform_edt(~self.padded_occupancy) * self.resolution

    def cell_of(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """Padded (row, col) indices of world points; may fall outside the padded grid."""
        ox, oy = self.origin
        col = np.floor((np.asarray(x) - ox) / self.resolution).astype(int) + 1
        row = np.floor((np.asarray(y) - oy) / self.resolution).astype(int) + 1
        return row, col

    def local_width(self, s: float) -> float:
        """Free corridor width across the centerline at arc length s."""
        pos, _, _ = _interpolate(self.centerline, *self._segments, np.array([s]))
        row, col = (int(v) for v in self.cell_of(pos[0, 0], pos[0, 1]))
        rows, cols = self.padded_occupancy.shape
        if not (0 <= row < rows and 0 <= col < cols):
            return 0.0
        return 2.0 * float(self.clearance[row, col])


@dataclass(frozen=True)
class Raceline:
    """Reference line with per-waypoint (x, y, theta, v); closes back onto its first point."""
    waypoints: np.ndarray
    cumulative_s: np.ndarray = field(init=False)

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 3:
            raise TrackError("Raceline waypoints must be an (N>=3, 4) array")
        if np.any(wp[:, 3] <= 0):
            raise TrackError("Raceline speeds must be positive")
        _, lengths, cumulative = _closed_segments(wp[:, :2])
        if np.any(lengths <= 0):
            raise TrackError("Raceline has repeated consecutive waypoints")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "cumulative_s", cumulative[:-1])

    @cached_property
    def _segments(self):
        return _closed_segments(self.waypoints[:, :2])

    @property
    def length(self) -> float:
        return float(self._segments[2][-1])

    def project(self, x: float, y: float) -> FrenetPose:
        s, d = _project(self.waypoints[:, :2], *self._segments, x, y)
        return FrenetPose(s, d)

    def project_many(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Approximate projection of many points onto the two segments around their nearest waypoint."""
        pts = self.waypoints[:, :2]
        deltas, lengths, cumulative = self._segments
        _, nearest = self._tree.query(xy)
        n = len(pts)
        best_s = np.empty(len(xy))
        best_d = np.full(len(xy), np.inf)
        for seg in ((nearest - 1) % n, nearest):
            rel = xy - pts[seg]
            t = np.clip(np.einsum("ij,ij->i", rel, deltas[seg]) / lengths[seg] ** 2, 0.0, 1.0)
            off = rel - t[:, None] * deltas[seg]
            dist = np.hypot(off[:, 0], off[:, 1])
            sign = np.sign(deltas[seg, 0] * off[:, 1] - deltas[seg, 1] * off[:, 0])
            better = dist < np.abs(best_d)
            best_d = np.where(better, sign * dist, best_d)
            best_s = np.where(better, cumulative[seg] + t * lengths[seg], best_s)
        return np.mod(best_s, self.length), best_d

    @cached_property
    def _tree(self):
        return cKDTree(self.waypoints[:, :2])

    def sample(self, s) -> np.ndarray:
        """(x, y, theta, v) at arc lengths s; heading and speed of the containing segment."""
        pos, idx, _ = _interpolate(self.waypoints[:, :2], *self._segments, s)
        return np.concatenate([pos, self.waypoints[idx, 2:4]], axis=-1)

    def offset(self, s, d) -> np.ndarray:
        """World (x, y, theta) of Frenet points relative to this raceline."""
        pos, idx, tangent = _interpolate(self.waypoints[:, :2], *self._segments, s)
        normal = np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
        xy = pos + np.asarray(d, dtype=float)[..., None] * normal
        return np.concatenate([xy, self.waypoints[idx, 2:3]], axis=-1)


# --- Construction ---
def build_track_map(occupancy: np.ndarray, centerline: np.ndarray, resolution: float = 0.05,
                    origin: Sequence[float] = (0.0, 0.0), spacing: Optional[float] = None,
                    closure_factor: float = 2.0) -> TrackMap:
    """Validates a centerline against the grid and returns the TrackMap."""
    pts = np.asarray(centerline, dtype=float)
    if len(pts) >= 2 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    if not keep.all():
        logger.debug(f"Dropping {int((~keep).sum())} repeated centerline points")
        pts = pts[keep]
    if len(pts) < 3:
        raise TrackError("Centerline needs at least 3 distinct points")

    lengths = np.hypot(*np.diff(pts, axis=0).T)
    gap = float(np.hypot(*(pts[0] - pts[-1])))
    if gap > closure_factor * lengths.mean():
        raise TrackError(f"Centerline is not closed: end gap {gap:.3f} m vs mean segment {lengths.mean():.3f} m")
    if not LinearRing(pts).is_simple:
        raise TrackError("Centerline self-intersects")
    if spacing:
        pts = _resample(pts, spacing)

    track = TrackMap(occupancy=np.asarray(occupancy, dtype=bool).copy(), origin=(float(origin[0]), float(origin[1])),
                     resolution=float(resolution), centerline=pts)
    blocked = is_collision_many(track, pts, 0.0)
    if blocked.any():
        first = int(np.argmax(blocked))
        raise TrackError(f"Centerline exits free space at point {first} ({pts[first, 0]:.3f}, {pts[first, 1]:.3f})")
    logger.info(f"Track ready: {occupancy.shape[1]}x{occupancy.shape[0]} cells, centerline {len(pts)} points, length {track.length:.2f} m")
    return track


def read_grid(path: str) -> np.ndarray:
    """Reads a PGM image or a CSV of 0/1 rows; the first row is the top of the map."""
    try:
        if path.lower().endswith(".csv"):
            raw = np.loadtxt(path, delimiter=",", ndmin=2)
            occupied = raw > 0.5
        else:
            with Image.open(path) as img:
                pixels = np.asarray(img.convert("L"), dtype=float)
            occupied = pixels <= 128.0
    except (OSError, ValueError) as e:
        raise TrackError(f"Could not parse grid file {path}: {e}") from e
    return np.flipud(occupied)


def read_xy_csv(path: str) -> np.ndarray:
    """Reads a CSV with a header row naming at least x and y columns."""
    try:
        table = np.genfromtxt(path, delimiter=",", names=True, dtype=float, encoding="utf-8")
    except (OSError, ValueError) as e:
        raise TrackError(f"Could not parse {path}: {e}") from e
    names = table.dtype.names or ()
    if "x" not in names or "y" not in names:
        raise TrackError(f"{path} must have x and y columns, found {names}")
    table = np.atleast_1d(table)
    cols = [c for c in ("x", "y", "theta", "v") if c in names]
    out = np.stack([table[c] for c in cols], axis=1)
    if not np.all(np.isfinite(out)):
        raise TrackError(f"{path} contains non-numeric values")
    return out


def load_track(grid_file: str, centerline_file: str, resolution: float = 0.05,
               origin: Sequence[float] = (0.0, 0.0), spacing: Optional[float] = 0.1,
               closure_factor: float = 2.0) -> TrackMap:
    grid = read_grid(grid_file)
    centerline = read_xy_csv(centerline_file)[:, :2]
    return build_track_map(grid, centerline, resolution, origin, spacing, closure_factor)


def load_track_from_settings(track_settings) -> TrackMap:
    return load_track(track_settings.grid_file, track_settings.centerline_file, track_settings.resolution,
                      track_settings.origin, track_settings.centerline_spacing, track_settings.closure_factor)


# --- Frenet frame ---
def to_frenet(track: TrackMap, x: float, y: float) -> FrenetPose:
    s, d = _project(track.centerline, *track._segments, x, y)
    return FrenetPose(s, d)


def frenet_to_world(track: TrackMap, s, d) -> np.ndarray:
    """World (x, y) of Frenet coordinates relative to the centerline."""
    pos, _, tangent = _interpolate(track.centerline, *track._segments, s)
    normal = np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
    return pos + np.asarray(d, dtype=float)[..., None] * normal


def unwrap_progress(track: TrackMap, previous_s: float, x: float, y: float) -> float:
    """Lap-unwrapped progress: the new projection taken closest to the previous value."""
    s = to_frenet(track, x, y).s
    length = track.length
    delta = (s - previous_s + 0.5 * length) % length - 0.5 * length
    return previous_s + delta


# --- Racelines ---
def default_raceline(track: TrackMap, v_const: float) -> Raceline:
    """Centerline fallback: forward-difference headings, constant speed."""
    if not v_const > 0:
        raise TrackError(f"Raceline speed must be positive, got {v_const}")
    pts = np.asarray(track.centerline)
    headings = _forward_headings(pts)
    return Raceline(np.column_stack([pts, headings, np.full(len(pts), float(v_const))]))


def load_raceline(path: str, default_speed: float = 5.0) -> Raceline:
    """Reads an external raceline CSV with columns x,y[,theta,v]."""
    table = read_xy_csv(path)
    pts = table[:, :2]
    if len(pts) >= 2 and np.allclose(pts[0], pts[-1]):
        table, pts = table[:-1], pts[:-1]
    headings = table[:, 2] if table.shape[1] >= 3 else _forward_headings(pts)
    speeds = table[:, 3] if table.shape[1] >= 4 else np.full(len(pts), float(default_speed))
    return Raceline(np.column_stack([pts, headings, speeds]))


def start_poses(raceline: Raceline, s0: float, lateral_offset: float) -> np.ndarray:
    """Two side-by-side start poses (x, y, theta): row 0 left of the raceline, row 1 right."""
    return raceline.offset(np.array([s0, s0]), np.array([lateral_offset, -lateral_offset]))


# --- Occupancy queries ---
def _exact_hit(track: TrackMap, x: float, y: float, radius: float) -> bool:
    occ = track.padded_occupancy
    res = track.resolution
    ox, oy = track.origin
    row, col = track.cell_of(x, y)
    reach = int(np.ceil(radius / res)) + 1
    r0, r1 = max(row - reach, 0), min(row + reach + 1, occ.shape[0])
    c0, c1 = max(col - reach, 0), min(col + reach + 1, occ.shape[1])
    rr, cc = np.nonzero(occ[r0:r1, c0:c1])
    if rr.size == 0:
        return False
    # padded index k spans [origin + (k - 1) * res, origin + k * res]
    x0 = ox + (cc + c0 - 1) * res
    y0 = oy + (rr + r0 - 1) * res
    dx = np.maximum(np.maximum(x0 - x, 0.0), x - (x0 + res))
    dy = np.maximum(np.maximum(y0 - y, 0.0), y - (y0 + res))
    dist = np.hypot(dx, dy)
    return bool(np.any((dist < radius) | (dist == 0.0)))


def is_collision_many(track: TrackMap, xy: np.ndarray, footprint_radius: float) -> np.ndarray:
    """Vectorized is_collision; the distance transform settles all but a thin band near walls."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    row, col = track.cell_of(xy[:, 0], xy[:, 1])
    rows, cols = track.padded_occupancy.shape
    inside = (row >= 1) & (row < rows - 1) & (col >= 1) & (col < cols - 1)
    hit = ~inside
    clear = np.zeros(len(xy))
    clear[inside] = track.clearance[row[inside], col[inside]]
    slack = SQRT2 * track.resolution
    certain_free = inside & (clear - slack > footprint_radius)
    certain_hit = inside & ((clear == 0.0) | (clear + 0.5 * slack < footprint_radius))
    hit |= certain_hit
    for i in np.nonzero(inside & ~certain_free & ~certain_hit)[0]:
        hit[i] = _exact_hit(track, xy[i, 0], xy[i, 1], footprint_radius)
    return hit


def is_collision(track: TrackMap, x: float, y: float, footprint_radius: float) -> bool:
    """True iff an occupied cell (or the map border) touches the footprint disc."""
    return bool(is_collision_many(track, np.array([[x, y]]), footprint_radius)[0])
