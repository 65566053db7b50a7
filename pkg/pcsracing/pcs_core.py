# pcsracing/pcs_core.py
#
# Policy Characteristic Space: the two basis functions that place a policy in the
# plane (aggressiveness from relative progress, restraint from LiDAR time to
# collision), the policy collections living in that plane and the nearest-policy
# switch a PCS action triggers.

import csv
import logging
import os
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .enums import CollectionLabel
from .errors import PcsRacingError
from .schemas import PARAM_NAMES, PcsAction, PcsPoint, PolicyEntry, PolicyParams
from .vehicle_sim import S, Trajectory

logger = logging.getLogger(__name__)

COLLECTION_COLUMNS = PARAM_NAMES + ["agg", "res", "label"]


# --- Basis functions ---
def progress_gap(ego: Trajectory, opp: Trajectory, relative: bool = False) -> float:
    """Final lap-unwrapped progress of ego minus opponent; relative subtracts each start value."""
    gap = ego.states[-1, S] - opp.states[-1, S]
    if relative:
        gap -= ego.states[0, S] - opp.states[0, S]
    return float(gap)


def g_agg(ego_trajs: Sequence[Trajectory], opp_trajs: Sequence[Trajectory], relative: bool = False) -> float:
    """Mean progress advantage of ego over the opponent across paired rollouts."""
    if len(ego_trajs) == 0 or len(ego_trajs) != len(opp_trajs):
        raise ValueError(f"Need matching non-empty rollout sets, got {len(ego_trajs)} and {len(opp_trajs)}")
    return float(np.mean([progress_gap(e, o, relative) for e, o in zip(ego_trajs, opp_trajs)]))


def min_ittc(ranges: np.ndarray, angles: np.ndarray, speeds: np.ndarray, max_range: float,
             t_clamp: float) -> np.ndarray:
    """Per-scan minimum instantaneous time to collision, clamped to t_clamp.

    ranges: (T, q); speeds: (T,). Receding beams and beams at max range count as infinite.
    """
    approach = np.asarray(speeds, dtype=float)[:, None] * np.cos(angles)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ittc = np.where(approach > 0.0, ranges / approach, np.inf)
    ittc = np.where(ranges >= max_range, np.inf, ittc)
    return np.minimum(ittc.min(axis=1), t_clamp)


def g_res(ego_trajs: Sequence[Trajectory], t_clamp: float = 10.0) -> float:
    """Restraint: negated mean over rollouts of the per-step minimum iTTC."""
    if len(ego_trajs) == 0:
        raise ValueError("Need at least one rollout")
    per_rollout = []
    for traj in ego_trajs:
        if traj.scans is None or len(traj.scans) == 0:
            raise ValueError("Restraint needs LiDAR scans on every rollout")
        per_rollout.append(np.mean(min_ittc(traj.scans, traj.scan_angles, traj.scan_speeds, traj.max_range, t_clamp)))
    return float(-np.mean(per_rollout))


# --- Normalization ---
@dataclass(frozen=True)
class PcsNormalizer:
    """Per-axis affine map of raw PCS values onto [0, 1]; constant axes map to 0.5."""
    lower: np.ndarray
    upper: np.ndarray

    def apply(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        span = self.upper - self.lower
        degenerate = span <= 0
        out = (raw - self.lower) / np.where(degenerate, 1.0, span)
        return np.where(degenerate, 0.5, out)

    def point(self, raw: PcsPoint) -> PcsPoint:
        return PcsPoint.from_array(self.apply(raw.as_array()))

    @classmethod
    def fit(cls, raw: np.ndarray) -> "PcsNormalizer":
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        return cls(lower=raw.min(axis=0), upper=raw.max(axis=0))


# --- Collections ---
@dataclass(frozen=True)
class PolicyCollection:
    """Policies with their PCS coordinates.

    points are in the frame apply_action works in; raw_points keep the evaluated values.
    """
    params: List[PolicyParams]
    points: np.ndarray
    label: CollectionLabel = CollectionLabel.ALL
    raw_points: Optional[np.ndarray] = None
    normalizer: Optional[PcsNormalizer] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.params) == 0:
            raise PcsRacingError("Policy collection must not be empty")
        if pts.shape != (len(self.params), 2):
            raise PcsRacingError(f"Expected {len(self.params)} PCS points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise PcsRacingError("PCS points must be finite")
        object.__setattr__(self, "points", pts)
        if self.raw_points is None:
            object.__setattr__(self, "raw_points", pts.copy())

    def __len__(self) -> int:
        return len(self.params)

    @property
    def entries(self) -> List[PolicyEntry]:
        return [PolicyEntry(params=p, point=PcsPoint.from_array(c)) for p, c in zip(self.params, self.points)]

    def subset(self, indices: Sequence[int], label: CollectionLabel) -> "PolicyCollection":
        idx = list(indices)
        return PolicyCollection(params=[self.params[i] for i in idx], points=self.points[idx], label=label,
                                raw_points=self.raw_points[idx], normalizer=self.normalizer)

    def project(self, raw: PcsPoint) -> PcsPoint:
        """Maps a raw observation into this collection's frame."""
        return self.normalizer.point(raw) if self.normalizer is not None else raw


def normalize_pcs(collection: PolicyCollection, normalizer: Optional[PcsNormalizer] = None) -> PolicyCollection:
    """Min-max scales each axis to [0, 1] over the collection (or an existing map) and keeps the map."""
    raw = collection.raw_points
    norm = normalizer or PcsNormalizer.fit(raw)
    return replace(collection, points=norm.apply(raw), normalizer=norm)


def nearest_entry(points: np.ndarray, target: np.ndarray) -> int:
    """Index of the nearest point; ties go to the lowest index."""
    dist = np.sum((points - target) ** 2, axis=1)
    return int(np.argmin(dist))


def apply_action(current: PcsPoint, action: PcsAction, collection: PolicyCollection) -> Tuple[PolicyParams, PcsPoint]:
    target = current.as_array() + action.eps * action.direction()
    i = nearest_entry(collection.points, target)
    return collection.params[i], PcsPoint.from_array(collection.points[i])


def estimate_pcs(opp_traj: Trajectory, ego_traj: Trajectory, collection: PolicyCollection,
                 t_clamp: float = 10.0) -> PcsPoint:
    """Opponent PCS point from one observed game step, in the collection's frame."""
    raw = PcsPoint(agg=g_agg([opp_traj], [ego_traj], relative=True), res=g_res([opp_traj], t_clamp))
    return collection.project(raw)


# --- CSV persistence ---
def write_collection(path: str, collection: PolicyCollection) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(COLLECTION_COLUMNS)
        for params, raw in zip(collection.params, collection.raw_points):
            writer.writerow([repr(float(v)) for v in params.to_vector()] + [repr(float(raw[0])), repr(float(raw[1])),
                                                                    collection.label.value])
    logger.info(f"Wrote {len(collection)} policies ({collection.label.value}) to {path}")


def read_collection(path: str, label: Optional[CollectionLabel] = None, normalize: bool = True) -> PolicyCollection:
    """Reads a collection CSV; rows can be filtered by label. Points are normalized unless told otherwise."""
    params, raw, labels = [], [], []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(COLLECTION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise PcsRacingError(f"{path} is missing columns {sorted(missing)}")
        for row in reader:
            if label is not None and row["label"] != label.value:
                continue
            params.append(PolicyParams.from_vector([float(row[n]) for n in PARAM_NAMES]))
            raw.append([float(row["agg"]), float(row["res"])])
            labels.append(row["label"])
    if not params:
        raise PcsRacingError(f"No policies{' with label ' + label.value if label else ''} in {path}")
    coll_label = label or CollectionLabel(labels[0])
    collection = PolicyCollection(params=params, points=np.array(raw), label=coll_label)
    return normalize_pcs(collection) if normalize else collection
