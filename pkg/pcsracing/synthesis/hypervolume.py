# pcsracing/synthesis/hypervolume.py
#
# Two-objective hypervolume and dominance, both objectives maximized.

from typing import Sequence

import numpy as np


def hypervolume_2d(points: np.ndarray, reference: Sequence[float]) -> float:
    """Area of the union of rectangles [reference, p], by sort and sweep.

    Points that do not dominate the reference contribute nothing.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    pts = pts[np.all(pts > ref, axis=1)]
    if len(pts) == 0:
        return 0.0
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    area = 0.0
    y_top = ref[1]
    for x, y in pts[order]:
        if y > y_top:
            area += (x - ref[0]) * (y - y_top)
            y_top = y
    return float(area)


def hypervolume_loss(archive_points: np.ndarray, candidates: np.ndarray, reference: Sequence[float]) -> np.ndarray:
    """Negated hypervolume gain of adding each candidate alone to the archive."""
    archive = np.asarray(archive_points, dtype=float).reshape(-1, 2)
    base = hypervolume_2d(archive, reference)
    front = archive[pareto_mask(archive)] if len(archive) else archive
    return np.array([-(hypervolume_2d(np.vstack([front, c[None, :]]), reference) - base)
                     for c in np.asarray(candidates, dtype=float).reshape(-1, 2)])


def pareto_mask(points: np.ndarray) -> np.ndarray:
    """True for points no other point dominates (>= in both objectives, > in one)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    mask = np.ones(n, dtype=bool)
    if n == 0:
        return mask
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    best_y_prev = -np.inf  # max y over strictly larger x
    i = 0
    while i < n:
        x = pts[order[i], 0]
        j = i
        while j < n and pts[order[j], 0] == x:
            j += 1
        group = order[i:j]
        group_top = pts[group[0], 1]
        ys = pts[group, 1]
        mask[group] = (ys > best_y_prev) & (ys == group_top)
        best_y_prev = max(best_y_prev, group_top)
        i = j
    return mask

