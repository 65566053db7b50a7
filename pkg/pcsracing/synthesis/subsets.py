# pcsracing/synthesis/subsets.py
#
# Policy sets extracted from a finished archive: the Pareto front, the near-optimal
# band around it and two disjoint diverse subsets picked by greedy DPP MAP inference.

import logging
import os
from dataclasses import dataclass, replace
from typing import List

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ..enums import CollectionLabel
from ..errors import SubsetError
from ..pcs_core import PcsNormalizer, PolicyCollection, normalize_pcs, read_collection, write_collection
from .hypervolume import pareto_mask

logger = logging.getLogger(__name__)

DPP_JITTER = 1e-6


@dataclass(frozen=True)
class PolicySets:
    all: PolicyCollection
    pareto: PolicyCollection
    near_optimal: PolicyCollection
    dpp_first: PolicyCollection
    dpp_second: PolicyCollection


def rbf_kernel(points: np.ndarray, jitter: float = DPP_JITTER) -> np.ndarray:
    """L-ensemble kernel exp(-d^2 / (2 h^2)) with h the median pairwise distance."""
    dists = pdist(points)
    bandwidth = float(np.median(dists)) if dists.size and np.median(dists) > 0 else 1.0
    sq = squareform(dists) ** 2
    return np.exp(-sq / (2.0 * bandwidth ** 2)) + jitter * np.eye(len(points))


def greedy_map_dpp(kernel: np.ndarray, k: int) -> List[int]:
    """Fast greedy MAP inference with incremental Cholesky updates."""
    n = kernel.shape[0]
    k = min(k, n)
    cis = np.zeros((k, n))
    di2s = np.copy(np.diag(kernel)).astype(float)
    selected: List[int] = []
    item = int(np.argmax(di2s))
    while True:
        selected.append(item)
        if len(selected) == k:
            break
        j = len(selected) - 1
        ci = cis[:j, item]
        di = np.sqrt(di2s[item])
        eis = (kernel[item, :] - ci @ cis[:j, :]) / di
        cis[j, :] = eis
        di2s = di2s - eis ** 2
        di2s[selected] = -np.inf
        item = int(np.argmax(di2s))
    return selected


def near_optimal_mask(points: np.ndarray, pareto: np.ndarray, d_near: float) -> np.ndarray:
    """Members within d_near (inclusive) of any Pareto member."""
    front = points[pareto]
    dist = np.sqrt(((points[:, None, :] - front[None, :, :]) ** 2).sum(axis=2))
    return dist.min(axis=1) <= d_near


def extract_sets(collection: PolicyCollection, d_near: float, n_dpp: int, rng: np.random.Generator,
                 normalizer: PcsNormalizer = None) -> PolicySets:
    """Pareto front, near-optimal band (in normalized PCS) and two disjoint DPP subsets of it."""
    if len(collection) == 0:
        raise SubsetError("Archive is empty")
    everything = normalize_pcs(collection, normalizer)
    points = everything.points
    pareto = pareto_mask(everything.raw_points)
    near = near_optimal_mask(points, pareto, d_near)
    near_idx = np.nonzero(near)[0]
    if len(near_idx) < 2 * n_dpp:
        raise SubsetError(f"Near-optimal set has {len(near_idx)} members, need {2 * n_dpp} for two DPP subsets "
                          f"of {n_dpp} (archive {len(collection)}, pareto {int(pareto.sum())})")

    order = near_idx[rng.permutation(len(near_idx))]
    first_local = greedy_map_dpp(rbf_kernel(points[order]), n_dpp)
    first = order[first_local]
    remainder = np.setdiff1d(order, first, assume_unique=True)
    remainder = order[np.isin(order, remainder)]
    second = remainder[greedy_map_dpp(rbf_kernel(points[remainder]), n_dpp)]
    logger.info(f"Extracted sets: pareto={int(pareto.sum())}, near_optimal={len(near_idx)}, dpp={n_dpp}x2")
    return PolicySets(
        all=everything,
        pareto=everything.subset(np.nonzero(pareto)[0], CollectionLabel.PARETO),
        near_optimal=everything.subset(near_idx, CollectionLabel.NEAR_OPTIMAL),
        dpp_first=everything.subset(first, CollectionLabel.DPP_SUBSET),
        dpp_second=everything.subset(second, CollectionLabel.DPP_SUBSET),
    )


# --- Persistence ---
SET_FILES = {
    "all": "all.csv",
    "pareto": "pareto.csv",
    "near_optimal": "near_optimal.csv",
    "dpp_first": "dpp1.csv",
    "dpp_second": "dpp2.csv",
}


def write_sets(sets: PolicySets, out_dir: str) -> None:
    for name, filename in SET_FILES.items():
        write_collection(os.path.join(out_dir, filename), getattr(sets, name))


def load_sets(sets_dir: str) -> PolicySets:
    """Reads the set files; every member is placed in the frame fit on the full archive."""
    raw = {name: read_collection(os.path.join(sets_dir, filename), normalize=False)
           for name, filename in SET_FILES.items()}
    normalizer = PcsNormalizer.fit(raw["all"].raw_points)
    labels = {"all": CollectionLabel.ALL, "pareto": CollectionLabel.PARETO,
              "near_optimal": CollectionLabel.NEAR_OPTIMAL, "dpp_first": CollectionLabel.DPP_SUBSET,
              "dpp_second": CollectionLabel.DPP_SUBSET}
    return PolicySets(**{name: replace(normalize_pcs(coll, normalizer), label=labels[name])
                         for name, coll in raw.items()})
