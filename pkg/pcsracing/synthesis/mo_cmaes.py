# pcsracing/synthesis/mo_cmaes.py
#
# Multi-objective CMA-ES over the policy parameter box. The search runs in the unit
# cube; samples are clipped to it and mapped affinely onto the parameter ranges. Each
# generation the samples that add the most hypervolume to the archive become the
# elites that drive the standard CMA-ES mean, path, covariance and step-size updates.

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ModelFormatError
from ..schemas import PARAM_LOWER, PARAM_UPPER, PolicyParams
from .hypervolume import hypervolume_2d, hypervolume_loss, pareto_mask

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PCSE"
CHECKPOINT_VERSION = 1


# --- Strategy state ---
@dataclass(frozen=True)
class CmaParameters:
    """Default learning rates for dimension dim and mu parents."""
    dim: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chi_n: float

    @classmethod
    def default(cls, dim: int, mu: int) -> "CmaParameters":
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mueff = 1.0 / np.sum(weights ** 2)
        cc = (4 + mueff / dim) / (dim + 4 + 2 * mueff / dim)
        cs = (mueff + 2) / (dim + mueff + 5)
        c1 = 2 / ((dim + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((dim + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (dim + 1)) - 1) + cs
        chi_n = math.sqrt(dim) * (1 - 1 / (4 * dim) + 1 / (21 * dim ** 2))
        return cls(dim, mu, weights, float(mueff), cc, cs, c1, cmu, damps, chi_n)


@dataclass(frozen=True)
class EsState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    seed: int = 0
    reference: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return len(self.mean)

    def rng(self) -> np.random.Generator:
        """Generator for the current generation; resuming from a checkpoint reproduces it."""
        return np.random.default_rng([self.seed, self.generation])


def init_state(dim: int, sigma0: float, seed: int = 0, mean: Optional[np.ndarray] = None) -> EsState:
    return EsState(mean=np.full(dim, 0.5) if mean is None else np.asarray(mean, dtype=float).copy(),
                   sigma=float(sigma0), C=np.eye(dim), p_sigma=np.zeros(dim), p_c=np.zeros(dim), seed=seed)


def _eigen(C: np.ndarray, floor: float) -> Tuple[np.ndarray, np.ndarray, bool]:
    vals, vecs = np.linalg.eigh(C)
    repaired = bool(np.any(vals < floor))
    return np.maximum(vals, floor), vecs, repaired


def sample_unit(es: EsState, n: int, clip: bool = True, eigen_floor: float = 1e-12) -> np.ndarray:
    """n draws from N(mean, sigma^2 C), clipped into the unit cube."""
    if n < 2:
        raise ValueError(f"Population must have at least 2 members, got {n}")
    vals, vecs, _ = _eigen(es.C, eigen_floor)
    z = es.rng().standard_normal((n, es.dim))
    x = es.mean + es.sigma * (z * np.sqrt(vals)) @ vecs.T
    return np.clip(x, 0.0, 1.0) if clip else x


def unit_to_params(unit: np.ndarray) -> List[PolicyParams]:
    return [PolicyParams.from_vector(PARAM_LOWER + u * (PARAM_UPPER - PARAM_LOWER)) for u in np.atleast_2d(unit)]


def sample_generation(es: EsState, n: int) -> Tuple[List[PolicyParams], np.ndarray]:
    unit = sample_unit(es, n)
    return unit_to_params(unit), unit


def update_distribution(es: EsState, elites: np.ndarray, eigen_floor: float = 1e-12) -> EsState:
    """One CMA-ES update from elites sorted best first (unit-cube coordinates)."""
    elites = np.atleast_2d(np.asarray(elites, dtype=float))
    if len(elites) < 1:
        raise ValueError("Need at least one elite")
    par = CmaParameters.default(es.dim, len(elites))
    old = es.mean
    sigma = es.sigma
    y = (elites - old) / sigma
    y_w = par.weights @ y
    mean = old + sigma * y_w

    vals, vecs, _ = _eigen(es.C, eigen_floor)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    p_sigma = (1 - par.cs) * es.p_sigma + math.sqrt(par.cs * (2 - par.cs) * par.mueff) * (inv_sqrt @ y_w)
    gen = es.generation + 1
    norm_ps = float(np.linalg.norm(p_sigma))
    h_sigma = float(norm_ps / math.sqrt(1 - (1 - par.cs) ** (2 * gen)) < (1.4 + 2 / (es.dim + 1)) * par.chi_n)
    p_c = (1 - par.cc) * es.p_c + h_sigma * math.sqrt(par.cc * (2 - par.cc) * par.mueff) * y_w

    c1a = par.c1 * (1 - (1 - h_sigma ** 2) * par.cc * (2 - par.cc))
    rank_mu = (y * par.weights[:, None]).T @ y
    C = (1 - c1a - par.cmu) * es.C + par.c1 * np.outer(p_c, p_c) + par.cmu * rank_mu
    C = 0.5 * (C + C.T)
    vals, vecs, repaired = _eigen(C, eigen_floor)
    if repaired:
        logger.warning(f"Covariance lost positive definiteness at generation {gen}; flooring eigenvalues at {eigen_floor}")
        C = vecs @ np.diag(vals) @ vecs.T
        C = 0.5 * (C + C.T)
    sigma = sigma * math.exp(min(1.0, par.cs / par.damps * (norm_ps / par.chi_n - 1)))
    return replace(es, mean=mean, sigma=float(sigma), C=C, p_sigma=p_sigma, p_c=p_c, generation=gen)


# --- Archive ---
@dataclass
class Archive:
    """Elite archive (chi) plus the log of every explored policy."""
    params: List[PolicyParams] = field(default_factory=list)
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    pareto: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    explored_params: List[PolicyParams] = field(default_factory=list)
    explored_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self) -> int:
        return len(self.params)

    def add(self, params: Sequence[PolicyParams], points: np.ndarray) -> None:
        self.params.extend(params)
        self.points = np.vstack([self.points, np.asarray(points, dtype=float).reshape(-1, 2)])
        self.pareto = pareto_mask(self.points)

    def log_explored(self, params: Sequence[PolicyParams], points: np.ndarray) -> None:
        self.explored_params.extend(params)
        self.explored_points = np.vstack([self.explored_points, np.asarray(points, dtype=float).reshape(-1, 2)])

    def hypervolume(self, reference: np.ndarray) -> float:
        return hypervolume_2d(self.points, reference) if len(self) else 0.0


def reference_point(objectives: np.ndarray, margin: float) -> np.ndarray:
    lo = objectives.min(axis=0)
    span = objectives.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    return lo - margin * span


def elite_count(population: int, ratio: float) -> int:
    return max(1, math.ceil(ratio * population))


def select_elites(archive_points: np.ndarray, objectives: np.ndarray, reference: np.ndarray, ratio: float) -> np.ndarray:
    """Indices of the ceil(ratio * n) candidates with the lowest hypervolume loss, stable in index."""
    loss = hypervolume_loss(archive_points, objectives, reference)
    return np.argsort(loss, kind="stable")[:elite_count(len(objectives), ratio)]


@dataclass(frozen=True)
class GenerationSummary:
    generation: int
    best_agg: float
    best_res: float
    hypervolume: float
    elites: int
    archive_size: int
    pareto_size: int


def tell(es: EsState, archive: Archive, unit: np.ndarray, params: Sequence[PolicyParams], objectives: np.ndarray,
         elite_ratio: float, ref_margin: float = 0.1, eigen_floor: float = 1e-12) -> Tuple[EsState, GenerationSummary]:
    """Ranks a generation by hypervolume contribution, archives the elites and updates the strategy."""
    objectives = np.asarray(objectives, dtype=float).reshape(-1, 2)
    if es.reference is None:
        es = replace(es, reference=reference_point(objectives, ref_margin))
        logger.info(f"Hypervolume reference fixed at {es.reference.tolist()}")
    archive.log_explored(params, objectives)
    elite_idx = select_elites(archive.points, objectives, es.reference, elite_ratio)
    archive.add([params[i] for i in elite_idx], objectives[elite_idx])
    new_es = update_distribution(es, unit[elite_idx], eigen_floor)
    summary = GenerationSummary(generation=new_es.generation, best_agg=float(objectives[:, 0].max()),
                                best_res=float(objectives[:, 1].max()), hypervolume=archive.hypervolume(es.reference),
                                elites=len(elite_idx), archive_size=len(archive), pareto_size=int(archive.pareto.sum()))
    return new_es, summary


def optimize_objectives(objective_fn: Callable[[np.ndarray], np.ndarray], dim: int, population: int,
                        generations: int, elite_ratio: float = 0.5, sigma0: float = 0.3, seed: int = 0,
                        ref_margin: float = 0.1) -> Tuple[EsState, np.ndarray, np.ndarray, List[GenerationSummary]]:
    """Bi-objective search on the unit cube for a vectorized objective; returns the archive points and vectors.

    Used to check the optimizer on analytic fronts without the simulator.
    """
    es = init_state(dim, sigma0, seed)
    points = np.zeros((0, 2))
    archive_unit = np.zeros((0, dim))
    history = []
    for _ in range(generations):
        unit = sample_unit(es, population)
        objectives = np.asarray(objective_fn(unit), dtype=float)
        if es.reference is None:
            es = replace(es, reference=reference_point(objectives, ref_margin))
        elite_idx = select_elites(points, objectives, es.reference, elite_ratio)
        points = np.vstack([points, objectives[elite_idx]])
        archive_unit = np.vstack([archive_unit, unit[elite_idx]])
        es = update_distribution(es, unit[elite_idx])
        history.append(GenerationSummary(es.generation, float(objectives[:, 0].max()), float(objectives[:, 1].max()),
                                         hypervolume_2d(points, es.reference), len(elite_idx), len(points),
                                         int(pareto_mask(points).sum())))
    return es, points, archive_unit, history


def minimize_single_objective(fn: Callable[[np.ndarray], float], x0: Sequence[float], sigma0: float,
                              population: int, generations: int, elite_ratio: float = 0.5, seed: int = 0,
                              ftol: float = 0.0) -> Tuple[EsState, np.ndarray, float]:
    """Plain unbounded CMA-ES on a scalar objective; returns (state, best x, best f)."""
    es = init_state(len(x0), sigma0, seed, mean=np.asarray(x0, dtype=float))
    best_x, best_f = np.asarray(x0, dtype=float), float(fn(np.asarray(x0, dtype=float)))
    mu = elite_count(population, elite_ratio)
    for _ in range(generations):
        x = sample_unit(es, population, clip=False)
        f = np.array([fn(row) for row in x])
        order = np.argsort(f, kind="stable")
        if f[order[0]] < best_f:
            best_x, best_f = x[order[0]].copy(), float(f[order[0]])
        es = update_distribution(es, x[order[:mu]])
        if best_f <= ftol:
            break
    return es, best_x, best_f


# --- Checkpoints ---
def save_checkpoint(path: str, es: EsState) -> None:
    """Binary checkpoint: magic, u32 version, u32 dim, u32 generation, u64 seed, then float64 data."""
    ref = es.reference if es.reference is not None else np.array([np.nan, np.nan])
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IIIQ", CHECKPOINT_VERSION, es.dim, es.generation, es.seed))
        payload = np.concatenate([[es.sigma], ref, es.mean, es.C.ravel(), es.p_sigma, es.p_c]).astype("<f8")
        f.write(payload.tobytes())
    logger.info(f"Saved ES checkpoint at generation {es.generation} to {path}")


def load_checkpoint(path: str) -> EsState:
    with open(path, "rb") as f:
        blob = f.read()
    header = 4 + struct.calcsize("<IIIQ")
    if len(blob) < header or blob[:4] != CHECKPOINT_MAGIC:
        raise ModelFormatError(f"{path} is not an ES checkpoint")
    version, dim, generation, seed = struct.unpack("<IIIQ", blob[4:header])
    if version != CHECKPOINT_VERSION:
        raise ModelFormatError(f"Unsupported ES checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    expected = 3 + dim + dim * dim + 2 * dim
    data = np.frombuffer(blob[header:], dtype="<f8")
    if len(data) != expected:
        raise ModelFormatError(f"ES checkpoint holds {len(data)} values, expected {expected} for dim {dim}")
    sigma, ref = float(data[0]), data[1:3].copy()
    mean, C, p_sigma, p_c = np.split(data[3:].copy(), np.cumsum([dim, dim * dim, dim]))
    C = C.reshape(dim, dim)
    return EsState(mean=mean, sigma=sigma, C=C, p_sigma=p_sigma, p_c=p_c, generation=generation, seed=seed,
                   reference=None if np.isnan(ref).any() else ref)
