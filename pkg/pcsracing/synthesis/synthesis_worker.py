# pcsracing/synthesis/synthesis_worker.py
#
# Offline policy synthesis. Each generation samples the search distribution, races
# every sample against the frozen evaluation set (in parallel), ranks the samples by
# hypervolume contribution and updates the distribution. After every generation the
# archive, the explored-policy log, the ES checkpoint and one progress row are
# written, so a killed run resumes from its last finished generation.

import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..arena import Arena, load_arena
from ..config import Settings
from ..enums import CollectionLabel
from ..errors import EvaluationError
from ..pcs_core import PolicyCollection, read_collection, write_collection
from ..schemas import PARAM_NAMES
from ..utils import append_row, gather_in_pool, worker_context
from .evaluation import PolicyEvaluation, eval_pairings, evaluate_policy
from .mo_cmaes import Archive, init_state, load_checkpoint, sample_generation, save_checkpoint, tell

logger = logging.getLogger(__name__)

PROGRESS_COLUMNS = ["generation", "best_agg", "best_res", "hypervolume", "crash_rate", "overtake_rate",
                    "archive_size", "pareto_size", "failed"]

# Stream ids that keep the evaluation set independent of the ES samples.
PAIRING_STREAM = 1


@dataclass(frozen=True)
class SynthesisPaths:
    out_dir: str

    @property
    def archive(self) -> str:
        return os.path.join(self.out_dir, "archive.csv")

    @property
    def explored(self) -> str:
        return os.path.join(self.out_dir, "explored.csv")

    @property
    def checkpoint(self) -> str:
        return os.path.join(self.out_dir, "es_checkpoint.bin")

    @property
    def progress(self) -> str:
        return os.path.join(self.out_dir, "progress.csv")


def _evaluate_task(params) -> PolicyEvaluation:
    ctx = worker_context()
    return evaluate_policy(params, ctx["pairings"], ctx["arena"], ctx["exploration_bonus"])


def _save_archive(paths: SynthesisPaths, archive: Archive) -> None:
    if len(archive):
        write_collection(paths.archive, PolicyCollection(archive.params, archive.points, CollectionLabel.ALL))
    if archive.explored_params:
        write_collection(paths.explored,
                         PolicyCollection(archive.explored_params, archive.explored_points, CollectionLabel.ALL))


def _load_archive(paths: SynthesisPaths) -> Archive:
    archive = Archive()
    if os.path.exists(paths.archive):
        stored = read_collection(paths.archive, normalize=False)
        archive.add(stored.params, stored.raw_points)
    if os.path.exists(paths.explored):
        explored = read_collection(paths.explored, normalize=False)
        archive.log_explored(explored.params, explored.raw_points)
    return archive


async def run_synthesis(settings: Settings, out_dir: str, resume: bool = False, generations: Optional[int] = None,
                        arena: Optional[Arena] = None) -> Archive:
    """Runs (or resumes) the multi-objective search and returns the final archive."""
    es_cfg = settings.es
    paths = SynthesisPaths(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    arena = arena or load_arena(settings)
    total = generations or es_cfg.generations
    pairings = eval_pairings(arena, es_cfg.n_pairings, np.random.default_rng([settings.seed, PAIRING_STREAM]),
                             es_cfg.opponent_lead_max)

    if resume and os.path.exists(paths.checkpoint):
        es = load_checkpoint(paths.checkpoint)
        archive = _load_archive(paths)
        logger.info(f"Resuming synthesis at generation {es.generation} with {len(archive)} archived policies")
    else:
        es = init_state(len(PARAM_NAMES), es_cfg.sigma0, settings.seed)
        archive = Archive()
        if os.path.exists(paths.progress):
            os.remove(paths.progress)

    context = {"arena": arena, "pairings": pairings, "exploration_bonus": es_cfg.exploration_bonus}
    while es.generation < total:
        gen = es.generation + 1
        params, unit = sample_generation(es, es_cfg.population)
        results = await gather_in_pool(_evaluate_task, params, settings.threads, context)

        ok = [i for i, r in enumerate(results) if isinstance(r, PolicyEvaluation)]
        for i, r in enumerate(results):
            if not isinstance(r, PolicyEvaluation):
                logger.warning(f"Generation {gen}: policy {i} dropped: {type(r).__name__}: {r}")
        if not ok:
            raise EvaluationError(f"Every policy of generation {gen} failed evaluation")

        evaluations: List[PolicyEvaluation] = [results[i] for i in ok]
        objectives = np.array([e.point.as_array() for e in evaluations])
        es, summary = tell(es, archive, unit[ok], [params[i] for i in ok], objectives, es_cfg.elite_ratio,
                           es_cfg.hv_ref_margin, es_cfg.eigen_floor)

        used = sum(e.pairings_used for e in evaluations)
        crash_rate = sum(e.crashes for e in evaluations) / used if used else 0.0
        overtake_rate = sum(e.overtakes for e in evaluations) / used if used else 0.0
        append_row(paths.progress, PROGRESS_COLUMNS,
                   [summary.generation, summary.best_agg, summary.best_res, summary.hypervolume, crash_rate,
                    overtake_rate, summary.archive_size, summary.pareto_size, len(params) - len(ok)])
        _save_archive(paths, archive)
        save_checkpoint(paths.checkpoint, es)
        logger.info(f"Generation {summary.generation}/{total}: best agg {summary.best_agg:.3f}, "
                    f"best res {summary.best_res:.3f}, HV {summary.hypervolume:.4f}, "
                    f"archive {summary.archive_size} (pareto {summary.pareto_size}), sigma {es.sigma:.4f}")

    logger.info(f"Synthesis finished after {es.generation} generations, {len(archive)} archived policies")
    return archive
