# pcsracing/collection_worker.py
#
# Regret data collection. Every start pair of the two DPP subsets gets its own game
# tree; trees are enumerated in parallel worker processes and their samples are
# streamed to the dataset file by this single writer task.

import logging
import os
from typing import Optional

import numpy as np

from .arena import Arena, load_arena
from .config import Settings
from .errors import PcsRacingError
from .game_cfr import (ArenaSimulator, DatasetSummary, DatasetWriter, collect_start_pair,
                       draw_start_lines, games_per_tree, samples_per_tree, start_pairs, write_dataset_summary)
from .pcs_core import PolicyCollection
from .regret_net import feature_length
from .utils import gather_in_pool, worker_context

logger = logging.getLogger(__name__)

# Generator stream for start lines, separate from the synthesis streams.
START_LINE_STREAM = 2


def _collect_task(task):
    ego_start, opp_start, start_line = task
    ctx = worker_context()
    settings: Settings = ctx["settings"]
    simulator = ArenaSimulator(ctx["arena"], start_line, settings.game.step_duration,
                               settings.game.start_lateral_offset)
    return collect_start_pair(settings.game, ego_start, opp_start, ctx["collection"], simulator,
                              settings.pcs.eps, settings.pcs.t_clamp)


async def run_collection(settings: Settings, first: PolicyCollection, second: PolicyCollection,
                         collection: PolicyCollection, out_path: str, arena: Optional[Arena] = None) -> DatasetSummary:
    """Writes the regret dataset and its summary sidecar; returns the summary."""
    cfg = settings.game
    arena = arena or load_arena(settings)
    pairs = start_pairs(first, second)
    passes = cfg.collection_passes
    rng = np.random.default_rng([settings.seed, START_LINE_STREAM])
    lines = draw_start_lines(passes * len(pairs), rng, arena.raceline.length)
    tasks = [(ego, opp, lines[p * len(pairs) + k]) for p in range(passes) for k, (ego, opp) in enumerate(pairs)]
    logger.info(f"Collecting regrets: {len(pairs)} start pairs x {passes} pass(es), m={cfg.m}, "
                f"{games_per_tree(cfg.m, cfg.action_count)} games per tree")

    context = {"settings": settings, "arena": arena, "collection": collection}
    summary = DatasetSummary()
    failed_pairs = 0
    F = feature_length(cfg.m, cfg.action_count)
    with DatasetWriter(out_path, F, cfg.action_count) as writer:
        # Two trees per worker per chunk.
        chunk = max(settings.threads * 2, 1)
        for start in range(0, len(tasks), chunk):
            results = await gather_in_pool(_collect_task, tasks[start:start + chunk], settings.threads, context)
            for k, result in enumerate(results, start=start):
                if isinstance(result, BaseException):
                    failed_pairs += 1
                    logger.error(f"Start pair {k} failed and is excluded: {type(result).__name__}: {result}")
                    continue
                batch, tree_summary = result
                writer.write(batch)
                summary.merge(tree_summary)
            logger.info(f"Collected {min(start + chunk, len(tasks))}/{len(tasks)} trees, {summary.samples} samples")

    expected = (len(tasks) - failed_pairs) * samples_per_tree(cfg.m, cfg.action_count)
    if summary.samples + summary.samples_skipped != expected:
        raise PcsRacingError(f"Sample count {summary.samples}+{summary.samples_skipped} != {expected}")
    sidecar = os.path.splitext(out_path)[0] + "_summary.csv"
    write_dataset_summary(sidecar, summary)
    logger.info(f"Dataset done: {summary.games_played} games, {summary.branches_failed} failed branches, "
                f"{summary.samples} samples ({failed_pairs} start pairs excluded)")
    return summary
