# pcsracing/tournament_worker.py
#
# Head-to-head tournaments. Every (ego kind, opponent kind) condition races the same
# ego variants, the same start lines and both sides, so ego variant i under GT and
# under non-GT differ only in whether the agent switches policies online. Races fan
# out to worker processes; reporting and the paired comparison run in this task.

import json
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .arena import Arena, StartLine, load_arena
from .config import Settings
from .enums import AgentKind
from .errors import PcsRacingError
from .race_harness import (GameTask, RacePools, compare_conditions, make_variants, plan_games, planned_game_count,
                           race_task, render_table, summarize)
from .schemas import ComparisonRow, ExperimentReport, RaceResult
from .utils import gather_in_pool, write_rows

logger = logging.getLogger(__name__)

START_LINE_STREAM = 3
# Opponent seeds are offset so that no opponent shares a start policy draw with an ego variant.
OPPONENT_SEED_OFFSET = 5000

RACE_COLUMNS = ["ego_kind", "opp_kind", "ego_variant", "opp_variant", "s0", "side", "winner", "margin", "collision",
                "valid", "final_s_ego", "final_s_opp"]
COMPARISON_COLUMNS = ["opponent", "baseline_mean", "baseline_std", "treatment_mean", "treatment_std", "delta_mu", "p",
                      "draws_baseline", "draws_treatment"]


@dataclass(frozen=True)
class TournamentPaths:
    out_dir: str

    @property
    def reports(self) -> str:
        return os.path.join(self.out_dir, "reports.json")

    @property
    def races(self) -> str:
        return os.path.join(self.out_dir, "races.csv")

    @property
    def comparison(self) -> str:
        return os.path.join(self.out_dir, "report.csv")

    @property
    def table(self) -> str:
        return os.path.join(self.out_dir, "table.txt")


def parse_kinds(values: List[str]) -> List[AgentKind]:
    try:
        return [AgentKind(v) for v in values]
    except ValueError as e:
        raise PcsRacingError(f"Unknown agent kind in {values}: {e}") from e


def tournament_starts(settings: Settings, arena: Arena) -> List[StartLine]:
    rng = np.random.default_rng([settings.seed, START_LINE_STREAM])
    return arena.random_start_lines(settings.experiment.n_starts, rng)


def planned_total(settings: Settings) -> int:
    """Race count of a full tournament without simulating anything."""
    exp = settings.experiment
    per_condition = planned_game_count(exp.n_ego_variants, exp.n_opp_variants, exp.n_starts, exp.both_sides)
    return per_condition * len(exp.ego_kinds) * len(exp.opp_kinds)


def _condition_tasks(settings: Settings, ego_kind: AgentKind, opp_kind: AgentKind, starts: List[StartLine],
                     model_path: Optional[str]) -> List[GameTask]:
    exp = settings.experiment
    base = settings.seed * 10000
    egos = make_variants(ego_kind, exp.n_ego_variants, seed=base, model_path=model_path)
    opps = make_variants(opp_kind, exp.n_opp_variants, seed=base + OPPONENT_SEED_OFFSET, model_path=model_path)
    return plan_games(egos, opps, starts, exp.both_sides)


def _race_rows(tasks: List[GameTask], results: List) -> List[list]:
    rows = []
    for task, result in zip(tasks, results):
        if isinstance(result, RaceResult):
            rows.append([task.ego.kind, task.opp.kind, task.ego_index, task.opp_index, task.start.s0, task.start.side,
                         result.winner, result.margin, result.collision, result.valid, result.final_s_ego,
                         result.final_s_opp])
        else:
            rows.append([task.ego.kind, task.opp.kind, task.ego_index, task.opp_index, task.start.s0, task.start.side,
                         "error", 0.0, False, False, float("nan"), float("nan")])
    return rows


def write_reports(path: str, reports: List[ExperimentReport]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump([r.model_dump(mode="json") for r in reports], f, indent=2)


def read_reports(path: str) -> List[ExperimentReport]:
    with open(path) as f:
        return [ExperimentReport(**item) for item in json.load(f)]


def comparison_for(reports: List[ExperimentReport], baseline: AgentKind = AgentKind.NON_GT,
                   treatment: AgentKind = AgentKind.GT) -> List[ComparisonRow]:
    """Pairs the baseline-ego and treatment-ego report of every opponent kind."""
    base = {r.opp_kind: r for r in reports if r.ego_kind == baseline}
    treat = {r.opp_kind: r for r in reports if r.ego_kind == treatment}
    return compare_conditions(base, treat)


def write_comparison(paths: TournamentPaths, rows: List[ComparisonRow]) -> str:
    write_rows(paths.comparison, COMPARISON_COLUMNS, [[getattr(row, c) for c in COMPARISON_COLUMNS] for row in rows])
    table = render_table(rows)
    with open(paths.table, "w") as f:
        f.write(table + "\n")
    return table


async def run_tournament(settings: Settings, pools: RacePools, out_dir: str, model_path: Optional[str] = None,
                         arena: Optional[Arena] = None) -> Tuple[List[ExperimentReport], List[ComparisonRow]]:
    """Runs every configured condition, then writes the race log, the reports and the comparison table."""
    exp = settings.experiment
    arena = arena or load_arena(settings)
    paths = TournamentPaths(out_dir)
    ego_kinds = parse_kinds(exp.ego_kinds)
    opp_kinds = parse_kinds(exp.opp_kinds)
    if (AgentKind.GT in ego_kinds or AgentKind.GT in opp_kinds) and not model_path:
        raise PcsRacingError("Tournaments with GT agents need a regret model")
    starts = tournament_starts(settings, arena)
    context = {"arena": arena, "pools": pools, "cfg": settings.game}

    reports: List[ExperimentReport] = []
    race_rows: List[list] = []
    for ego_kind in ego_kinds:
        for opp_kind in opp_kinds:
            tasks = _condition_tasks(settings, ego_kind, opp_kind, starts, model_path)
            logger.info(f"Condition {ego_kind.value} vs {opp_kind.value}: {len(tasks)} races")
            results = await gather_in_pool(race_task, tasks, settings.threads, context)
            for k, result in enumerate(results):
                if isinstance(result, BaseException):
                    logger.error(f"Race {k} of {ego_kind.value} vs {opp_kind.value} raised "
                                 f"{type(result).__name__}: {result}")
            report = summarize(tasks, results, exp.n_ego_variants, exp.draw_value)
            logger.info(f"{ego_kind.value} vs {opp_kind.value}: win rate {report.win_rate_mean:.3f} +/- "
                        f"{report.win_rate_std:.3f}, {report.games_excluded} excluded, {report.draws} draws")
            reports.append(report)
            race_rows.extend(_race_rows(tasks, results))

    write_rows(paths.races, RACE_COLUMNS, race_rows)
    write_reports(paths.reports, reports)
    rows = comparison_for(reports)
    table = write_comparison(paths, rows)
    logger.info(f"Tournament finished: {len(race_rows)} races\n{table}")
    return reports, rows
