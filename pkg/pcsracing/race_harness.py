# pcsracing/race_harness.py
#
# Online play and tournaments. A GT agent observes the opponent for one game step,
# places it in PCS, asks the regret network for the regret of each PCS action and
# switches to the policy the best action leads to. Non-GT agents keep their start
# policy, random agents draw theirs from every explored policy and the external agent
# is a fixed raceline follower. Tournaments cross ego variants, opponent variants,
# start lines and sides, and report win rates with paired t-tests between conditions.

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arena import Arena, StartLine
from .config import GameConfig
from .enums import AgentKind, StartSource, Winner
from .errors import ModelFormatError, PcsRacingError
from .game_cfr import terminal_utility
from .pcs_core import PolicyCollection, apply_action, estimate_pcs, normalize_pcs, read_collection
from .regret_net import MlpModel, feature_length, load_model, predict_regrets
from .schemas import (PARAM_LOWER, PARAM_UPPER, ActionLogRow, AgentSpec, ComparisonRow, ExperimentReport,
                      GameHistory, PcsAction, PcsPoint, PolicyEntry, PolicyParams, RaceResult, TTestResult,
                      VariantWinRate)
from .stats_logic import mean_std, paired_ttest
from .synthesis.subsets import PolicySets, load_sets
from .utils import run_tasks, worker_context

logger = logging.getLogger(__name__)

ACTION_LOG_COLUMNS = ["step", "opp_agg", "opp_res", "r_agg+", "r_agg-", "r_res+", "r_res-", "action", "new_agg",
                      "new_res"]


# --- Strategy ---
@dataclass(frozen=True)
class GtDecision:
    action: PcsAction
    params: PolicyParams
    point: PcsPoint
    regrets: np.ndarray
    default_used: bool


def choose_action(regrets: np.ndarray, default_action: int = 0) -> Tuple[int, bool]:
    """Argmax of the clipped regrets, lowest index on ties; the default when none is positive."""
    clipped = np.maximum(np.asarray(regrets, dtype=float), 0.0)
    if not np.any(clipped > 0):
        return default_action, True
    return int(np.argmax(clipped)), False


def gt_step(history: GameHistory, model: MlpModel, collection: PolicyCollection, current: PcsPoint, m: int,
            eps: float = 0.1, default_action: int = 0, action_count: int = 4) -> GtDecision:
    """Picks the PCS action with the highest predicted regret and returns the policy it leads to."""
    expected = feature_length(m, action_count)
    if model.feature_len != expected:
        raise ModelFormatError(f"Model takes {model.feature_len} features, games with m={m} need {expected}")
    regrets = predict_regrets(model, history, m, action_count, clip=True)
    index, default_used = choose_action(regrets, default_action)
    action = PcsAction.from_index(index, eps)
    params, point = apply_action(current, action, collection)
    return GtDecision(action=action, params=params, point=point, regrets=np.asarray(regrets, dtype=float),
                      default_used=default_used)


def regret_matching(regrets: np.ndarray) -> np.ndarray:
    """Strategy proportional to positive regret, uniform when no regret is positive."""
    positive = np.maximum(np.asarray(regrets, dtype=float), 0.0)
    total = positive.sum()
    if total <= 0:
        return np.full(len(positive), 1.0 / len(positive))
    return positive / total


# --- Agents ---
@dataclass(frozen=True)
class RacePools:
    """Policy sets an agent may start from or switch within, all in one PCS frame."""
    sets: PolicySets
    explored: Optional[PolicyCollection] = None

    @property
    def actions(self) -> PolicyCollection:
        return self.sets.near_optimal

    @property
    def everything(self) -> PolicyCollection:
        return self.explored if self.explored is not None else self.sets.all


def _nearest_by_params(params: PolicyParams, collection: PolicyCollection) -> PcsPoint:
    span = PARAM_UPPER - PARAM_LOWER
    table = np.array([p.to_vector() for p in collection.params])
    i = int(np.argmin(np.sum(((table - params.to_vector()) / span) ** 2, axis=1)))
    return PcsPoint.from_array(collection.points[i])


def start_entry(spec: AgentSpec, pools: RacePools) -> PolicyEntry:
    """Start policy of an agent, reproducible from its seed."""
    rng = np.random.default_rng(spec.seed)
    source = StartSource.RANDOM_FROM_ALL if spec.kind == AgentKind.RANDOM else spec.start_source
    if source == StartSource.EXPLICIT:
        return PolicyEntry(params=spec.params, point=_nearest_by_params(spec.params, pools.actions))
    pool = pools.everything if source == StartSource.RANDOM_FROM_ALL else pools.sets.pareto
    return pool.entries[int(rng.integers(0, len(pool)))]


@dataclass
class RaceAgent:
    spec: AgentSpec
    planner: Any
    entry: Optional[PolicyEntry] = None
    model: Optional[MlpModel] = None
    history: Optional[GameHistory] = None
    log: List[ActionLogRow] = field(default_factory=list)

    @property
    def adaptive(self) -> bool:
        return self.spec.kind == AgentKind.GT


_MODEL_CACHE: Dict[str, MlpModel] = {}


def _model(path: str) -> MlpModel:
    if path not in _MODEL_CACHE:
        _MODEL_CACHE[path] = load_model(path)
    return _MODEL_CACHE[path]


def build_agent(spec: AgentSpec, pools: RacePools, arena: Arena) -> RaceAgent:
    if spec.kind == AgentKind.EXTERNAL_FIXED:
        return RaceAgent(spec=spec, planner=arena.external_planner())
    entry = start_entry(spec, pools)
    model = _model(spec.model_path) if spec.kind == AgentKind.GT else None
    return RaceAgent(spec=spec, planner=arena.lattice_planner(entry.params), entry=entry, model=model)


# --- Races ---
def _observe_and_switch(agent: RaceAgent, own_traj, opp_traj, step: int, arena: Arena, pools: RacePools,
                        cfg: GameConfig) -> None:
    """Appends the last step to the agent's history, then applies its regret-maximizing action."""
    pcs = arena.settings.pcs
    observed = estimate_pcs(opp_traj, own_traj, pools.actions, pcs.t_clamp)
    past = agent.history or GameHistory()
    history = GameHistory(ego_pcs=past.ego_pcs + [agent.entry.point], opp_pcs=past.opp_pcs + [observed],
                          ego_actions=past.ego_actions)
    decision = gt_step(history, agent.model, pools.actions, agent.entry.point, cfg.m, pcs.eps,
                       cfg.default_action, cfg.action_count)
    agent.history = GameHistory(ego_pcs=history.ego_pcs, opp_pcs=history.opp_pcs,
                                ego_actions=history.ego_actions + [decision.action.index])
    agent.entry = PolicyEntry(params=decision.params, point=decision.point)
    agent.planner.set_params(decision.params)
    agent.log.append(ActionLogRow(step=step, opp_agg=observed.agg, opp_res=observed.res,
                                  regrets=[float(r) for r in decision.regrets], action=decision.action.index,
                                  new_agg=decision.point.agg, new_res=decision.point.res,
                                  default_used=decision.default_used))
    if decision.default_used:
        logger.debug(f"Step {step}: no positive regret, default action {decision.action.label}")


def run_race_agents(ego: RaceAgent, opp: RaceAgent, arena: Arena, pools: RacePools, cfg: GameConfig,
                    start: StartLine, seed: int = 0) -> RaceResult:
    """Observation step then m - 1 decision steps; GT agents re-plan in PCS between steps.

    A collision ends the race as a zero-utility draw. A simulation failure marks the
    result invalid.
    """
    collided = False
    try:
        states = arena.initial_states(start, cfg.start_lateral_offset)
        trajs = None
        for step in range(1, cfg.m + 1):
            if trajs is not None:
                for agent, own, other in ((ego, 0, 1), (opp, 1, 0)):
                    if agent.adaptive:
                        _observe_and_switch(agent, trajs[own], trajs[other], step, arena, pools, cfg)
            result = arena.run([ego.planner, opp.planner], list(states), cfg.step_duration)
            trajs = result.trajectories
            states = (trajs[0].final, trajs[1].final)
            if result.any_collision:
                collided = True
                logger.debug(f"Collision during game step {step}")
                break
    except (PcsRacingError, ValueError) as e:
        logger.warning(f"Race {ego.spec.kind.value} vs {opp.spec.kind.value} at s0={start.s0:.1f} invalid: {e}")
        return RaceResult(winner=Winner.DRAW, margin=0.0, valid=False, ego_kind=ego.spec.kind,
                          opp_kind=opp.spec.kind, seed=seed, side=start.side, action_log=ego.log)

    outcome = terminal_utility(states[0].s, states[1].s, collided)
    u = outcome.utility_ego
    winner = Winner.EGO if u > 0 else Winner.OPP if u < 0 else Winner.DRAW
    return RaceResult(winner=winner, margin=abs(u), collision=collided, utility_ego=u, final_s_ego=states[0].s,
                      final_s_opp=states[1].s, ego_kind=ego.spec.kind, opp_kind=opp.spec.kind, seed=seed,
                      side=start.side, action_log=ego.log)


def run_race(ego: AgentSpec, opp: AgentSpec, arena: Arena, pools: RacePools, cfg: GameConfig,
             start: StartLine) -> RaceResult:
    return run_race_agents(build_agent(ego, pools, arena), build_agent(opp, pools, arena), arena, pools, cfg, start,
                           seed=ego.seed)


# --- Tournaments ---
@dataclass(frozen=True)
class GameTask:
    ego_index: int
    opp_index: int
    ego: AgentSpec
    opp: AgentSpec
    start: StartLine


def make_variants(kind: AgentKind, n: int, seed: int = 0, model_path: Optional[str] = None) -> List[AgentSpec]:
    """n agents of one kind; variant i starts from the policy its seed draws."""
    return [AgentSpec(kind=kind, model_path=model_path if kind == AgentKind.GT else None, seed=seed + i)
            for i in range(n)]


def planned_game_count(n_ego: int, n_opp: int, n_starts: int, both_sides: bool = True) -> int:
    return n_ego * n_opp * n_starts * (2 if both_sides else 1)


def plan_games(ego_specs: Sequence[AgentSpec], opp_specs: Sequence[AgentSpec], starts: Sequence[StartLine],
               both_sides: bool = True) -> List[GameTask]:
    tasks = []
    for i, ego in enumerate(ego_specs):
        for j, opp in enumerate(opp_specs):
            for start in starts:
                lines = [start, start.swapped()] if both_sides else [start]
                tasks.extend(GameTask(i, j, ego, opp, line) for line in lines)
    return tasks


def race_task(task: GameTask) -> RaceResult:
    ctx = worker_context()
    return run_race(task.ego, task.opp, ctx["arena"], ctx["pools"], ctx["cfg"], task.start)


def summarize(tasks: Sequence[GameTask], results: Sequence[Any], n_ego: int, draw_value: float = 0.5
              ) -> ExperimentReport:
    """Per-ego-variant win rates over valid races; draws count draw_value. Failed tasks count as excluded."""
    wins = np.zeros(n_ego)
    games = np.zeros(n_ego, dtype=int)
    draws = np.zeros(n_ego, dtype=int)
    excluded = 0
    for task, result in zip(tasks, results):
        if not isinstance(result, RaceResult) or not result.valid:
            excluded += 1
            continue
        games[task.ego_index] += 1
        if result.winner == Winner.EGO:
            wins[task.ego_index] += 1.0
        elif result.winner == Winner.DRAW:
            wins[task.ego_index] += draw_value
            draws[task.ego_index] += 1
    variants = [VariantWinRate(variant=i, wins=float(wins[i]), games=int(games[i]), draws=int(draws[i]))
                for i in range(n_ego)]
    played = int(games.sum())
    if played + excluded != len(tasks):
        raise PcsRacingError(f"Report arithmetic broken: {played} played + {excluded} excluded != {len(tasks)}")
    mean, std = mean_std([v.win_rate for v in variants])
    return ExperimentReport(ego_kind=tasks[0].ego.kind, opp_kind=tasks[0].opp.kind, variants=variants,
                            win_rate_mean=mean, win_rate_std=std, games_planned=len(tasks), games_played=played,
                            games_excluded=excluded, draws=int(draws.sum()))


def run_experiment(ego_specs: Sequence[AgentSpec], opp_specs: Sequence[AgentSpec], starts: Sequence[StartLine],
                   arena: Arena, pools: RacePools, cfg: GameConfig, both_sides: bool = True,
                   draw_value: float = 0.5, threads: int = 1) -> Tuple[ExperimentReport, List[Any]]:
    """Full cross product of ego variants, opponent variants, start lines and sides."""
    tasks = plan_games(ego_specs, opp_specs, starts, both_sides)
    logger.info(f"Running {len(tasks)} races: {len(ego_specs)} {ego_specs[0].kind.value} x "
                f"{len(opp_specs)} {opp_specs[0].kind.value} x {len(starts)} starts")
    results = run_tasks(race_task, tasks, threads, {"arena": arena, "pools": pools, "cfg": cfg})
    for k, result in enumerate(results):
        if isinstance(result, BaseException):
            logger.error(f"Race {k} raised {type(result).__name__}: {result}")
    report = summarize(tasks, results, len(ego_specs), draw_value)
    logger.info(f"{report.ego_kind.value} vs {report.opp_kind.value}: win rate {report.win_rate_mean:.3f} "
                f"+/- {report.win_rate_std:.3f} ({report.games_played} played, {report.games_excluded} excluded, "
                f"{report.draws} draws)")
    return report, list(results)


# --- Comparison ---
def compare_conditions(baseline: Dict[AgentKind, ExperimentReport], treatment: Dict[AgentKind, ExperimentReport]
                       ) -> List[ComparisonRow]:
    """Per opponent kind, a paired t-test of treatment against baseline win rates by variant index."""
    rows = []
    for opponent, base in baseline.items():
        treat = treatment.get(opponent)
        if treat is None:
            continue
        try:
            test: TTestResult = paired_ttest(base.win_rates(), treat.win_rates())
        except ValueError as e:
            logger.warning(f"No comparison against {opponent.value}: {e}")
            continue
        rows.append(ComparisonRow(opponent=opponent, baseline_mean=base.win_rate_mean, baseline_std=base.win_rate_std,
                                  treatment_mean=treat.win_rate_mean, treatment_std=treat.win_rate_std,
                                  delta_mu=test.delta_mu, p=test.p, draws_baseline=base.draws,
                                  draws_treatment=treat.draws))
    return rows


def render_table(rows: Sequence[ComparisonRow], baseline: str = "non-GT", treatment: str = "GT") -> str:
    header = f"{'Opponent':<16}{baseline + ' ego':>18}{treatment + ' ego':>18}{'delta_mu':>10}{'p':>10}{'draws':>10}"
    lines = [header, "-" * len(header)]
    for row in rows:
        p = f"{row.p:.4f}" if row.p is not None else "tie"
        lines.append(f"{row.opponent.value:<16}"
                     f"{f'{row.baseline_mean:.3f} +/- {row.baseline_std:.3f}':>18}"
                     f"{f'{row.treatment_mean:.3f} +/- {row.treatment_std:.3f}':>18}"
                     f"{row.delta_mu:>10.3f}{p:>10}{f'{row.draws_baseline}/{row.draws_treatment}':>10}")
    return "\n".join(lines)


def action_log_rows(result: RaceResult) -> List[List[Any]]:
    return [[row.step, row.opp_agg, row.opp_res, *row.regrets, PcsAction.from_index(row.action, 1.0).label,
             row.new_agg, row.new_res] for row in result.action_log]


def load_pools(sets_dir: str, explored_path: Optional[str] = None) -> RacePools:
    """Policy sets from disk; the explored log, when given, is placed in the same PCS frame."""
    sets = load_sets(sets_dir)
    explored = None
    if explored_path:
        explored = normalize_pcs(read_collection(explored_path, normalize=False), sets.all.normalizer)
    return RacePools(sets=sets, explored=explored)
