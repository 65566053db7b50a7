import numpy as np
import pytest

from pcsracing.arena import StartLine
from pcsracing.config import TrainConfig
from pcsracing.enums import AgentKind, StartSource, Winner
from pcsracing.errors import ModelFormatError, SimulationError
from pcsracing.game_cfr import terminal_utility
from pcsracing.race_harness import (GameTask, RaceAgent, action_log_rows, build_agent, choose_action,
                                    compare_conditions, gt_step, make_variants, plan_games, planned_game_count,
                                    regret_matching, render_table, run_experiment, run_race, run_race_agents,
                                    start_entry, summarize)
from pcsracing.regret_net import encode_all_actions, feature_length, init_model, save_model, train
from pcsracing.schemas import (AgentSpec, ExperimentReport, GameHistory, PcsPoint, PolicyParams, RaceResult,
                               VariantWinRate)

from .factories import StoppedPlanner, StraightPlanner

M = 2


def _candidate_model(w2):
    """Regret model whose output for candidate action k is w2[k]."""
    F = feature_length(M)
    model = init_model(F, 4, seed=0)
    model.W1[:] = 0.0
    for k in range(4):
        model.W1[k, F - 4 + k] = 1.0
    model.W2[0] = np.asarray(w2, dtype=np.float32)
    return model


def _history():
    return GameHistory(ego_pcs=[PcsPoint(agg=0.5, res=0.5)], opp_pcs=[PcsPoint(agg=0.2, res=0.3)])


def _report(kind, rates):
    variants = [VariantWinRate(variant=i, wins=r * 10, games=10, draws=0) for i, r in enumerate(rates)]
    return ExperimentReport(ego_kind=AgentKind.NON_GT, opp_kind=kind, variants=variants,
                            win_rate_mean=float(np.mean(rates)), win_rate_std=float(np.std(rates)),
                            games_planned=10 * len(rates), games_played=10 * len(rates), games_excluded=0, draws=0)


# --- Strategy ---
def test_choose_action_prefers_the_largest_positive_regret():
    assert choose_action(np.array([0.1, 0.4, 0.4, -1.0])) == (1, False)
    assert choose_action(np.array([-0.1, 0.0, -2.0, 0.0]), default_action=2) == (2, True)


def test_regret_matching():
    assert np.allclose(regret_matching(np.array([1.0, 3.0, -2.0, 0.0])), [0.25, 0.75, 0.0, 0.0])
    assert np.allclose(regret_matching(np.zeros(4)), 0.25)


def test_gt_step_follows_the_model(collection):
    current = PcsPoint.from_array(collection.points[0])
    decision = gt_step(_history(), _candidate_model([0.0, 0.0, 2.0, 0.0]), collection, current, M)
    assert decision.action.index == 2
    assert not decision.default_used
    assert decision.regrets.tolist() == [0.0, 0.0, 2.0, 0.0]

    scaled = gt_step(_history(), _candidate_model([0.0, 0.0, 14.0, 0.0]), collection, current, M)
    assert scaled.action.index == 2
    assert scaled.params == decision.params


def test_gt_step_falls_back_to_the_default_action(collection):
    current = PcsPoint.from_array(collection.points[0])
    decision = gt_step(_history(), _candidate_model([-1.0, -1.0, -1.0, -1.0]), collection, current, M,
                       default_action=3)
    assert decision.default_used
    assert decision.action.index == 3
    assert np.all(decision.regrets == 0.0)


def test_gt_step_rejects_a_model_for_another_game_length(collection):
    model = init_model(feature_length(3), 4)
    with pytest.raises(ModelFormatError):
        gt_step(_history(), model, collection, PcsPoint(agg=0.5, res=0.5), M)


# --- Agents ---
def test_start_entries_are_reproducible(pools):
    spec = AgentSpec(kind=AgentKind.NON_GT, seed=4)
    assert start_entry(spec, pools) == start_entry(spec, pools)
    explicit = AgentSpec(kind=AgentKind.NON_GT, start_source=StartSource.EXPLICIT, params=PolicyParams(w_al=3.0))
    assert start_entry(explicit, pools).params.w_al == 3.0
    with pytest.raises(ValueError):
        AgentSpec(kind=AgentKind.GT)


# --- Races ---
def test_moving_car_beats_a_parked_one(stadium_arena, pools):
    cfg = stadium_arena.settings.game
    ego = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StraightPlanner(2.0))
    opp = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StoppedPlanner())
    result = run_race_agents(ego, opp, stadium_arena, pools, cfg, StartLine(2.0))
    assert result.valid and not result.collision
    assert result.winner == Winner.EGO
    assert result.margin == pytest.approx(result.final_s_ego - result.final_s_opp)
    assert result.margin > 0.3


def test_collision_ends_the_race_in_a_draw(stadium_arena, pools):
    cfg = stadium_arena.settings.game.model_copy(update={"start_lateral_offset": 0.0})
    ego = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StraightPlanner(2.0))
    opp = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StraightPlanner(2.0))
    result = run_race_agents(ego, opp, stadium_arena, pools, cfg, StartLine(2.0))
    assert result.valid
    assert result.collision
    assert result.winner == Winner.DRAW
    assert result.margin == 0.0


class _FailingArena:
    def __init__(self, settings):
        self.settings = settings

    def initial_states(self, start, offset):
        raise SimulationError("simulator crashed")


def test_simulation_failure_invalidates_the_race(settings, pools):
    ego = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StoppedPlanner())
    result = run_race_agents(ego, ego, _FailingArena(settings), pools, settings.game, StartLine(0.0))
    assert not result.valid
    assert result.winner == Winner.DRAW


def test_swapping_roles_and_sides_negates_the_utility(ring_arena, pools):
    cfg = ring_arena.settings.game
    first = AgentSpec(kind=AgentKind.NON_GT, seed=1)
    second = AgentSpec(kind=AgentKind.NON_GT, seed=2)
    start = StartLine(3.0)
    a = run_race(first, second, ring_arena, pools, cfg, start)
    b = run_race(second, first, ring_arena, pools, cfg, start.swapped())
    assert a.valid and b.valid
    assert b.utility_ego == pytest.approx(-a.utility_ego, abs=1e-9)


def test_gt_agent_logs_one_decision_per_switch(tmp_path, stadium_arena, pools):
    path = str(tmp_path / "regret.bin")
    save_model(_candidate_model([0.5, 0.0, 0.0, 0.0]), path)
    gt = AgentSpec(kind=AgentKind.GT, model_path=path, seed=3)
    agent = build_agent(gt, pools, stadium_arena)
    assert agent.adaptive
    opp = RaceAgent(spec=AgentSpec(kind=AgentKind.NON_GT), planner=StoppedPlanner())
    result = run_race_agents(agent, opp, stadium_arena, pools, stadium_arena.settings.game, StartLine(2.0))
    assert result.valid and not result.collision
    assert len(result.action_log) == M - 1
    assert result.action_log[0].action == 0
    rows = action_log_rows(result)
    assert rows[0][7] == "agg+"


# --- Tournaments ---
def test_game_planning_counts():
    assert planned_game_count(20, 20, 5) == 4000
    assert planned_game_count(20, 20, 5, both_sides=False) == 2000
    egos = make_variants(AgentKind.NON_GT, 2)
    opps = make_variants(AgentKind.RANDOM, 2, seed=100)
    tasks = plan_games(egos, opps, [StartLine(1.0), StartLine(5.0)])
    assert len(tasks) == 8 * 2
    assert tasks[0].start.side == 0 and tasks[1].start.side == 1
    assert [v.seed for v in opps] == [100, 101]


def test_summary_arithmetic():
    spec = AgentSpec(kind=AgentKind.NON_GT)
    tasks = [GameTask(i % 2, 0, spec, spec, StartLine(0.0)) for i in range(6)]
    results = [
        RaceResult(winner=Winner.EGO, margin=1.0),
        RaceResult(winner=Winner.OPP, margin=1.0),
        RaceResult(winner=Winner.DRAW, margin=0.0),
        RaceResult(winner=Winner.EGO, margin=2.0),
        RaceResult(winner=Winner.DRAW, margin=0.0, valid=False),
        RuntimeError("worker died"),
    ]
    report = summarize(tasks, results, n_ego=2)
    assert report.games_planned == 6
    assert report.games_played == 4
    assert report.games_excluded == 2
    assert report.draws == 1
    assert report.win_rates().tolist() == [0.75, 0.5]
    assert report.win_rate_mean == pytest.approx(0.625)
    assert report.win_rate_std == pytest.approx(0.125)


def test_small_experiment_runs_every_race(ring_arena, pools):
    egos = make_variants(AgentKind.NON_GT, 2)
    opps = make_variants(AgentKind.EXTERNAL_FIXED, 1)
    report, results = run_experiment(egos, opps, [StartLine(2.0)], ring_arena, pools, ring_arena.settings.game)
    assert report.games_planned == 4
    assert report.games_played + report.games_excluded == 4
    assert len(results) == 4
    assert 0.0 <= report.win_rate_mean <= 1.0


@pytest.fixture
def trained_model_path(tmp_path):
    """Small regret model trained to favour agg+ over every other action."""
    rng = np.random.default_rng(21)
    rows = []
    for _ in range(64):
        history = GameHistory(ego_pcs=[PcsPoint.from_array(rng.uniform(0.0, 1.0, 2))],
                              opp_pcs=[PcsPoint.from_array(rng.uniform(0.0, 1.0, 2))])
        rows.append(encode_all_actions(history, M))
    X = np.concatenate(rows)
    y = np.tile([1.0, -0.5, -0.5, -0.5], 64)
    cfg = TrainConfig(hidden=8, batch=32, lr0=0.01, seed=2)
    result = train(X, y, cfg, epochs=40)
    path = str(tmp_path / "trained.bin")
    save_model(result.model, path)
    return path


def test_gt_agents_hold_their_own_against_non_gt(ring_arena, pools, trained_model_path):
    cfg = ring_arena.settings.game
    starts = [StartLine(2.0), StartLine(20.0)]
    opps = make_variants(AgentKind.NON_GT, 2, seed=100)
    reports = {}
    for kind in (AgentKind.GT, AgentKind.NON_GT):
        egos = make_variants(kind, 3, model_path=trained_model_path)
        report, results = run_experiment(egos, opps, starts, ring_arena, pools, cfg)
        planned = planned_game_count(3, 2, 2)
        assert report.games_planned == planned == len(results)
        assert report.games_played + report.games_excluded == planned
        assert report.draws <= report.games_played
        assert sum(v.games for v in report.variants) == report.games_played
        assert sum(v.draws for v in report.variants) == report.draws
        for v in report.variants:
            assert v.draws <= v.games
            assert 0.0 <= v.wins <= v.games

        valid = [r for r in results if isinstance(r, RaceResult) and r.valid]
        assert len(valid) == report.games_played
        assert sum(r.winner == Winner.DRAW for r in valid) == report.draws
        for r in valid:
            outcome = terminal_utility(r.final_s_ego, r.final_s_opp, r.collision)
            assert r.utility_ego == pytest.approx(outcome.utility_ego)
            assert outcome.utility_ego + outcome.utility_opp == 0.0
            assert r.margin == pytest.approx(abs(r.utility_ego))
            if r.collision:
                assert r.winner == Winner.DRAW
            if kind == AgentKind.GT and not r.collision:
                assert len(r.action_log) == M - 1
        reports[kind] = report

    assert reports[AgentKind.GT].win_rate_mean >= reports[AgentKind.NON_GT].win_rate_mean - 0.15


def test_comparison_table():
    baseline = {AgentKind.RANDOM: _report(AgentKind.RANDOM, [0.2, 0.4, 0.3]),
                AgentKind.NON_GT: _report(AgentKind.NON_GT, [0.5, 0.5])}
    treatment = {AgentKind.RANDOM: _report(AgentKind.RANDOM, [0.6, 0.7, 0.9]),
                 AgentKind.NON_GT: _report(AgentKind.NON_GT, [0.6, 0.6])}
    rows = compare_conditions(baseline, treatment)
    assert [r.opponent for r in rows] == [AgentKind.RANDOM, AgentKind.NON_GT]
    assert rows[0].delta_mu == pytest.approx(0.4333333, abs=1e-6)
    assert rows[0].p is not None and rows[0].p < 0.05
    assert rows[1].p is None
    table = render_table(rows)
    assert "random" in table
    assert "tie" in table
