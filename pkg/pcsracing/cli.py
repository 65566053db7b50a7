# pcsracing/cli.py
#
# Command-line entry point: python -m pcsracing.cli <command> [options].
# Every command loads the JSON config, applies the global flags on top and writes its
# artifacts under --out-dir. Errors raised on purpose end the run with exit code 1.

import argparse
import asyncio
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from .arena import StartLine, load_arena
from .collection_worker import run_collection
from .config import Settings
from .config_utils import load_settings
from .enums import AgentKind, CollectionLabel
from .errors import PcsRacingError
from .game_cfr import read_dataset
from .pcs_core import read_collection
from .plot_data import export_collection_scatter, export_progress, export_race_pcs_path
from .race_harness import ACTION_LOG_COLUMNS, action_log_rows, load_pools, run_race
from .regret_net import feature_length, save_model, train
from .schemas import AgentSpec, RaceResult
from .synthesis import extract_sets, load_sets, write_sets
from .synthesis.synthesis_worker import SynthesisPaths, run_synthesis
from .tournament_worker import (OPPONENT_SEED_OFFSET, TournamentPaths, comparison_for, planned_total, read_reports,
                                run_tournament, write_comparison)
from .utils import setup_component_logging, write_rows

logger = logging.getLogger(__name__)

# Generator stream for the DPP candidate order.
SETS_STREAM = 4


# --- Paths ---
def _synthesis_dir(settings: Settings) -> str:
    return os.path.join(settings.out_dir, "synthesis")


def _sets_dir(settings: Settings, args) -> str:
    return getattr(args, "sets", None) or os.path.join(settings.out_dir, "sets")


def _explored(settings: Settings, args) -> Optional[str]:
    path = getattr(args, "explored", None) or SynthesisPaths(_synthesis_dir(settings)).explored
    return path if os.path.exists(path) else None


def _model_path(settings: Settings, args) -> str:
    return getattr(args, "model", None) or os.path.join(settings.out_dir, "regret_model.bin")


def _dataset_path(settings: Settings, args) -> str:
    return getattr(args, "dataset", None) or os.path.join(settings.out_dir, "regrets.bin")


# --- Commands ---
def cmd_synthesize(settings: Settings, args) -> int:
    asyncio.run(run_synthesis(settings, _synthesis_dir(settings), resume=args.resume, generations=args.generations))
    return 0


def cmd_sets(settings: Settings, args) -> int:
    archive_path = args.archive or SynthesisPaths(_synthesis_dir(settings)).archive
    archive = read_collection(archive_path, normalize=False)
    rng = np.random.default_rng([settings.seed, SETS_STREAM])
    sets = extract_sets(archive, settings.pcs.d_near, settings.pcs.n_dpp, rng)
    out_dir = _sets_dir(settings, args)
    write_sets(sets, out_dir)
    print(f"pareto={len(sets.pareto)} near_optimal={len(sets.near_optimal)} dpp={len(sets.dpp_first)}x2 -> {out_dir}")
    return 0


def cmd_collect(settings: Settings, args) -> int:
    sets = load_sets(_sets_dir(settings, args))
    n_init = settings.game.n_init
    if n_init > min(len(sets.dpp_first), len(sets.dpp_second)):
        raise PcsRacingError(f"n_init {n_init} exceeds the DPP subset sizes "
                             f"{len(sets.dpp_first)}/{len(sets.dpp_second)}")
    first = sets.dpp_first.subset(range(n_init), CollectionLabel.DPP_SUBSET)
    second = sets.dpp_second.subset(range(n_init), CollectionLabel.DPP_SUBSET)
    out_path = _dataset_path(settings, args)
    summary = asyncio.run(run_collection(settings, first, second, sets.near_optimal, out_path))
    print(f"{summary.samples} samples from {summary.games_played} games -> {out_path}")
    return 0


def cmd_train(settings: Settings, args) -> int:
    cfg = settings.game
    data = read_dataset(_dataset_path(settings, args), feature_length(cfg.m, cfg.action_count))
    result = train(data.features, data.regrets, settings.train, epochs=args.epochs,
                   log_path=os.path.join(settings.out_dir, "train_log.csv"))
    out_path = _model_path(settings, args)
    save_model(result.model, out_path)
    print(f"best val L1 {result.best_val:.6f} at epoch {result.best_epoch} -> {out_path}")
    return 0


def _start_line(settings: Settings, args, track_length: float) -> StartLine:
    if args.s0 is not None:
        return StartLine(s0=args.s0, side=args.side)
    rng = np.random.default_rng([settings.seed, 5])
    return StartLine(s0=float(rng.uniform(0.0, track_length)), side=args.side)


def cmd_race(settings: Settings, args) -> int:
    arena = load_arena(settings)
    pools = load_pools(_sets_dir(settings, args), _explored(settings, args))
    model_path = _model_path(settings, args)
    ego = AgentSpec(kind=AgentKind(args.ego), seed=settings.seed,
                    model_path=model_path if args.ego == AgentKind.GT.value else None)
    opp = AgentSpec(kind=AgentKind(args.opp), seed=settings.seed + OPPONENT_SEED_OFFSET,
                    model_path=model_path if args.opp == AgentKind.GT.value else None)
    start = _start_line(settings, args, arena.raceline.length)
    result = run_race(ego, opp, arena, pools, settings.game, start)

    stem = os.path.join(settings.out_dir, "races", f"{args.ego}_vs_{args.opp}_seed{settings.seed}")
    os.makedirs(os.path.dirname(stem), exist_ok=True)
    with open(stem + ".json", "w") as f:
        f.write(result.model_dump_json(indent=2))
    write_rows(stem + "_actions.csv", ACTION_LOG_COLUMNS, action_log_rows(result))
    print(f"winner={result.winner.value} margin={result.margin:.3f} collision={result.collision} "
          f"valid={result.valid} -> {stem}.json")
    return 0 if result.valid else 1


def cmd_experiment(settings: Settings, args) -> int:
    if args.dry_run:
        print(planned_total(settings))
        return 0
    pools = load_pools(_sets_dir(settings, args), _explored(settings, args))
    model_path = _model_path(settings, args)
    out_dir = os.path.join(settings.out_dir, "tournament")
    asyncio.run(run_tournament(settings, pools, out_dir, model_path if os.path.exists(model_path) else None))
    with open(TournamentPaths(out_dir).table) as f:
        print(f.read(), end="")
    return 0


def cmd_stats(settings: Settings, args) -> int:
    paths = TournamentPaths(os.path.join(settings.out_dir, "tournament"))
    reports = read_reports(args.reports or paths.reports)
    rows = comparison_for(reports, AgentKind(args.baseline), AgentKind(args.treatment))
    print(write_comparison(paths, rows))
    return 0


def cmd_plot_data(settings: Settings, args) -> int:
    out_dir = os.path.join(settings.out_dir, "plots")
    sets_dir = _sets_dir(settings, args)
    written = 0
    if os.path.isdir(sets_dir):
        export_collection_scatter(load_sets(sets_dir), os.path.join(out_dir, "pcs_scatter.csv"))
        written += 1
    if args.race:
        with open(args.race) as f:
            result = RaceResult.model_validate_json(f.read())
        name = os.path.splitext(os.path.basename(args.race))[0]
        export_race_pcs_path(result, os.path.join(out_dir, f"{name}_pcs_path.csv"))
        written += 1
    progress = SynthesisPaths(_synthesis_dir(settings)).progress
    if os.path.exists(progress):
        export_progress(progress, os.path.join(out_dir, "progress.csv"))
        written += 1
    if not written:
        raise PcsRacingError(f"Nothing to export: no sets under {sets_dir}, no --race file, no progress log")
    print(f"{written} plot file(s) -> {out_dir}")
    return 0


COMMANDS = {
    "synthesize": cmd_synthesize,
    "sets": cmd_sets,
    "collect": cmd_collect,
    "train": cmd_train,
    "race": cmd_race,
    "experiment": cmd_experiment,
    "stats": cmd_stats,
    "plot-data": cmd_plot_data,
}


# --- Argument parsing ---
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcsracing", description="Game-theoretic racing in policy characteristic space")
    parser.add_argument("--config", help="JSON config file (default config/pcs_config.json)")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--out-dir", help="Directory for every artifact of the run")
    parser.add_argument("--threads", type=int, help="Worker processes")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="Multi-objective policy search")
    p.add_argument("--resume", action="store_true", help="Continue from the last checkpoint")
    p.add_argument("--generations", type=int)

    p = sub.add_parser("sets", help="Pareto, near-optimal and DPP sets from the archive")
    p.add_argument("--archive")
    p.add_argument("--sets", help="Output directory")

    p = sub.add_parser("collect", help="Counterfactual regret dataset")
    p.add_argument("--sets")
    p.add_argument("--dataset", help="Output file")
    p.add_argument("--m", type=int, help="Game steps")
    p.add_argument("--n-init", type=int, help="Start policies per DPP subset")

    p = sub.add_parser("train", help="Fit the regret network")
    p.add_argument("--dataset")
    p.add_argument("--model", help="Output file")
    p.add_argument("--epochs", type=int)

    kinds = [k.value for k in AgentKind]
    p = sub.add_parser("race", help="One head-to-head race with its action log")
    p.add_argument("--ego", choices=kinds, default=AgentKind.GT.value)
    p.add_argument("--opp", choices=kinds, default=AgentKind.NON_GT.value)
    p.add_argument("--s0", type=float, help="Start line arc length; drawn from the seed when omitted")
    p.add_argument("--side", type=int, choices=[0, 1], default=0)
    p.add_argument("--sets")
    p.add_argument("--explored")
    p.add_argument("--model")

    p = sub.add_parser("experiment", help="Tournament over every configured condition")
    p.add_argument("--dry-run", action="store_true", help="Print the planned race count and exit")
    p.add_argument("--sets")
    p.add_argument("--explored")
    p.add_argument("--model")

    p = sub.add_parser("stats", help="Paired t-tests on stored tournament reports")
    p.add_argument("--reports")
    p.add_argument("--baseline", choices=kinds, default=AgentKind.NON_GT.value)
    p.add_argument("--treatment", choices=kinds, default=AgentKind.GT.value)

    p = sub.add_parser("plot-data", help="CSV data for the PCS figures")
    p.add_argument("--sets")
    p.add_argument("--race", help="RaceResult JSON written by the race command")
    return parser


def _overrides(args) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for flag, key in (("seed", "seed"), ("out_dir", "out_dir"), ("threads", "threads")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    game = {}
    if getattr(args, "m", None) is not None:
        game["m"] = args.m
    if getattr(args, "n_init", None) is not None:
        game["n_init"] = args.n_init
    if game:
        overrides["game"] = game
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, _overrides(args))
        component = args.command.replace("-", "_").title().replace("_", "")
        setup_component_logging(component, settings.out_dir, logging.DEBUG if args.verbose else logging.INFO)
        return COMMANDS[args.command](settings, args)
    except (PcsRacingError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # Bad values reaching the config models.
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
