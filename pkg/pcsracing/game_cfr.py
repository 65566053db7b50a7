# pcsracing/game_cfr.py
#
# The two-player zero-sum racing game in PCS. A game is one observation step with the
# starting policies followed by m - 1 simultaneous PCS actions of both agents. The
# enumerator plays every joint action sequence by depth-first search, simulating each
# shared prefix once, and the regret pass turns the complete outcome table into
# counterfactual values and regrets at every ego decision node. Those regrets,
# encoded with their histories, are the training set of the regret network.

import itertools
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .arena import Arena, StartLine
from .config import GameConfig
from .errors import DatasetFormatError, IncompleteTreeError, PcsRacingError
from .pcs_core import PolicyCollection, apply_action, estimate_pcs
from .regret_net import encode, feature_length
from .schemas import GameHistory, PcsAction, PcsPoint, PolicyEntry, PolicyParams, TerminalOutcome
from .utils import write_rows
from .vehicle_sim import Trajectory, VehicleState

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"PCSD"
DATASET_VERSION = 1
_DATASET_HEADER = "<III"
SUMMARY_COLUMNS = ["start_pairs", "games_played", "branches_failed", "collisions", "samples", "samples_skipped"]

Prefix = Tuple[int, ...]


# --- Utilities and counting ---
def terminal_utility(final_s_ego: float, final_s_opp: float, collision: bool) -> TerminalOutcome:
    """Winner gets the progress margin, loser its negation; ties and collisions are worth zero."""
    margin = 0.0 if collision else float(final_s_ego - final_s_opp)
    return TerminalOutcome(utility_ego=margin, utility_opp=-margin if margin != 0.0 else 0.0, collision=collision,
                           final_s_ego=float(final_s_ego), final_s_opp=float(final_s_opp))


def games_per_tree(m: int, action_count: int = 4) -> int:
    return action_count ** (2 * (m - 1))


def samples_per_tree(m: int, action_count: int = 4) -> int:
    """Ego decision nodes times actions: sum over depths j < m - 1 of A^(2j) nodes, A actions each."""
    return sum(action_count ** (2 * j) for j in range(m - 1)) * action_count


def game_count(m: int, n_init: int, action_count: int = 4) -> int:
    return n_init ** 2 * games_per_tree(m, action_count)


def sample_count(m: int, n_init: int, action_count: int = 4) -> int:
    return n_init ** 2 * samples_per_tree(m, action_count)


# --- Step simulation ---
@dataclass(frozen=True)
class StepOutcome:
    ego: Trajectory
    opp: Trajectory
    collided: bool


@dataclass(frozen=True)
class MatchNode:
    """Both cars after some game steps, with the planners that drove them there."""
    states: Tuple[VehicleState, VehicleState]
    planners: Optional[Tuple[Any, Any]] = None


class ArenaSimulator:
    """Plays game steps in the arena; each step runs on forked planners so parents stay reusable."""

    def __init__(self, arena: Arena, start: StartLine, duration: float, lateral_offset: float):
        self.arena = arena
        self.start_line = start
        self.duration = duration
        self.lateral_offset = lateral_offset

    def start(self) -> MatchNode:
        return MatchNode(states=self.arena.initial_states(self.start_line, self.lateral_offset))

    def step(self, node: MatchNode, ego_params: PolicyParams, opp_params: PolicyParams) -> Tuple[MatchNode, StepOutcome]:
        if node.planners is None:
            planners = (self.arena.lattice_planner(ego_params), self.arena.lattice_planner(opp_params))
        else:
            planners = tuple(p.fork() for p in node.planners)
            planners[0].set_params(ego_params)
            planners[1].set_params(opp_params)
        result = self.arena.run(list(planners), list(node.states), self.duration)
        ego, opp = result.trajectories
        child = MatchNode(states=(ego.final, opp.final), planners=planners)
        return child, StepOutcome(ego=ego, opp=opp, collided=result.any_collision)


SimulatorFactory = Callable[[StartLine], Any]


# --- Game tree ---
@dataclass
class GameTree:
    """Outcome table over joint action sequences plus the ego history at every decision node.

    utilities is indexed [ego a_1..a_D, opp b_1..b_D]; failed branches hold NaN and
    filled marks every leaf the enumerator reached.
    """
    action_count: int
    decisions: int
    utilities: np.ndarray
    filled: np.ndarray
    collisions: np.ndarray
    histories: Dict[Tuple[Prefix, Prefix], GameHistory] = field(default_factory=dict)
    games_played: int = 0
    branches_failed: int = 0

    @classmethod
    def empty(cls, action_count: int, decisions: int) -> "GameTree":
        shape = (action_count,) * (2 * decisions)
        return cls(action_count, decisions, np.full(shape, np.nan), np.zeros(shape, dtype=bool),
                   np.zeros(shape, dtype=bool))

    @classmethod
    def from_utilities(cls, utilities: np.ndarray, action_count: int) -> "GameTree":
        """Abstract tree with every leaf filled; used for analysis without a simulator."""
        utilities = np.asarray(utilities, dtype=float)
        decisions = utilities.ndim // 2
        if utilities.shape != (action_count,) * (2 * decisions):
            raise ValueError(f"Utility table shape {utilities.shape} is not ({action_count},)*2D")
        return cls(action_count, decisions, utilities.copy(), np.ones(utilities.shape, dtype=bool),
                   np.zeros(utilities.shape, dtype=bool), games_played=int(utilities.size))

    def block(self, ego_prefix: Prefix, opp_prefix: Prefix) -> Tuple[Any, ...]:
        rest = (slice(None),) * (self.decisions - len(ego_prefix))
        return tuple(ego_prefix) + rest + tuple(opp_prefix) + rest

    def nodes(self) -> Iterator[Tuple[Prefix, Prefix]]:
        """Every ego decision node, shallow first, in lexicographic order within a depth."""
        actions = range(self.action_count)
        for depth in range(self.decisions):
            for ego_prefix in itertools.product(actions, repeat=depth):
                for opp_prefix in itertools.product(actions, repeat=depth):
                    yield ego_prefix, opp_prefix


def _action(index: int, eps: float) -> PcsAction:
    return PcsAction.from_index(index, eps)


def enumerate_game_tree(cfg: GameConfig, ego_start: PolicyEntry, opp_start: PolicyEntry,
                        collection: PolicyCollection, simulator, eps: float = 0.1,
                        t_clamp: float = 10.0) -> GameTree:
    """Plays all (2|G|)^(2(m-1)) joint action sequences from one start pair.

    Shared prefixes are simulated once. A collision ends the game: every leaf below it
    gets the collision outcome and deeper histories repeat the last observation. A
    simulator failure marks the leaves below it as failed (NaN).
    """
    A, D = cfg.action_count, cfg.decision_count
    tree = GameTree.empty(A, D)

    def observe(outcome: StepOutcome) -> PcsPoint:
        return estimate_pcs(outcome.opp, outcome.ego, collection, t_clamp)

    def fill(ego_prefix: Prefix, opp_prefix: Prefix, value: float, collided: bool) -> None:
        idx = tree.block(ego_prefix, opp_prefix)
        tree.utilities[idx] = value
        tree.filled[idx] = True
        tree.collisions[idx] = collided
        tree.games_played += int(np.asarray(tree.filled[idx]).size)

    def leaf(ego_prefix: Prefix, opp_prefix: Prefix, node: MatchNode, collided: bool) -> None:
        ego, opp = node.states
        outcome = terminal_utility(ego.s, opp.s, collided)
        fill(ego_prefix, opp_prefix, outcome.utility_ego, collided)

    def expand(depth: int, ego_prefix: Prefix, opp_prefix: Prefix, node: MatchNode, ego: PolicyEntry,
               opp: PolicyEntry, history: GameHistory, opp_obs: PcsPoint, collided: bool) -> None:
        if depth == D:
            leaf(ego_prefix, opp_prefix, node, collided)
            return
        tree.histories[(ego_prefix, opp_prefix)] = history
        for a in range(A):
            ego_params, ego_point = apply_action(ego.point, _action(a, eps), collection)
            for b in range(A):
                opp_params, opp_point = apply_action(opp.point, _action(b, eps), collection)
                child_ego, child_opp = ego_prefix + (a,), opp_prefix + (b,)
                if collided:
                    child, child_obs, child_collided = node, opp_obs, True
                else:
                    try:
                        child, outcome = simulator.step(node, ego_params, opp_params)
                        child_obs, child_collided = observe(outcome), outcome.collided
                    except (PcsRacingError, ValueError) as e:
                        tree.branches_failed += 1
                        logger.warning(f"Branch ego={child_ego} opp={child_opp} failed: {e}")
                        fill(child_ego, child_opp, np.nan, False)
                        continue
                expand(depth + 1, child_ego, child_opp, child,
                       PolicyEntry(params=ego_params, point=ego_point), PolicyEntry(params=opp_params, point=opp_point),
                       history.extended(ego_point, child_obs, a), child_obs, child_collided)

    root = simulator.start()
    try:
        node, outcome = simulator.step(root, ego_start.params, opp_start.params)
    except (PcsRacingError, ValueError) as e:
        tree.branches_failed += 1
        logger.warning(f"Observation step failed, whole tree excluded: {e}")
        fill((), (), np.nan, False)
        return tree
    obs = observe(outcome)
    history = GameHistory(ego_pcs=[ego_start.point], opp_pcs=[obs])
    expand(0, (), (), node, ego_start, opp_start, history, obs, outcome.collided)
    logger.debug(f"Enumerated {tree.games_played} games, {tree.branches_failed} failed branches")
    return tree


# --- Counterfactual values and regrets ---
def _weights(first: np.ndarray, first_count: int, second: np.ndarray, second_count: int) -> np.ndarray:
    w = np.ones(())
    for vec in [first] * first_count + [second] * second_count:
        w = np.multiply.outer(w, vec)
    return w


def _weighted_nanmean(values: np.ndarray, weights: np.ndarray) -> float:
    finite = np.isfinite(values)
    total = float(weights[finite].sum())
    if total == 0.0:
        return float("nan")
    return float((values[finite] * weights[finite]).sum() / total)


def _missing(tree: GameTree, ego_prefix: Prefix, opp_prefix: Prefix) -> List[Tuple[Prefix, Prefix]]:
    idx = tree.block(ego_prefix, opp_prefix)
    holes = np.argwhere(~tree.filled[idx])
    r = tree.decisions - len(ego_prefix)
    return [(tuple(ego_prefix) + tuple(int(v) for v in h[:r]), tuple(opp_prefix) + tuple(int(v) for v in h[r:]))
            for h in holes]


def counterfactual_values(tree: GameTree, ego_prefix: Prefix = (), opp_prefix: Prefix = (),
                          ego_strategy: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """(v(h), v(h, e_k) for every k) at the node reached by the two action prefixes.

    The opponent plays uniformly; its reach probability of the node weights both
    values. The ego plays ego_strategy (uniform by default) below the node. Failed
    leaves are dropped and the remaining weights renormalized.
    """
    A, D = tree.action_count, tree.decisions
    j = len(ego_prefix)
    if len(opp_prefix) != j or j >= D:
        raise ValueError(f"Node prefixes of length {len(ego_prefix)}/{len(opp_prefix)} invalid for {D} decisions")
    missing = _missing(tree, ego_prefix, opp_prefix)
    if missing:
        raise IncompleteTreeError(missing)
    sigma = np.full(A, 1.0 / A) if ego_strategy is None else np.asarray(ego_strategy, dtype=float)
    uniform = np.full(A, 1.0 / A)
    reach = uniform[0] ** j
    sub = tree.utilities[tree.block(ego_prefix, opp_prefix)]
    r = D - j
    # sub axes: ego a_{j+1}..a_D, then opp b_{j+1}..b_D
    w = _weights(sigma, r - 1, uniform, r)
    action_values = reach * np.array([_weighted_nanmean(sub[k], w) for k in range(A)])
    finite = np.isfinite(action_values)
    if not finite.any() or sigma[finite].sum() == 0:
        return float("nan"), action_values
    value = float((sigma[finite] * action_values[finite]).sum() / sigma[finite].sum())
    return value, action_values


def counterfactual_regrets(tree: GameTree, ego_prefix: Prefix = (), opp_prefix: Prefix = (),
                           ego_strategy: Optional[np.ndarray] = None) -> np.ndarray:
    """r(h, e_k) = v(h, e_k) - v(h); NaN for actions whose whole subtree failed."""
    value, action_values = counterfactual_values(tree, ego_prefix, opp_prefix, ego_strategy)
    return action_values - value


def tree_regrets(tree: GameTree, ego_strategy: Optional[np.ndarray] = None
                 ) -> Iterator[Tuple[Prefix, Prefix, np.ndarray]]:
    for ego_prefix, opp_prefix in tree.nodes():
        yield ego_prefix, opp_prefix, counterfactual_regrets(tree, ego_prefix, opp_prefix, ego_strategy)


# --- Dataset ---
@dataclass
class DatasetSummary:
    start_pairs: int = 0
    games_played: int = 0
    branches_failed: int = 0
    collisions: int = 0
    samples: int = 0
    samples_skipped: int = 0

    def merge(self, other: "DatasetSummary") -> None:
        for name in SUMMARY_COLUMNS:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_row(self) -> List[int]:
        return [getattr(self, name) for name in SUMMARY_COLUMNS]


@dataclass(frozen=True)
class RegretBatch:
    features: np.ndarray
    actions: np.ndarray
    regrets: np.ndarray

    def __len__(self) -> int:
        return len(self.regrets)

    @classmethod
    def empty(cls, feature_len: int) -> "RegretBatch":
        return cls(np.zeros((0, feature_len)), np.zeros(0, dtype=np.uint8), np.zeros(0))

    @classmethod
    def concat(cls, batches: Sequence["RegretBatch"], feature_len: int) -> "RegretBatch":
        if not batches:
            return cls.empty(feature_len)
        return cls(np.vstack([b.features for b in batches]), np.concatenate([b.actions for b in batches]),
                   np.concatenate([b.regrets for b in batches]))


def tree_samples(tree: GameTree, cfg: GameConfig) -> Tuple[RegretBatch, DatasetSummary]:
    """Encodes every finite (history, action, regret) triple of a finished tree."""
    F = feature_length(cfg.m, cfg.action_count)
    rows, actions, regrets = [], [], []
    skipped = 0
    for ego_prefix, opp_prefix, r in tree_regrets(tree):
        history = tree.histories.get((ego_prefix, opp_prefix))
        for a in range(cfg.action_count):
            if history is None or not np.isfinite(r[a]):
                skipped += 1
                continue
            rows.append(encode(history, a, cfg.m, cfg.action_count))
            actions.append(a)
            regrets.append(r[a])
    summary = DatasetSummary(start_pairs=1, games_played=tree.games_played, branches_failed=tree.branches_failed,
                             collisions=int(tree.collisions.sum()), samples=len(regrets), samples_skipped=skipped)
    batch = RegretBatch(np.array(rows).reshape(-1, F), np.array(actions, dtype=np.uint8), np.array(regrets, dtype=float))
    return batch, summary


def collect_start_pair(cfg: GameConfig, ego_start: PolicyEntry, opp_start: PolicyEntry,
                       collection: PolicyCollection, simulator, eps: float, t_clamp: float
                       ) -> Tuple[RegretBatch, DatasetSummary]:
    tree = enumerate_game_tree(cfg, ego_start, opp_start, collection, simulator, eps, t_clamp)
    expected = games_per_tree(cfg.m, cfg.action_count)
    if tree.games_played != expected:
        raise IncompleteTreeError(_missing(tree, (), ()))
    batch, summary = tree_samples(tree, cfg)
    if summary.samples + summary.samples_skipped != samples_per_tree(cfg.m, cfg.action_count):
        raise PcsRacingError(f"Tree emitted {summary.samples}+{summary.samples_skipped} samples, expected "
                             f"{samples_per_tree(cfg.m, cfg.action_count)}")
    return batch, summary


def start_pairs(first: PolicyCollection, second: PolicyCollection) -> List[Tuple[PolicyEntry, PolicyEntry]]:
    """Cartesian product of the two disjoint starting sets (ego from the first)."""
    return list(itertools.product(first.entries, second.entries))


def draw_start_lines(n: int, rng: np.random.Generator, track_length: float) -> List[StartLine]:
    """One randomized side-by-side start line per start pair."""
    return [StartLine(s0=float(rng.uniform(0.0, track_length)), side=int(rng.integers(0, 2))) for _ in range(n)]


def build_dataset(cfg: GameConfig, first: PolicyCollection, second: PolicyCollection, collection: PolicyCollection,
                  simulator_factory: SimulatorFactory, start_lines: Sequence[StartLine], eps: float = 0.1,
                  t_clamp: float = 10.0) -> Tuple[RegretBatch, DatasetSummary]:
    """Regret samples over every start pair and collection pass, with exact count checks.

    start_lines holds one line per (pass, start pair), pass-major.
    """
    pairs = start_pairs(first, second)
    passes = cfg.collection_passes
    if len(start_lines) != passes * len(pairs):
        raise ValueError(f"Need {passes * len(pairs)} start lines, got {len(start_lines)}")
    F = feature_length(cfg.m, cfg.action_count)
    batches, summary = [], DatasetSummary()
    for p in range(passes):
        for k, (ego_start, opp_start) in enumerate(pairs):
            simulator = simulator_factory(start_lines[p * len(pairs) + k])
            batch, tree_summary = collect_start_pair(cfg, ego_start, opp_start, collection, simulator, eps, t_clamp)
            batches.append(batch)
            summary.merge(tree_summary)
        logger.info(f"Pass {p + 1}/{passes}: {summary.games_played} games, {summary.samples} samples so far")
    n_pairs = passes * len(pairs)
    if summary.games_played != n_pairs * games_per_tree(cfg.m, cfg.action_count):
        raise PcsRacingError(f"Played {summary.games_played} games, expected "
                             f"{n_pairs * games_per_tree(cfg.m, cfg.action_count)}")
    if summary.samples + summary.samples_skipped != n_pairs * samples_per_tree(cfg.m, cfg.action_count):
        raise PcsRacingError("Sample count does not match the tree structure")
    if summary.samples_skipped:
        logger.warning(f"{summary.samples_skipped} samples skipped below failed branches")
    return RegretBatch.concat(batches, F), summary


def _record_dtype(feature_len: int) -> np.dtype:
    return np.dtype([("features", "<f4", (feature_len,)), ("action", "u1"), ("regret", "<f4")])


class DatasetWriter:
    """Binary regret-sample stream: magic, u32 version, u32 feature_len, u32 action_count, then packed records."""

    def __init__(self, path: str, feature_len: int, action_count: int = 4):
        self.path = path
        self.feature_len = feature_len
        self.action_count = action_count
        self.count = 0
        self._file = None

    def __enter__(self) -> "DatasetWriter":
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        self._file = open(self.path, "wb")
        self._file.write(DATASET_MAGIC)
        self._file.write(struct.pack(_DATASET_HEADER, DATASET_VERSION, self.feature_len, self.action_count))
        return self

    def write(self, batch: RegretBatch) -> int:
        if batch.features.shape[1:] != (self.feature_len,):
            raise DatasetFormatError(f"Batch has {batch.features.shape[1:]} features, file expects {self.feature_len}")
        records = np.zeros(len(batch), dtype=_record_dtype(self.feature_len))
        records["features"] = batch.features
        records["action"] = batch.actions
        records["regret"] = batch.regrets
        self._file.write(records.tobytes())
        self.count += len(batch)
        return len(batch)

    def __exit__(self, exc_type, exc, tb) -> None:
        self._file.close()
        logger.info(f"Wrote {self.count} regret samples to {self.path}")


def write_dataset(path: str, batch: RegretBatch, action_count: int = 4) -> int:
    with DatasetWriter(path, batch.features.shape[1], action_count) as writer:
        return writer.write(batch)


def read_dataset(path: str, expected_feature_len: Optional[int] = None) -> RegretBatch:
    with open(path, "rb") as f:
        blob = f.read()
    header = len(DATASET_MAGIC) + struct.calcsize(_DATASET_HEADER)
    if len(blob) < header or blob[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path} is not a regret dataset")
    version, feature_len, action_count = struct.unpack(_DATASET_HEADER, blob[4:header])
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"Unsupported dataset version {version}, expected {DATASET_VERSION}")
    if expected_feature_len is not None and feature_len != expected_feature_len:
        raise DatasetFormatError(f"Dataset has feature_len {feature_len}, expected {expected_feature_len}")
    dtype = _record_dtype(feature_len)
    body = len(blob) - header
    if body % dtype.itemsize:
        raise DatasetFormatError(f"{path} body of {body} bytes is not a whole number of {dtype.itemsize}-byte records")
    records = np.frombuffer(blob[header:], dtype=dtype)
    if len(records) and records["action"].max() >= action_count:
        raise DatasetFormatError(f"Action index {records['action'].max()} outside 0..{action_count - 1}")
    return RegretBatch(records["features"].astype(np.float32), records["action"].copy(),
                       records["regret"].astype(np.float32))


def write_dataset_summary(path: str, summary: DatasetSummary) -> None:
    write_rows(path, SUMMARY_COLUMNS, [summary.as_row()])
