import itertools

import numpy as np
import pytest

from pcsracing.arena import StartLine
from pcsracing.config import GameConfig
from pcsracing.errors import DatasetFormatError, IncompleteTreeError
from pcsracing.game_cfr import (GameTree, RegretBatch, build_dataset, collect_start_pair, counterfactual_regrets,
                                counterfactual_values, enumerate_game_tree, game_count, games_per_tree, read_dataset,
                                sample_count, samples_per_tree, terminal_utility, write_dataset)
from pcsracing.regret_net import feature_length

from .factories import FakeSimulator, make_collection

A = 4


def _expected(U, sigma, ego, opp):
    if len(ego) == U.ndim // 2:
        return U[tuple(ego) + tuple(opp)]
    return sum(sigma[a] * sum(_expected(U, sigma, ego + (a,), opp + (b,)) for b in range(A)) / A for a in range(A))


def _oracle(U, sigma, ego, opp):
    """Counterfactual action values and node value straight from the definition."""
    reach = (1.0 / A) ** len(ego)
    action_values = np.array([reach * sum(_expected(U, sigma, ego + (k,), opp + (b,)) for b in range(A)) / A
                              for k in range(A)])
    return float(sigma @ action_values), action_values


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("uniform", [True, False])
def test_counterfactual_values_match_the_definition(m, uniform):
    decisions = m - 1
    rng = np.random.default_rng(m + 10 * uniform)
    for _ in range(50):
        U = rng.uniform(-5.0, 5.0, size=(A,) * (2 * decisions))
        sigma = np.full(A, 0.25) if uniform else rng.dirichlet(np.ones(A))
        tree = GameTree.from_utilities(U, A)
        for ego, opp in tree.nodes():
            value, action_values = counterfactual_values(tree, ego, opp, sigma)
            expected_value, expected_actions = _oracle(U, sigma, ego, opp)
            assert value == pytest.approx(expected_value, abs=1e-9)
            assert np.allclose(action_values, expected_actions, rtol=0.0, atol=1e-9)


def test_uniform_regrets_sum_to_zero():
    U = np.random.default_rng(0).normal(size=(A,) * 4)
    tree = GameTree.from_utilities(U, A)
    for ego, opp in tree.nodes():
        assert counterfactual_regrets(tree, ego, opp).sum() == pytest.approx(0.0, abs=1e-12)


def test_dominant_action_has_positive_regret():
    U = np.zeros((A, A))
    U[2, :] = 1.0
    regrets = counterfactual_regrets(GameTree.from_utilities(U, A))
    assert np.argmax(regrets) == 2
    assert regrets[2] == pytest.approx(0.75)


def test_tree_counts():
    assert games_per_tree(2) == 16
    assert samples_per_tree(2) == 4
    assert samples_per_tree(4) == (1 + 16 + 256) * 4
    assert game_count(4, 20) == 1_638_400
    assert sample_count(2, 1) == 4


def test_terminal_utility_is_zero_sum():
    win = terminal_utility(12.0, 10.5, False)
    assert (win.utility_ego, win.utility_opp) == (1.5, -1.5)
    crash = terminal_utility(12.0, 10.5, True)
    assert crash.utility_ego == 0.0 and crash.utility_opp == 0.0
    assert terminal_utility(3.0, 3.0, False).utility_opp == 0.0


def _entries(collection):
    entries = collection.entries
    return entries[0], entries[1]


@pytest.mark.parametrize("m", [2, 3])
def test_enumeration_plays_every_branch_once(m, collection):
    cfg = GameConfig(m=m, n_init=1)
    sim = FakeSimulator()
    ego, opp = _entries(collection)
    tree = enumerate_game_tree(cfg, ego, opp, collection, sim)
    assert tree.games_played == games_per_tree(m)
    assert tree.filled.all()
    assert np.isfinite(tree.utilities).all()
    # one observation step plus one step per internal edge
    assert sim.calls == 1 + sum(A ** (2 * d) for d in range(1, m))
    assert len(tree.histories) == sum(A ** (2 * d) for d in range(m - 1))


def test_collision_in_the_observation_step_zeroes_the_tree(collection):
    cfg = GameConfig(m=2, n_init=1)
    ego, opp = _entries(collection)
    tree = enumerate_game_tree(cfg, ego, opp, collection, FakeSimulator(collide_on=1))
    assert np.all(tree.utilities == 0.0)
    assert tree.collisions.all()
    batch, summary = collect_start_pair(cfg, ego, opp, collection, FakeSimulator(collide_on=1), 0.1, 10.0)
    assert np.all(batch.regrets == 0.0)
    assert summary.collisions == 16


def test_failed_branch_is_dropped_from_the_average(collection):
    cfg = GameConfig(m=2, n_init=1)
    ego, opp = _entries(collection)
    tree = enumerate_game_tree(cfg, ego, opp, collection, FakeSimulator(fail_at=2))
    assert tree.branches_failed == 1
    assert np.isnan(tree.utilities[0, 0])
    assert tree.games_played == 16
    _, values = counterfactual_values(tree)
    assert np.isfinite(values).all()


def test_failed_observation_step_skips_every_sample(collection):
    cfg = GameConfig(m=2, n_init=1)
    ego, opp = _entries(collection)
    batch, summary = collect_start_pair(cfg, ego, opp, collection, FakeSimulator(fail_at=1), 0.1, 10.0)
    assert len(batch) == 0
    assert summary.samples_skipped == 4
    assert summary.branches_failed == 1


def test_missing_leaves_are_reported():
    tree = GameTree.empty(A, 1)
    tree.filled[:3] = True
    tree.utilities[:3] = 0.0
    with pytest.raises(IncompleteTreeError) as info:
        counterfactual_values(tree)
    assert ((3,), (0,)) in info.value.missing
    assert len(info.value.missing) == 4
    with pytest.raises(ValueError):
        GameTree.from_utilities(np.zeros((A, 3)), A)


@pytest.mark.parametrize("m,n_init", [(2, 1), (2, 2), (3, 2)])
def test_dataset_has_the_exact_sample_count(m, n_init):
    cfg = GameConfig(m=m, n_init=n_init)
    collection = make_collection(2 * n_init, seed=m)
    first = collection.subset(range(n_init), collection.label)
    second = collection.subset(range(n_init, 2 * n_init), collection.label)
    lines = [StartLine(float(k)) for k in range(n_init ** 2)]
    batch, summary = build_dataset(cfg, first, second, collection, lambda line: FakeSimulator(), lines)
    assert summary.games_played == game_count(m, n_init)
    assert len(batch) == summary.samples == sample_count(m, n_init)
    assert batch.features.shape == (len(batch), feature_length(m))
    assert set(np.unique(batch.actions)) <= set(range(A))
    with pytest.raises(ValueError):
        build_dataset(cfg, first, second, collection, lambda line: FakeSimulator(), lines[:-1])


def test_dataset_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    batch = RegretBatch(rng.normal(size=(10, 16)).astype(np.float32), rng.integers(0, A, 10).astype(np.uint8),
                        rng.normal(size=10).astype(np.float32))
    path = str(tmp_path / "data" / "regrets.bin")
    assert write_dataset(path, batch) == 10
    loaded = read_dataset(path, expected_feature_len=16)
    assert np.array_equal(loaded.features, batch.features)
    assert np.array_equal(loaded.actions, batch.actions)
    assert np.array_equal(loaded.regrets, batch.regrets)


def test_corrupt_datasets_are_rejected(tmp_path):
    batch = RegretBatch(np.zeros((2, 16), dtype=np.float32), np.zeros(2, dtype=np.uint8), np.zeros(2))
    path = tmp_path / "regrets.bin"
    write_dataset(str(path), batch)
    blob = path.read_bytes()
    with pytest.raises(DatasetFormatError):
        read_dataset(str(path), expected_feature_len=40)
    path.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(DatasetFormatError):
        read_dataset(str(path))
    path.write_bytes(blob[:-3])
    with pytest.raises(DatasetFormatError):
        read_dataset(str(path))


def test_nodes_are_listed_shallow_first():
    tree = GameTree.from_utilities(np.zeros((A,) * 4), A)
    nodes = list(tree.nodes())
    assert nodes[0] == ((), ())
    assert nodes[1:] == [((a,), (b,)) for a, b in itertools.product(range(A), repeat=2)]
