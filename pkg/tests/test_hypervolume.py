from itertools import combinations

import numpy as np
import pytest

from pcsracing.synthesis.hypervolume import hypervolume_2d, hypervolume_loss, pareto_mask


def _union_by_inclusion_exclusion(points, ref):
    total = 0.0
    for r in range(1, len(points) + 1):
        for subset in combinations(points, r):
            corner = np.min(np.array(subset), axis=0)
            area = np.prod(np.maximum(corner - ref, 0.0))
            total += area if r % 2 else -area
    return total


def _union_on_a_grid(points, ref):
    xs = np.unique(np.concatenate([[ref[0]], points[:, 0]]))
    ys = np.unique(np.concatenate([[ref[1]], points[:, 1]]))
    area = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        for y0, y1 in zip(ys[:-1], ys[1:]):
            if np.any((points[:, 0] >= x1) & (points[:, 1] >= y1)):
                area += (x1 - x0) * (y1 - y0)
    return area


def _dominated_by_brute_force(points):
    n = len(points)
    out = np.ones(n, dtype=bool)
    for i in range(n):
        for j in range(n):
            if np.all(points[j] >= points[i]) and np.any(points[j] > points[i]):
                out[i] = False
    return out


def test_small_sets_match_inclusion_exclusion():
    rng = np.random.default_rng(0)
    ref = np.array([0.0, 0.0])
    for _ in range(100):
        points = rng.uniform(0.0, 1.0, (int(rng.integers(1, 9)), 2))
        assert hypervolume_2d(points, ref) == pytest.approx(_union_by_inclusion_exclusion(points, ref), abs=1e-9)


def test_larger_sets_match_grid_compression():
    rng = np.random.default_rng(1)
    points = rng.uniform(-2.0, 2.0, (50, 2))
    ref = np.array([-3.0, -3.0])
    assert hypervolume_2d(points, ref) == pytest.approx(_union_on_a_grid(points, ref), rel=1e-9)


def test_monte_carlo_estimate_agrees():
    rng = np.random.default_rng(2)
    points = rng.uniform(0.0, 1.0, (20, 2))
    samples = rng.uniform(0.0, 1.0, (200_000, 2))
    covered = np.zeros(len(samples), dtype=bool)
    for p in points:
        covered |= np.all(samples <= p, axis=1)
    estimate = covered.mean()
    se = np.sqrt(estimate * (1.0 - estimate) / len(samples))
    assert abs(hypervolume_2d(points, [0.0, 0.0]) - estimate) < 3.0 * se


def test_points_not_dominating_the_reference_add_nothing():
    assert hypervolume_2d(np.array([[1.0, -1.0], [-1.0, 1.0]]), [0.0, 0.0]) == 0.0
    assert hypervolume_2d(np.zeros((0, 2)), [0.0, 0.0]) == 0.0
    assert hypervolume_2d(np.array([[2.0, 3.0], [2.0, 3.0]]), [0.0, 0.0]) == pytest.approx(6.0)


def test_pareto_mask_matches_pairwise_dominance_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(50):
        # integer coordinates force ties and duplicates
        points = rng.integers(0, 6, (30, 2)).astype(float)
        assert pareto_mask(points).tolist() == _dominated_by_brute_force(points).tolist()


def test_hypervolume_loss_is_the_negated_gain():
    archive = np.array([[1.0, 2.0], [2.0, 1.0]])
    ref = [0.0, 0.0]
    loss = hypervolume_loss(archive, np.array([[0.5, 0.5], [2.0, 2.0]]), ref)
    assert loss[0] == pytest.approx(0.0)
    assert loss[1] == pytest.approx(-(4.0 - 3.0))
    assert hypervolume_loss(np.zeros((0, 2)), np.array([[1.0, 1.0]]), ref).tolist() == [-1.0]
