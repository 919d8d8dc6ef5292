import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmmdesign import acquire, oracle, shapes, stimulus


def brute_greedy(x, k):
    """Reference max-min greedy by exhaustive scoring of every candidate at every step."""
    z = acquire.standardize(x)
    cen = z.mean(axis=0)
    dists = [np.linalg.norm(p - cen) for p in z]
    chosen = [min(range(len(z)), key=lambda i: (-dists[i], i))]
    while len(chosen) < k:
        def score(i):
            return min(np.linalg.norm(z[i] - z[j]) for j in chosen)
        rest = [i for i in range(len(z)) if i not in chosen]
        chosen.append(max(rest, key=lambda i: (score(i), -i)))
    return chosen


def test_select_diverse_on_a_line():
    x = np.arange(10.0)[:, None]
    assert acquire.select_diverse(x, 3) == [0, 9, 4]
    assert sorted(acquire.select_diverse(x, 10)) == list(range(10))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 10_000))
def test_select_diverse_matches_brute_force(n, k, seed):
    k = min(k, n)
    x = np.random.default_rng(seed).normal(size=(n, 3))
    assert acquire.select_diverse(x, k) == brute_greedy(x, k)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(0, 10_000))
def test_select_diverse_prefix_stability(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, 4))
    full = acquire.select_diverse(x, n)
    for k in range(1, n + 1):
        assert acquire.select_diverse(x, k) == full[:k]


def test_select_diverse_pair_realizes_greedy_max_distance():
    x = np.random.default_rng(1).normal(size=(9, 2))
    first, second = acquire.select_diverse(x, 2)
    z = acquire.standardize(x)
    d = np.linalg.norm(z - z[first], axis=1)
    assert d[second] == d.max()


def test_select_diverse_errors():
    with pytest.raises(ValueError):
        acquire.select_diverse(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        acquire.select_diverse(np.zeros((3, 2)), 0)


@pytest.mark.parametrize("n", [1, 4, 36, 100])
def test_lhs_is_stratified_and_in_bounds(n):
    p = acquire.lhs_phases(n, seed=3, restarts=20)
    assert p.shape == (n, 6)
    for row in p:
        stimulus.validate_params(row)
    u = (p - stimulus.LOWER) / (stimulus.UPPER - stimulus.LOWER)
    for d in range(6):
        assert sorted(np.floor(u[:, d] * n).astype(int)) == list(range(n))


def test_lhs_maximin_beats_median_candidate():
    cands = acquire.lhs_candidates(36, seed=5, restarts=200)
    chosen = acquire.lhs_phases(36, seed=5, restarts=200)
    u = (chosen - stimulus.LOWER) / (stimulus.UPPER - stimulus.LOWER)
    scores = [acquire.min_pairwise_distance(c) for c in cands]
    assert acquire.min_pairwise_distance(u) >= np.median(scores) - 1e-12
    assert acquire.min_pairwise_distance(u) == pytest.approx(max(scores))
    np.testing.assert_array_equal(chosen, acquire.lhs_phases(36, seed=5, restarts=200))


def test_dataset_cross_product_and_channels(small_ground_set):
    phases = acquire.lhs_phases(3, seed=0, restarts=5)
    ds = acquire.build_dataset(small_ground_set.features[:2], phases, n=8, split=0.5, seed=0)
    assert len(ds) == 6 and ds.inputs.shape == (6, 4, 24, 24) and ds.energies.shape == (6, 24, 24)
    assert ds.inputs.dtype == np.float32
    a = ds.inputs[4]
    assert 0 < a[0].min() and a[0].max() < 1 and np.all(np.diff(a[0], axis=1) > 0)
    assert np.all(np.diff(a[1], axis=0) > 0)
    _, chi = shapes.decode(small_ground_set.features[1], 8)
    np.testing.assert_array_equal(a[2], oracle.tile(chi))
    np.testing.assert_allclose(a[3], stimulus.phase_field(phases[1], 24), atol=1e-6)
    expect = oracle.simulate(chi, stimulus.phase_field(phases[1], 24))
    np.testing.assert_array_equal(ds.energies[4], expect)
    pos = ds.energies[ds.energies > 0]
    assert ds.scale == np.median(pos)


def test_split_by_shape_without_leakage():
    feats = shapes.build_ground_set(10, seed=4).features
    ds = acquire.build_dataset(feats, acquire.lhs_phases(2, 0, 5), n=8, split=0.8, seed=2)
    train_shapes = set(ds.shape_ids[ds.train_idx])
    test_shapes = set(ds.shape_ids[ds.test_idx])
    assert len(train_shapes) == 8 and len(test_shapes) == 2 and not train_shapes & test_shapes
    assert sorted(np.concatenate([ds.train_idx, ds.test_idx])) == list(range(len(ds)))


def test_degenerate_shape_is_skipped_with_warning(small_ground_set, caplog):
    feats = np.vstack([small_ground_set.features[:2], np.zeros(36)])
    ds = acquire.build_dataset(feats, acquire.lhs_phases(2, 0, 5), n=8, split=1.0, seed=0)
    assert len(ds) == 4 and ds.meta["skipped"] == [2]
    assert "degenerate" in caplog.text


def test_regeneration_is_bit_identical_and_jobs_free(tmp_path, tiny_dataset):
    tiny_dataset.save(tmp_path)
    loaded = acquire.Dataset.load(tmp_path)
    again = acquire.regenerate(loaded.meta, jobs=2)
    for a, b in [(loaded.inputs, again.inputs), (loaded.energies, again.energies),
                 (loaded.train_idx, again.train_idx), (loaded.test_idx, again.test_idx)]:
        np.testing.assert_array_equal(a, b)
    assert again.scale == loaded.scale


def test_split_counts_follow_floor():
    for n, frac in itertools.product([1, 5, 10, 13], [0.0, 0.5, 0.8, 1.0]):
        tr, te = acquire.split_shapes(n, frac, seed=1)
        assert len(tr) == int(np.floor(frac * n)) and len(tr) + len(te) == n
