import numpy as np
import pytest

from rankcal.dataset import InteractionDataset
from rankcal.propensity import (
    PropensityTable,
    clip,
    estimate_popularity,
    load_propensities,
    save_propensities,
    uniform_baseline,
)


def dataset_with_popularities(pops):
    """One positive record per (item, user) up to each item's popularity."""
    users, items = [], []
    for i, pop in enumerate(pops):
        for u in range(pop):
            users.append(u)
            items.append(i)
    return InteractionDataset(
        num_users=max(pops),
        num_items=len(pops),
        user_ids=np.array(users),
        item_ids=np.array(items),
        labels=np.ones(len(users), dtype=np.uint8),
    )


def test_popularity_square_root_normalization():
    table = estimate_popularity(dataset_with_popularities([100, 25]))
    assert np.allclose(table.values, [1.0, 0.5])


def test_most_popular_item_gets_one():
    rng = np.random.default_rng(0)
    pops = rng.integers(1, 50, size=12).tolist()
    table = estimate_popularity(dataset_with_popularities(pops))
    assert table.values[int(np.argmax(pops))] == 1.0
    assert table.values.max() == 1.0


def test_popularity_hand_arithmetic():
    table = estimate_popularity(dataset_with_popularities([9, 4, 1]))
    assert np.allclose(table.values, [1.0, 2.0 / 3.0, 1.0 / 3.0])


def test_zero_popularity_items_warn_and_clip_to_floor():
    d = dataset_with_popularities([5, 3])
    padded = InteractionDataset(
        num_users=d.num_users,
        num_items=3,
        user_ids=d.user_ids,
        item_ids=d.item_ids,
        labels=d.labels,
    )
    with pytest.warns(RuntimeWarning, match="zero popularity"):
        table = estimate_popularity(padded)
    assert table.values[2] == 0.0
    assert clip(table).values[2] == 0.1


def test_clip_is_elementwise_floor():
    table = PropensityTable(np.array([0.01, 0.5, 1.0]), exponent=0.5)
    clipped = clip(table, 0.1)
    assert np.allclose(clipped.values, [0.1, 0.5, 1.0])
    assert clipped.floor == 0.1


def test_clip_validates_floor():
    table = uniform_baseline(3)
    with pytest.raises(ValueError):
        clip(table, 0.0)
    with pytest.raises(ValueError):
        clip(table, 1.0)


def test_uniform_baseline_all_ones_and_clip_noop():
    table = uniform_baseline(4)
    assert np.all(table.values == 1.0)
    assert np.array_equal(clip(table).values, table.values)


def test_uniform_weights_reduce_uerm_to_naive():
    from rankcal.calibrators import ParametricParams
    from rankcal.fitting import LossSpec, empirical_risk

    params = ParametricParams("platt", 0.0, 1.0, 0.0)
    rng = np.random.default_rng(1)
    s = rng.normal(size=100)
    y = rng.integers(0, 2, size=100)
    table = uniform_baseline(10)
    items = rng.integers(0, 10, size=100)
    uerm = empirical_risk(
        params, s, y, LossSpec("uerm", propensities=table.lookup(items))
    )
    naive = empirical_risk(params, s, y, LossSpec("naive"))
    assert uerm == naive


def test_monotone_in_popularity():
    rng = np.random.default_rng(2)
    pops = rng.integers(1, 40, size=15)
    table = estimate_popularity(dataset_with_popularities(pops.tolist()))
    order = np.argsort(pops)
    assert np.all(np.diff(table.values[order]) >= 0)


def test_scale_invariance_of_popularity():
    a = estimate_popularity(dataset_with_popularities([8, 4, 2]))
    b = estimate_popularity(dataset_with_popularities([16, 8, 4]))
    assert np.allclose(a.values, b.values)


def test_exponent_configurable():
    table = estimate_popularity(dataset_with_popularities([100, 25]), exponent=1.0)
    assert np.allclose(table.values, [1.0, 0.25])


def test_lookup_range_checked():
    table = uniform_baseline(3)
    with pytest.raises(IndexError):
        table.lookup([3])


def test_csv_round_trip(tmp_path):
    table = clip(estimate_popularity(dataset_with_popularities([9, 4, 1])), 0.4)
    path = tmp_path / "propensity.csv"
    save_propensities(table, path)
    loaded = load_propensities(path, exponent=table.exponent, floor=table.floor)
    assert np.array_equal(loaded.values, table.values)
