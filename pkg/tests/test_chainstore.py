import numpy as np
import pytest
from scipy import stats

from ssgmcmc.chainstore import MAX_CSV_PARAMS, ChainStore, EmptyStoreError
from ssgmcmc.partition import partition_full, partition_modulo


def _filled(T, **kw):
    store = ChainStore([0.0], **kw)
    for t in range(1, T + 1):
        store.append([float(t)], step=t)
    return store


def test_unbounded_keeps_everything():
    store = _filled(50, capacity=None)
    assert len(store) == 51 and store.total == 51
    np.testing.assert_array_equal(store.series(0), np.arange(51.0))


def test_stride_keeps_every_other_append():
    store = _filled(10, capacity=None, stride=2)
    np.testing.assert_array_equal(store.series(0), [0, 2, 4, 6, 8, 10])


def test_window_keeps_most_recent_in_order():
    store = _filled(25, capacity=7)
    assert len(store) == 7
    np.testing.assert_array_equal(store.series(0), np.arange(19.0, 26.0))
    np.testing.assert_array_equal(store.steps(), np.arange(19, 26))
    assert store.latest()[0] == 25.0


def test_append_rejects_wrong_length():
    store = ChainStore([0.0, 0.0])
    with pytest.raises(ValueError):
        store.append([1.0])


def test_reservoir_inclusion_is_uniform():
    # each of `total` appends should survive with probability c / total
    c, T, trials = 5, 19, 10_000
    rng = np.random.default_rng(0)
    counts = np.zeros(T + 1)
    for _ in range(trials):
        store = _filled(T, capacity=c, mode="reservoir", rng=rng)
        counts[store.rows[:, 0].astype(int)] += 1
    expect = np.full(T + 1, trials * c / (T + 1))
    assert stats.chisquare(counts, expect).pvalue > 0.01
    assert len(store) == c


def test_reservoir_has_no_series():
    store = _filled(5, capacity=3, mode="reservoir", rng=1)
    with pytest.raises(ValueError):
        store.series(0)


def test_single_sample_store_returns_it(rng):
    store = ChainStore([1.5, -2.0, 3.0])
    np.testing.assert_array_equal(store.sample_groupwise(partition_full(3), rng), [1.5, -2.0, 3.0])
    np.testing.assert_array_equal(store.sample_full(rng), [1.5, -2.0, 3.0])


def test_one_group_returns_whole_stored_samples(rng):
    store = ChainStore(np.zeros(4), capacity=None)
    for k in range(1, 6):
        store.append(np.full(4, float(k)))
    for _ in range(50):
        draw = store.sample_groupwise(partition_modulo(4, 1), rng)
        assert np.ptp(draw) == 0


def test_groupwise_outcomes_uniform_and_independent(rng):
    store = ChainStore([0.0, 0.0], capacity=None)
    store.append([1.0, 1.0])
    n = 10_000
    draws = np.array([store.sample_groupwise(partition_full(2), rng) for _ in range(n)])
    codes = (2 * draws[:, 0] + draws[:, 1]).astype(int)
    counts = np.bincount(codes, minlength=4)
    assert stats.chisquare(counts, np.full(4, n / 4)).pvalue > 0.01
    # independence of the two groups' source indices
    table = np.array([[np.sum((draws[:, 0] == a) & (draws[:, 1] == b)) for b in (0, 1)] for a in (0, 1)])
    assert stats.chi2_contingency(table).pvalue > 0.01


def test_groupwise_marginals_uniform_over_history(rng):
    store = _filled(9, capacity=None)
    spec = partition_full(1)
    idx = np.array([store.sample_groupwise(spec, rng, return_index=True)[1][0] for _ in range(10_000)])
    counts = np.bincount(idx, minlength=10)
    assert stats.chisquare(counts).pvalue > 0.01


def test_sample_full_uniform(rng):
    store = _filled(4, capacity=None)
    draws = np.array([store.sample_full(rng)[0] for _ in range(10_000)]).astype(int)
    assert stats.chisquare(np.bincount(draws, minlength=5)).pvalue > 0.01
    assert np.isfinite(draws).all()


def test_series_contract():
    store = ChainStore([1.0], capacity=None)
    store.append([2.0])
    store.append([3.0])
    np.testing.assert_array_equal(store.series(0), [1, 2, 3])
    with pytest.raises(IndexError):
        store.series(1)
    const = ChainStore([4.0], capacity=None)
    for _ in range(5):
        const.append([4.0])
    assert np.all(const.series(0) == 4.0) and const.series(0).size == 6


def test_subset_and_empty(rng):
    store = _filled(10, capacity=None)
    sub = store.subset(6)
    np.testing.assert_array_equal(sub.series(0), [6, 7, 8, 9, 10])
    with pytest.raises(EmptyStoreError):
        store.subset(11)


def test_csv_round_trip_is_exact(tmp_path, rng):
    store = ChainStore(rng.standard_normal(3), capacity=None)
    for t in range(1, 5):
        store.append(rng.standard_normal(3), step=t)
    path = store.to_csv(tmp_path / "chain.csv")
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back[:, 1:], store.matrix())
    np.testing.assert_array_equal(back[:, 0], np.arange(5))


def test_csv_guard_writes_summary(tmp_path, rng):
    P = MAX_CSV_PARAMS + 1
    store = ChainStore(np.zeros(P), capacity=None)
    for _ in range(9):
        store.append(rng.standard_normal(P))
    path = store.to_csv(tmp_path / "chain.csv")
    assert path.name == "chain_summary.csv"
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "coordinate,mean,variance,iac" and len(lines) == P + 1
