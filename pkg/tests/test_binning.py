import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from vflshap.binning import (
    CATEGORICAL,
    BinningSpec,
    EqualWidthBinner,
    build_feature_groups,
    make_bins,
)
from vflshap.errors import InputError


def test_one_to_twenty_in_five_bins():
    bins = make_bins(list(range(1, 21)), BinningSpec(5))
    expected = [v for v in range(5) for _ in range(4)]
    assert bins == expected


def test_floor_formula_with_max_clamp():
    assert make_bins([0.0, 2.5, 5.0, 7.5, 10.0], BinningSpec(4)) == [0, 1, 2, 3, 3]


def test_constant_column_single_bin():
    assert make_bins([3.3] * 6, BinningSpec(5)) == [0] * 6


def test_categorical_passthrough_ranks():
    spec = BinningSpec(strategy=CATEGORICAL)
    assert make_bins([2, 0, 2, 1], spec) == [2, 0, 2, 1]
    assert make_bins([10.0, -1.0, 10.0], spec) == [1, 0, 1]
    assert make_bins(["b", "a", "c"], spec) == [1, 0, 2]


@pytest.mark.parametrize("values", [[], [1.0, float("nan")], [float("inf"), 1.0], ["x", 1.0]])
def test_bad_values_rejected(values):
    with pytest.raises(InputError):
        make_bins(values, BinningSpec(3))


@pytest.mark.parametrize("kwargs", [{"bin_count": 0}, {"bin_count": 2.5}, {"strategy": "quantile"}])
def test_bad_spec(kwargs):
    with pytest.raises(InputError):
        BinningSpec(**kwargs)


@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60),
    st.integers(1, 12),
)
def test_equal_width_monotone_and_in_range(values, k):
    bins = make_bins(values, BinningSpec(k))
    assert all(0 <= b < k for b in bins)
    pairs = sorted(zip(values, bins))
    assert all(b1 <= b2 for (_, b1), (_, b2) in zip(pairs, pairs[1:]))
    assert make_bins(values, BinningSpec(k)) == bins


def test_build_feature_groups():
    fg = build_feature_groups("p1.f1", "p1", ["e1", "e2", "e3"], [0, 0, 1])
    assert fg.groups == [(0, frozenset({"e1", "e2"})), (1, frozenset({"e3"}))]
    single = build_feature_groups("p1.f2", "p1", ["e1", "e2"], [4, 4])
    assert single.groups == [(4, frozenset({"e1", "e2"}))]
    with pytest.raises(InputError):
        build_feature_groups("x", "p1", ["e1", "e2"], [0])
    with pytest.raises(InputError):
        build_feature_groups("x", "p1", ["e1", "e1"], [0, 1])


def test_wine_groups_partition_rows():
    from sklearn.datasets import load_wine

    data = load_wine().data
    ids = [f"{i:064x}" for i in range(len(data))]
    for j in range(data.shape[1]):
        fg = build_feature_groups(f"f{j}", "p", ids, make_bins(data[:, j].tolist(), BinningSpec(5)))
        sizes = [len(m) for _, m in fg.groups]
        assert sum(sizes) == 178
        assert fg.ids() == set(ids)


def test_wire_roundtrip():
    fg = build_feature_groups("p1.f1", "p1", ["b", "a", "c"], [1, 0, 1])
    back = type(fg).from_wire(fg.to_wire(), "p1")
    assert back == fg
    assert fg.to_wire()["groups"][1]["members"] == ["b", "c"]


def test_equal_width_binner_matches_make_bins():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    X[:, 2] = 1.0
    binner = EqualWidthBinner(n_bins=4).fit(X)
    out = binner.transform(X)
    for j in range(4):
        assert out[:, j].tolist() == make_bins(X[:, j].tolist(), BinningSpec(4))
    assert len(binner.bin_edges()) == 4
    assert binner.get_params() == {"n_bins": 4}
    assert clone(binner).n_bins == 4


def test_equal_width_binner_clamps_unseen_range():
    binner = EqualWidthBinner(n_bins=2).fit([[0.0], [10.0]])
    assert binner.transform([[-5.0], [4.0], [6.0], [99.0]]).ravel().tolist() == [0, 0, 1, 1]
    with pytest.raises(ValueError):
        binner.transform([[1.0, 2.0]])
