import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imdpkit.gridding import (
    AVOID,
    OTHER,
    TARGET,
    Grid,
    GridError,
    Specification,
    build_grid,
    build_input_grid,
    label_states,
)
from imdpkit.models import Box, make_benchmark


def test_inclusive_lattice_counts():
    g = build_grid([-10, -10], [10, 10], [0.5, 0.5])
    assert g.points_per_dim == (41, 41)
    assert g.n_states == 1681
    np.testing.assert_allclose(g.axis(0)[[0, -1]], [-10, 10])


def test_row_major_numbering():
    g = build_grid([0, 0], [2, 3], [1, 1])
    assert tuple(g.strides) == (4, 1)
    np.testing.assert_allclose(g.point_of(5), [1, 1])
    np.testing.assert_array_equal(g.multi_index(np.arange(4)), [[0, 0], [0, 1], [0, 2], [0, 3]])


@pytest.mark.parametrize(
    "lower, upper, eta, msg",
    [
        ([0], [1], [0.3], "multiple"),
        ([0], [1], [2.0], "exceeds"),
        ([0], [1], [0.0], "positive"),
        ([1], [0], [0.5], "below"),
        ([0, 0], [1], [0.5], "same length"),
    ],
)
def test_grid_errors(lower, upper, eta, msg):
    with pytest.raises(GridError, match=msg):
        build_grid(lower, upper, eta)


def test_float_spacing_snaps():
    # 6.8 / 0.4 is 16.999999999999996 in floating point
    assert build_grid([-3.4], [3.4], [0.4]).points_per_dim == (18,)


def test_degenerate_input_dimension():
    u = build_input_grid([0, 0], [7, 30], [1, 30])
    assert u.shape == (16, 2)
    assert build_input_grid([0.0], [0.0], [1.0]).tolist() == [[0.0]]


def test_from_counts_uses_cell_centres():
    g = Grid.from_counts([-10, -10], [10, 10], [21, 21])
    assert g.n_states == 441
    np.testing.assert_allclose(g.cell_lower, [-10, -10])
    np.testing.assert_allclose(g.cell_upper, [10, 10])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10.5, 10.5), min_size=2, max_size=2))
def test_index_of_finds_the_containing_cell(p):
    g = build_grid([-10, -10], [10, 10], [1.0, 1.0])
    i = int(g.index_of(p)[0])
    lo, hi = g.cells(i)
    assert np.all(lo <= p) and np.all(p <= hi)


def test_index_of_outside():
    g = build_grid([0], [1], [0.5])
    assert g.index_of([[1.3], [-0.3]]).tolist() == [-1, -1]
    assert g.index_of([[1.25]]).tolist() == [2]


def test_labels_avoid_wins_on_overlap():
    g = build_grid([0], [4], [1])
    spec = Specification("reach-avoid", target=(Box([1], [3]),), avoid=(Box([3], [4]),))
    assert label_states(g, spec).tags.tolist() == [OTHER, TARGET, TARGET, AVOID, AVOID]


@pytest.mark.parametrize(
    "name, variant, states, inputs, targets",
    [
        ("as-grid-only", None, 2541, 16, 81),
        ("ic2", None, 1681, 5, 1089),
        ("patrol-robot", "fine", 1681, 441, None),
        ("patrol-robot", "coarse", 441, 121, None),
    ],
)
def test_benchmark_grid_counts(name, variant, states, inputs, targets):
    b = make_benchmark(name, variant)
    g = b.grid()
    assert g.n_states == states
    assert len(b.inputs()) == inputs
    if targets is not None:
        assert label_states(g, b.spec).n_target == targets


def test_specification_checks():
    with pytest.raises(ValueError):
        Specification("liveness")
    with pytest.raises(ValueError):
        Specification("reach-avoid")
    with pytest.raises(ValueError):
        Specification("safety", target=(Box([0], [1]),))
    with pytest.raises(ValueError):
        Specification("reach", horizon=-1)


def test_specification_round_trip():
    s = Specification("reach-avoid", target=(Box([0, 0], [1, 1]),), avoid=(Box([2, 2], [3, 3]),), horizon=4)
    assert Specification.from_dict(s.to_dict()) == s


def test_index_point_bijection_small_grids():
    for eta in ([1.0, 0.5], [0.25, 1.0]):
        g = build_grid([0, -1], [2, 1], eta)
        i = np.arange(g.n_states)
        np.testing.assert_array_equal(g.index_of(g.point_of(i)), i)


def test_label_counts_ignore_region_order():
    g = build_grid([-10, -10], [10, 10], [0.5, 0.5])
    r = [Box([-8, -8], [0, 0]), Box([-1, -1], [8, 8]), Box([3, -9], [9, -2])]
    a = label_states(g, Specification("reach", target=tuple(r)))
    b = label_states(g, Specification("reach", target=tuple(reversed(r))))
    np.testing.assert_array_equal(a.tags, b.tags)


def test_whole_cell_regions_agree_with_cell_overlap():
    g = build_grid([0, 0], [4, 4], [1, 1])
    # union of whole cells around points 1..2 x 2..3
    region = Box([0.5, 1.5], [2.5, 3.5])
    tags = label_states(g, Specification("reach", target=(region,))).tags
    lo, hi = g.cells()
    inside = np.all((lo >= region.lower - 1e-12) & (hi <= region.upper + 1e-12), axis=1)
    np.testing.assert_array_equal(tags == TARGET, inside)


def test_whole_domain_target():
    g = build_grid([0, 0], [3, 3], [1, 1])
    assert label_states(g, Specification("reach", target=(Box([0, 0], [3, 3]),))).n_target == g.n_states


def test_small_lattices():
    assert build_grid([0], [1], [1]).axis(0).tolist() == [0.0, 1.0]
    assert len(build_input_grid([-1], [1], [0.5])) == 5
    assert len(build_input_grid([-1, -1], [1, 1], [0.1, 0.1])) == 441
