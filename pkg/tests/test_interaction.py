import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bipkit.errors import InvalidTrajectoryError, LayoutError, ParseError
from bipkit.interaction import (
    DofLayout,
    Interaction,
    PartialObservation,
    check_same_layout,
    format_interaction,
    load_interaction,
    parse_interaction,
    phase_grid,
    phase_of,
    save_interaction,
)


def test_phase_of_endpoints_and_midpoint():
    assert phase_of(0, 100) == 0.0
    assert phase_of(99, 100) == 1.0
    assert phase_of(50, 101) == 0.5


def test_phase_of_rejects_short_trajectories():
    with pytest.raises(InvalidTrajectoryError):
        phase_of(0, 1)
    with pytest.raises(InvalidTrajectoryError):
        phase_grid(1)


def test_phase_grid_is_uniform():
    grid = phase_grid(11)
    np.testing.assert_allclose(np.diff(grid), 0.1)
    assert grid[0] == 0.0 and grid[-1] == 1.0


def test_layout_validation():
    with pytest.raises(LayoutError):
        DofLayout(0, 2, ["a", "b"], ["u", "u"])
    with pytest.raises(LayoutError):
        DofLayout(1, 1, ["a"], ["u", "u"])
    with pytest.raises(LayoutError):
        DofLayout(1, 1, ["a,b", "c"], ["u", "u"])


def test_layout_slices_and_mask():
    layout = DofLayout.default(2, 3)
    assert layout.dof_count == 5
    assert layout.observed == slice(0, 2)
    assert layout.controlled == slice(2, 5)
    np.testing.assert_array_equal(layout.observed_mask(), [True, True, False, False, False])


def test_interaction_validation():
    layout = DofLayout.default(1, 1)
    with pytest.raises(InvalidTrajectoryError):
        Interaction(np.zeros((2, 1)), 30.0, layout)
    with pytest.raises(InvalidTrajectoryError):
        Interaction(np.array([[0.0, np.nan], [0.0, 0.0]]), 30.0, layout)
    with pytest.raises(InvalidTrajectoryError):
        Interaction(np.zeros((2, 5)), 0.0, layout)
    with pytest.raises(LayoutError):
        Interaction(np.zeros((3, 5)), 30.0, layout)


def test_interaction_data_is_read_only():
    it = Interaction(np.zeros((2, 4)), 30.0, DofLayout.default(1, 1))
    with pytest.raises(ValueError):
        it.data[0, 0] = 1.0


def test_interaction_accessors():
    data = np.arange(12.0).reshape(3, 4)
    it = Interaction(data, 20.0, DofLayout.default(1, 2))
    assert it.length == 4
    assert it.duration == pytest.approx(0.2)
    np.testing.assert_array_equal(it.observed, data[:1])
    np.testing.assert_array_equal(it.controlled, data[1:])


def test_partial_observation_default_mask_follows_finiteness():
    obs = PartialObservation(np.array([1.0, np.nan, 2.0]))
    np.testing.assert_array_equal(obs.mask, [True, False, True])
    with pytest.raises(LayoutError):
        PartialObservation(np.zeros(3), np.array([True, False]))


def test_file_format_layout():
    data = np.array([[0.5, 0.25], [1.0, 2.0]])
    it = Interaction(data, 30.0, DofLayout(1, 1, ["x", "p"], ["m", "mPa"]), executed=True)
    text = format_interaction(it)
    assert text.splitlines() == ["1 1 2 30.0 executed=true", "x,p", "m,mPa", "0.5,1.0", "0.25,2.0"]


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(
    data=st.integers(2, 4).flatmap(
        lambda d: st.integers(2, 12).flatmap(lambda t: arrays(float, (d, t), elements=finite))
    ),
    executed=st.booleans(),
)
def test_text_round_trip_is_exact(data, executed):
    it = Interaction(data, 30.0, DofLayout.default(1, data.shape[0] - 1), executed=executed)
    assert parse_interaction(format_interaction(it)) == it


def test_save_and_load(tmp_path):
    it = Interaction(np.random.default_rng(0).normal(size=(3, 7)), 30.0, DofLayout.default(2, 1))
    path = tmp_path / "run.txt"
    save_interaction(it, path)
    assert load_interaction(path) == it


@pytest.mark.parametrize(
    "text, line",
    [
        ("1 1 2\nx,p\nm,m\n0,0\n0,0\n", 1),
        ("1 1 2 30 bogus=1\nx,p\nm,m\n0,0\n0,0\n", 1),
        ("1 1 2 30\nx\nm,m\n0,0\n0,0\n", 2),
        ("1 1 2 30\nx,p\nm\n0,0\n0,0\n", 3),
        ("1 1 2 30\nx,p\nm,m\n0,0\n0,abc\n", 5),
        ("1 1 2 30\nx,p\nm,m\n0,0\n0\n", 5),
        ("1 1 2 30\nx,p\nm,m\n0,0\n0,inf\n", 5),
        ("1 1 3 30\nx,p\nm,m\n0,0\n0,0\n", 6),
    ],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_interaction(text, path="f.txt")
    assert info.value.line == line
    assert f"f.txt:{line}" in str(info.value)


def test_check_same_layout_names_mismatch():
    a = Interaction(np.zeros((2, 3)), 30.0, DofLayout.default(1, 1))
    b = Interaction(np.zeros((3, 3)), 30.0, DofLayout.default(1, 2))
    assert check_same_layout([a, a]) == a.layout
    with pytest.raises(LayoutError, match="interaction 1"):
        check_same_layout([a, b])
