from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbsdelab.grid_paths import (
    FVPath,
    RegulatedPath,
    TimeGrid,
    cadlag_envelope,
    jordan_decompose,
    left_jump,
    right_jump,
    split_cadlag_jump_parts,
)

dyadic = st.integers(-64, 64).map(lambda i: i / 8.0)


def test_grid_times_and_dt():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    assert np.allclose(g.times, [0, 0.5, 1, 1.5, 2])


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_grid_monotonicity_condition():
    TimeGrid(1.0, 10).check_monotonicity(5.0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 10).check_monotonicity(10.0)


def test_one_sided_jumps():
    X = RegulatedPath([0.0, 1.0, 1.0], [0.5, 1.0, 1.0])
    assert right_jump(X, 0) == 0.5
    assert left_jump(X, 1) == 0.5
    assert right_jump(X, 2) == 0.0
    assert left_jump(X, 0) == 0.0
    with pytest.raises(IndexError):
        right_jump(X, 3)
    with pytest.raises(IndexError):
        left_jump(X, -1)


def test_post_value_at_horizon_must_match():
    with pytest.raises(ValueError):
        RegulatedPath([0.0, 1.0], [0.0, 2.0])


def test_fv_path_starts_at_zero():
    with pytest.raises(ValueError):
        FVPath([1.0, 1.0])


def test_cadlag_envelope_has_no_right_jumps():
    X = RegulatedPath([0.0, 1.0, 3.0], [2.0, 1.5, 3.0])
    C = cadlag_envelope(X)
    assert np.all(C.right_jumps() == 0)
    assert np.array_equal(C.value, X.post)


@given(st.lists(dyadic, min_size=3, max_size=9), st.lists(dyadic, min_size=3, max_size=9))
def test_jordan_is_minimal_and_exact(flow, jump):
    n = min(len(flow), len(jump) - 1)
    flow = np.array(flow[:n])
    jump = np.array(jump[: n + 1])
    jump[-1] = 0.0
    R = FVPath.from_increments(flow, jump)
    plus, minus = jordan_decompose(R)
    assert plus.is_nondecreasing() and minus.is_nondecreasing()
    assert np.array_equal((plus - minus).value, R.value)
    assert np.array_equal((plus - minus).post, R.post)
    assert plus.total_variation() + minus.total_variation() == R.total_variation()
    # slot-wise minimal: never both sides in the same slot
    assert np.all(plus.flow_increments() * minus.flow_increments() == 0)
    assert np.all(plus.right_jumps() * minus.right_jumps() == 0)


@settings(max_examples=50)
@given(st.lists(dyadic, min_size=4, max_size=9))
def test_split_cadlag_jump_parts(vals):
    rng = np.random.default_rng(len(vals))
    n = len(vals) - 1
    flow = np.array(vals[:n])
    jump = np.append(np.round(rng.normal(size=n) * 8) / 8, 0.0)
    V = FVPath.from_increments(flow, jump)
    vstar, vd = split_cadlag_jump_parts(V)
    assert np.all(vstar.right_jumps() == 0)
    assert np.all(vd.flow_increments() == 0)
    assert vstar + vd == V
