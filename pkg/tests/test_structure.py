"""Tests for spatial pooling"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from memshrink.foundation import EngineConfig, PoolingDivisibility, PoolingKind
from memshrink.oracles import pool_oracle
from memshrink.structure import pool_frame, pool_grid, pooled_token_count

from conftest import make_frame

SQUARE = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)


def test_average_pooling_of_2x2_frame():
    pooled = pool_frame(make_frame(0, SQUARE), EngineConfig())
    assert pooled.dims == (1, 1, 1)
    assert pooled.tokens[0, 0, 0] == 2.5


def test_max_pooling_of_2x2_frame():
    pooled = pool_frame(make_frame(0, SQUARE), EngineConfig(pooling_kind="max"))
    assert pooled.tokens[0, 0, 0] == 4.0


def test_pooling_matches_loop_oracle_on_spot_checks(rng):
    grid = rng.standard_normal((64, 64, 8)).astype(np.float32)
    pooled = pool_frame(make_frame(0, grid), EngineConfig())
    assert pooled.tokens.shape == (32, 32, 8)
    expected = pool_oracle(grid, 2, 2, PoolingKind.AVERAGE)
    for _ in range(20):
        r, c, ch = rng.integers(0, 32), rng.integers(0, 32), rng.integers(0, 8)
        got, want = float(pooled.tokens[r, c, ch]), expected[r, c, ch]
        assert abs(got - want) <= 1e-6 * max(abs(want), 1e-6)


def test_pool_frame_carries_gt_flag_and_index():
    pooled = pool_frame(make_frame(5, np.zeros((4, 4, 2)), prompt=True), EngineConfig())
    assert pooled.is_gt
    assert pooled.frame_index == 5
    assert pool_frame(make_frame(6, np.zeros((4, 4, 2))), EngineConfig()).is_gt is False


def test_pool_frame_rejects_indivisible_grid():
    with pytest.raises(PoolingDivisibility):
        pool_frame(make_frame(0, np.zeros((6, 5, 1))), EngineConfig())


@pytest.mark.parametrize("h, w, expected", [(64, 64, 1024), (2, 2, 1), (6, 4, 6)])
def test_pooled_token_count(h, w, expected):
    assert pooled_token_count(h, w, EngineConfig()) == expected


def test_pooled_token_count_rejects_indivisible_grid():
    with pytest.raises(PoolingDivisibility):
        pooled_token_count(5, 4, EngineConfig())


def test_non_square_window():
    grid = np.arange(24, dtype=np.float32).reshape(2, 6, 2)
    pooled = pool_grid(grid, 1, 3, PoolingKind.AVERAGE)
    assert pooled.shape == (2, 2, 2)
    np.testing.assert_allclose(pooled, pool_oracle(grid, 1, 3, PoolingKind.AVERAGE), rtol=1e-6)


# ============================================================================
# PROPERTIES
# ============================================================================

windows = st.tuples(st.integers(1, 4), st.integers(1, 4))


@st.composite
def pooled_inputs(draw):
    dh, dw = draw(windows)
    rows, cols, c = draw(st.integers(1, 4)), draw(st.integers(1, 4)), draw(st.integers(1, 3))
    grid = draw(arrays(np.float32, (rows * dh, cols * dw, c),
                       elements=st.floats(-100, 100, width=32)))
    return grid, dh, dw


@given(pooled_inputs())
@settings(max_examples=60, deadline=None)
def test_average_pooling_preserves_mean(inputs):
    grid, dh, dw = inputs
    pooled = pool_grid(grid, dh, dw, PoolingKind.AVERAGE)
    assert np.isclose(pooled.astype(np.float64).mean(), grid.astype(np.float64).mean(),
                      rtol=1e-5, atol=1e-4)


@given(pooled_inputs(), st.floats(-50, 50, width=32))
@settings(max_examples=60, deadline=None)
def test_constant_frames_pool_to_the_constant(inputs, value):
    grid, dh, dw = inputs
    constant = np.full_like(grid, value)
    for kind in PoolingKind:
        assert np.all(pool_grid(constant, dh, dw, kind) == np.float32(value))


@given(pooled_inputs())
@settings(max_examples=60, deadline=None)
def test_max_pooling_bounds_average(inputs):
    grid, dh, dw = inputs
    avg = pool_grid(grid, dh, dw, PoolingKind.AVERAGE)
    mx = pool_grid(grid, dh, dw, PoolingKind.MAX)
    assert np.all(mx >= avg - 1e-4)


def test_max_pooling_keeps_the_global_maximum(rng):
    grid = rng.standard_normal((8, 12, 3)).astype(np.float32)
    pooled = pool_grid(grid, 2, 3, PoolingKind.MAX)
    assert np.array_equal(pooled.max(axis=(0, 1)), grid.max(axis=(0, 1)))


@pytest.mark.parametrize("kind", list(PoolingKind))
def test_unit_window_is_identity(rng, kind):
    grid = rng.standard_normal((5, 7, 4)).astype(np.float32)
    assert np.array_equal(pool_grid(grid, 1, 1, kind), grid)
    config = EngineConfig(pool_dh=1, pool_dw=1, pooling_kind=kind)
    pooled = pool_frame(make_frame(3, grid), config)
    assert pooled.dims == (5, 7, 4)
    assert np.array_equal(pooled.tokens, grid)
