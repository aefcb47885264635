"""Tests for core types, configuration and frame validation"""

import numpy as np
import pytest

from memshrink.foundation import (
    AUTO, Anchor, ChannelsTooSmall, ConfigError, DimensionMismatch, EngineConfig,
    FeatureFrame, IouOutOfRange, MemorySnapshot, MemshrinkError, PoolingDivisibility,
    PoolingKind, Scope, ScoredToken, TemporalStrategy, TokenCoord, grid_coords, validate_frame,
)

from conftest import make_frame


# ============================================================================
# FRAME VALIDATION
# ============================================================================

def test_validate_frame_accepts_consistent_dims(default_config):
    frame = FeatureFrame(0, 4, 4, 2, np.arange(32))
    assert validate_frame(frame, default_config) is frame


def test_validate_frame_rejects_short_data(default_config):
    frame = FeatureFrame(0, 4, 4, 2, np.arange(31))
    with pytest.raises(DimensionMismatch):
        validate_frame(frame, default_config)


def test_validate_frame_rejects_indivisible_grid(default_config):
    frame = FeatureFrame(0, 5, 4, 1, np.zeros(20))
    with pytest.raises(PoolingDivisibility):
        validate_frame(frame, default_config)


@pytest.mark.parametrize("iou", [-0.1, 1.5])
def test_validate_frame_rejects_iou_outside_unit_interval(default_config, iou):
    frame = make_frame(1, np.zeros((2, 2, 1)), iou=iou)
    with pytest.raises(IouOutOfRange):
        validate_frame(frame, default_config)


def test_validate_frame_rejects_zero_dims(default_config):
    frame = FeatureFrame(0, 0, 4, 1, np.zeros(0))
    with pytest.raises(DimensionMismatch):
        validate_frame(frame, default_config)


def test_feature_frame_copies_and_freezes_data():
    data = np.ones(8, dtype=np.float32)
    frame = FeatureFrame(0, 2, 2, 2, data)
    data[0] = 5.0
    assert frame.data[0] == 1.0
    assert data.flags.writeable
    assert not frame.data.flags.writeable
    assert frame.grid.shape == (2, 2, 2)
    assert frame.dims == (2, 2, 2)


def test_errors_are_value_errors():
    assert issubclass(MemshrinkError, ValueError)
    assert issubclass(ChannelsTooSmall, MemshrinkError)
    assert issubclass(ConfigError, MemshrinkError)


# ============================================================================
# CONFIG
# ============================================================================

def test_default_config_is_headline_setting():
    config = EngineConfig.load_defaults()
    assert (config.pool_dh, config.pool_dw) == (2, 2)
    assert config.pooling_kind == PoolingKind.AVERAGE
    assert config.bank_capacity == 7
    assert config.selection_budget == AUTO
    assert config.anchor == Anchor.PREVIOUS
    assert config.scope == Scope.GLOBAL
    assert config.temporal_strategy == TemporalStrategy.TOPN_SELECT
    assert config.iou_threshold == 0.5
    assert config.absence_filter and config.iou_gate and config.position_encoding
    assert config.config_errors() == []


def test_config_coerces_strings_to_enums():
    config = EngineConfig(pooling_kind="max", anchor="gt", scope="per_frame",
                          temporal_strategy="no_tmc", selection_budget="AUTO")
    assert config.pooling_kind is PoolingKind.MAX
    assert config.anchor is Anchor.GT
    assert config.scope is Scope.PER_FRAME
    assert config.temporal_strategy is TemporalStrategy.NO_TMC
    assert config.selection_budget == AUTO


@pytest.mark.parametrize("overrides, fragment", [
    ({"pool_dh": 0}, "pool_dh"),
    ({"bank_capacity": -1}, "bank_capacity"),
    ({"selection_budget": 0}, "selection_budget"),
    ({"selection_budget": "lots"}, "selection_budget"),
    ({"iou_threshold": 1.5}, "iou_threshold"),
    ({"anchor": "sideways"}, "anchor"),
    ({"temporal_strategy": "everything"}, "temporal_strategy"),
])
def test_config_errors_name_the_bad_field(overrides, fragment):
    config = EngineConfig(**overrides)
    errors = config.config_errors()
    assert any(fragment in e for e in errors)
    with pytest.raises(ConfigError):
        config.validate()


def test_config_resolves_auto_budget():
    config = EngineConfig.load_defaults()
    assert config.resolve_budget(32, 32) == 1024
    assert config.resolved(64, 64).selection_budget == 1024
    assert EngineConfig(selection_budget=10).resolve_budget(32, 32) == 10


def test_config_resolved_checks_divisibility():
    with pytest.raises(PoolingDivisibility):
        EngineConfig.load_defaults().resolved(63, 64)


def test_config_dict_round_trip():
    config = EngineConfig(anchor="gt", scope="per_frame", selection_budget=12, iou_gate=False)
    data = config.to_dict()
    assert data["anchor"] == "gt"
    assert data["scope"] == "per_frame"
    assert data["pooling_kind"] == "average"
    assert EngineConfig.from_dict(data) == config


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"pool_size": 2})


# ============================================================================
# TOKENS AND SNAPSHOTS
# ============================================================================

def test_grid_coords_are_row_major():
    coords = grid_coords(3, 2, 3)
    assert coords.tolist() == [
        [3, 0, 0], [3, 0, 1], [3, 0, 2],
        [3, 1, 0], [3, 1, 1], [3, 1, 2],
    ]


def test_scored_token_rejects_similarity_outside_range():
    with pytest.raises(ValueError):
        ScoredToken(TokenCoord(1, 0, 0), np.zeros(2), 1.5)
    ScoredToken(TokenCoord(1, 0, 0), np.zeros(2), -1.0)


def test_memory_snapshot_views():
    snapshot = MemorySnapshot(
        gt_coords=grid_coords(0, 1, 2),
        gt_features=np.ones((2, 3)),
        selected_coords=[[4, 0, 1]],
        selected_features=np.full((1, 3), 2.0),
        channels=3,
        frame_count=2,
        pooled_grid=(1, 2),
    )
    assert snapshot.total_tokens == 3
    assert [coord for coord, _ in snapshot.gt_tokens] == [TokenCoord(0, 0, 0), TokenCoord(0, 0, 1)]
    (coord, vec), = snapshot.selected_tokens
    assert coord == TokenCoord(4, 0, 1)
    assert vec.tolist() == [2.0, 2.0, 2.0]
    assert snapshot.all_coords().shape == (3, 3)
    assert snapshot.all_features().dtype == np.float32
    assert not snapshot.gt_features.flags.writeable


def test_empty_snapshot_has_no_tokens():
    snapshot = MemorySnapshot.empty(4)
    assert snapshot.total_tokens == 0
    assert snapshot.all_features().shape == (0, 4)
