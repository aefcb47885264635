"""
Memshrink - Foundation Layer
============================

Layer 1: Foundation (Deterministic)
Defines the shared data model: feature frames, pooled frames, token
provenance, memory snapshots and the engine configuration, plus the
error hierarchy and frame validation used by every other layer.

All value types are immutable after construction.
"""

from dataclasses import dataclass, replace, asdict
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Tuple, Union

import numpy as np


FEATURE_DTYPE = np.float32
SIMILARITY_EPS = 1e-9


# ============================================================================
# ERRORS
# ============================================================================

class MemshrinkError(ValueError):
    """Base class for every error raised by the engine."""


class DimensionMismatch(MemshrinkError):
    """Frame data length differs from h*w*c."""


class PoolingDivisibility(MemshrinkError):
    """Pool window does not divide the frame grid."""


class IouOutOfRange(MemshrinkError):
    """Predicted IoU outside [0, 1]."""


class ShapeMismatch(MemshrinkError):
    """Pooled frames disagree on (h, w, c)."""


class EmptyMotionSet(MemshrinkError):
    """Scoring requested with no motion frames."""


class MissingGtFrame(MemshrinkError):
    """Strategy needs the GT frame but the bank has none."""


class GtAlreadySet(MemshrinkError):
    """A second prompted frame was offered to the bank."""


class DimsMismatch(MemshrinkError):
    """Frame dims differ from the dims pinned by the first frame."""


class OutOfOrderFrame(MemshrinkError):
    """Frame index does not increase along the stream."""


class ChannelsTooSmall(MemshrinkError):
    """Position encoding needs an even channel count of at least 6."""


class EmptyMemory(MemshrinkError):
    """Cross-attention over a memory with no tokens."""


class ChannelMismatch(MemshrinkError):
    """Query and memory disagree on channel count."""


class BlobTooLarge(MemshrinkError):
    """Scenario blob does not fit the motion grid."""


class ConfigError(MemshrinkError):
    """EngineConfig failed validation."""


class ScenarioError(MemshrinkError):
    """Scenario description failed validation."""


class StreamFormatError(MemshrinkError):
    """Binary stream file is malformed."""


# ============================================================================
# ENUMS
# ============================================================================

class PoolingKind(str, Enum):
    AVERAGE = "average"
    MAX = "max"


class Anchor(str, Enum):
    PREVIOUS = "previous"
    GT = "gt"


class Scope(str, Enum):
    GLOBAL = "global"
    PER_FRAME = "per_frame"


class TemporalStrategy(str, Enum):
    TOPN_SELECT = "topn_select"
    NO_TMC = "no_tmc"
    GT_PLUS_LAST = "gt_plus_last"
    FIRST_PLUS_LAST = "first_plus_last"
    MOVING_AVERAGE = "moving_average"
    RETAIN_GT_FIRST_LAST = "retain_gt_first_last"


AUTO = "auto"

Budget = Union[int, str]


# ============================================================================
# FRAME DATA STRUCTURES
# ============================================================================

@dataclass(frozen=True, eq=False)
class FeatureFrame:
    """One frame's dense (h, w, c) feature grid plus quality signals"""
    frame_index: int
    height: int
    width: int
    channels: int
    data: np.ndarray  # flat or (h, w, c), float32, row-major
    predicted_iou: float = 1.0
    object_present: bool = True
    is_prompt: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=FEATURE_DTYPE)
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)

    @property
    def grid(self) -> np.ndarray:
        """Feature data as an (h, w, c) view. Requires a validated frame."""
        return self.data.reshape(self.height, self.width, self.channels)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.height, self.width, self.channels


@dataclass(frozen=True, eq=False)
class CompressedFrame:
    """A pooled (h^, w^, c) token grid"""
    frame_index: int
    pooled_height: int
    pooled_width: int
    channels: int
    tokens: np.ndarray  # (h^, w^, c)
    is_gt: bool = False

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=FEATURE_DTYPE).reshape(
            self.pooled_height, self.pooled_width, self.channels
        )
        tokens.setflags(write=False)
        object.__setattr__(self, 'tokens', tokens)

    @property
    def token_count(self) -> int:
        return self.pooled_height * self.pooled_width

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.pooled_height, self.pooled_width, self.channels

    def coords(self) -> np.ndarray:
        """(h^*w^, 3) array of (frame_index, row, col) in row-major order"""
        return grid_coords(self.frame_index, self.pooled_height, self.pooled_width)

    def flat_tokens(self) -> np.ndarray:
        return self.tokens.reshape(-1, self.channels)


class TokenCoord(NamedTuple):
    """Provenance of a token on the pooled grid"""
    frame_index: int
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class ScoredToken:
    """A candidate motion token and its similarity to its anchor token"""
    coord: TokenCoord
    features: np.ndarray
    similarity: float

    def __post_init__(self):
        if not (-1.0 - SIMILARITY_EPS <= self.similarity <= 1.0 + SIMILARITY_EPS):
            raise ValueError(f"similarity {self.similarity} outside [-1, 1]")


def grid_coords(frame_index: int, rows: int, cols: int) -> np.ndarray:
    """Row-major (rows*cols, 3) coordinate block for one frame"""
    r, c = np.divmod(np.arange(rows * cols, dtype=np.int64), cols)
    f = np.full(rows * cols, frame_index, dtype=np.int64)
    return np.stack([f, r, c], axis=1)


def _readonly(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


# ============================================================================
# MEMORY SNAPSHOT
# ============================================================================

@dataclass(frozen=True, eq=False)
class MemorySnapshot:
    """
    Attention-ready memory [M_gt, M_sel]

    Both blocks are stored as parallel coordinate/feature arrays;
    gt_tokens and selected_tokens give the (TokenCoord, vector) view.
    frame_count is the number of bank frames the snapshot was built
    from, which sets the uncompressed baseline t*h*w.
    """
    gt_coords: np.ndarray        # (N_gt, 3)
    gt_features: np.ndarray      # (N_gt, c)
    selected_coords: np.ndarray  # (N_sel, 3)
    selected_features: np.ndarray  # (N_sel, c)
    channels: int
    frame_count: int = 0
    pooled_grid: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        c = self.channels
        object.__setattr__(self, 'gt_coords', _readonly(np.reshape(self.gt_coords, (-1, 3)), np.int64))
        object.__setattr__(self, 'selected_coords', _readonly(np.reshape(self.selected_coords, (-1, 3)), np.int64))
        object.__setattr__(self, 'gt_features', _readonly(np.reshape(self.gt_features, (-1, c)), FEATURE_DTYPE))
        object.__setattr__(self, 'selected_features', _readonly(np.reshape(self.selected_features, (-1, c)), FEATURE_DTYPE))

    @classmethod
    def empty(cls, channels: int, frame_count: int = 0,
              pooled_grid: Tuple[int, int] = (0, 0)) -> 'MemorySnapshot':
        none = np.zeros((0, 3), dtype=np.int64)
        feats = np.zeros((0, channels), dtype=FEATURE_DTYPE)
        return cls(none, feats, none, feats, channels, frame_count, pooled_grid)

    @property
    def gt_tokens(self) -> List[Tuple[TokenCoord, np.ndarray]]:
        return _pairs(self.gt_coords, self.gt_features)

    @property
    def selected_tokens(self) -> List[Tuple[TokenCoord, np.ndarray]]:
        return _pairs(self.selected_coords, self.selected_features)

    @property
    def total_tokens(self) -> int:
        return len(self.gt_coords) + len(self.selected_coords)

    def all_coords(self) -> np.ndarray:
        return np.concatenate([self.gt_coords, self.selected_coords], axis=0)

    def all_features(self) -> np.ndarray:
        return np.concatenate([self.gt_features, self.selected_features], axis=0)


def _pairs(coords: np.ndarray, feats: np.ndarray) -> List[Tuple[TokenCoord, np.ndarray]]:
    return [(TokenCoord(*map(int, c)), f) for c, f in zip(coords, feats)]


# ============================================================================
# ENGINE CONFIGURATION
# ============================================================================

@dataclass(frozen=True)
class EngineConfig:
    """
    Engine configuration

    Defaults reproduce the headline setting: 2x2 average pooling, a
    bank of t=7 frames (GT + six most recent), n = h^*w^ tokens selected
    globally against the previous frame, and the IoU gate at 0.5.
    """
    pool_dh: int = 2
    pool_dw: int = 2
    pooling_kind: PoolingKind = PoolingKind.AVERAGE
    bank_capacity: int = 7
    selection_budget: Budget = AUTO
    anchor: Anchor = Anchor.PREVIOUS
    scope: Scope = Scope.GLOBAL
    temporal_strategy: TemporalStrategy = TemporalStrategy.TOPN_SELECT
    iou_threshold: float = 0.5
    absence_filter: bool = True
    iou_gate: bool = True
    position_encoding: bool = True

    def __post_init__(self):
        # Accept plain strings for enum fields
        for name, kind in (('pooling_kind', PoolingKind), ('anchor', Anchor),
                           ('scope', Scope), ('temporal_strategy', TemporalStrategy)):
            value = getattr(self, name)
            if not isinstance(value, kind):
                try:
                    object.__setattr__(self, name, kind(value))
                except ValueError:
                    pass  # reported by config_errors()
        if isinstance(self.selection_budget, str) and self.selection_budget.lower() == AUTO:
            object.__setattr__(self, 'selection_budget', AUTO)

    @classmethod
    def load_defaults(cls) -> 'EngineConfig':
        """Headline configuration (Prev + Global top-n, 14:1)"""
        return cls()

    def config_errors(self) -> List[str]:
        """
        Validate field ranges and enum membership

        Returns: List of error messages (empty if valid)
        """
        errors = []
        for name in ('pool_dh', 'pool_dw', 'bank_capacity'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                errors.append(f"{name} must be a positive integer, got {value!r}")

        budget = self.selection_budget
        if budget != AUTO:
            if isinstance(budget, bool) or not isinstance(budget, (int, np.integer)) or budget < 1:
                errors.append(f"selection_budget must be a positive integer or 'auto', got {budget!r}")

        for name, kind in (('pooling_kind', PoolingKind), ('anchor', Anchor),
                           ('scope', Scope), ('temporal_strategy', TemporalStrategy)):
            if not isinstance(getattr(self, name), kind):
                valid = ', '.join(k.value for k in kind)
                errors.append(f"{name} must be one of {{{valid}}}, got {getattr(self, name)!r}")

        theta = self.iou_threshold
        if not isinstance(theta, (int, float)) or not (0.0 <= float(theta) <= 1.0):
            errors.append(f"iou_threshold must lie in [0, 1], got {theta!r}")

        return errors

    def validate(self) -> 'EngineConfig':
        errors = self.config_errors()
        if errors:
            raise ConfigError(f"Invalid config: {'; '.join(errors)}")
        return self

    def resolve_budget(self, pooled_height: int, pooled_width: int) -> int:
        """Selection budget n, with AUTO expanded to h^*w^"""
        if self.selection_budget == AUTO:
            return pooled_height * pooled_width
        return int(self.selection_budget)

    def resolved(self, height: int, width: int) -> 'EngineConfig':
        """Copy with AUTO budget expanded for an (height, width) stream"""
        check_divisibility(height, width, self)
        return replace(
            self,
            selection_budget=self.resolve_budget(height // self.pool_dh, width // self.pool_dw)
        )

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, Enum):
                out[key] = value.value
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EngineConfig':
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        return cls(**data)


# ============================================================================
# VALIDATION
# ============================================================================

def check_divisibility(height: int, width: int, config: EngineConfig) -> None:
    if height % config.pool_dh or width % config.pool_dw:
        raise PoolingDivisibility(
            f"pool window {config.pool_dh}x{config.pool_dw} does not divide "
            f"frame grid {height}x{width}"
        )


def validate_frame(frame: FeatureFrame, config: EngineConfig) -> FeatureFrame:
    """
    Validate one frame against the config

    Checks dims are positive, data length equals h*w*c, predicted IoU
    lies in [0, 1] and the pool window divides the grid.

    Returns: the frame itself, so calls can be chained

    Raises:
        DimensionMismatch, IouOutOfRange, PoolingDivisibility
    """
    h, w, c = frame.dims
    if min(h, w, c) < 1 or frame.frame_index < 0:
        raise DimensionMismatch(
            f"frame {frame.frame_index}: dims must be positive, got {h}x{w}x{c}"
        )
    if frame.data.size != h * w * c:
        raise DimensionMismatch(
            f"frame {frame.frame_index}: data length {frame.data.size} != {h}*{w}*{c}"
        )
    if not (0.0 <= frame.predicted_iou <= 1.0):
        raise IouOutOfRange(
            f"frame {frame.frame_index}: predicted_iou {frame.predicted_iou} outside [0, 1]"
        )
    check_divisibility(h, w, config)
    return frame
