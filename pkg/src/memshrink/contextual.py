"""
Memshrink - Contextual Layer
============================

Layer 4: Contextual (Deterministic)

Contains:
- position_encode / position_encoding: 3-axis sinusoidal codes over
  (frame_index, row, col) provenance
- cross_attend: single-head reference cross-attention of current-frame
  queries over a MemorySnapshot
- CostAnalyzer: exact token and multiply-accumulate accounting, both
  measured (from an attention call) and closed-form (cost_of)

Q/K/V are identity maps of the features; positional codes are added to
queries and keys only.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from memshrink.foundation import (
    ChannelMismatch, ChannelsTooSmall, CompressedFrame, EmptyMemory,
    EngineConfig, MemorySnapshot, TemporalStrategy, TokenCoord, grid_coords,
)
from memshrink.structure import pooled_token_count

PE_BASE = 10000.0


# ============================================================================
# DATA STRUCTURES
# ============================================================================

@dataclass(frozen=True)
class CostReport:
    """Token counts and attention cost for one memory read"""
    query_tokens: int
    memory_tokens: int
    channels: int
    mac_count: int          # 2 * N_q * N_kv * c (QK^T plus weights @ V)
    flop_misc: int          # softmax: scale, shift, exp, normalize per logit
    baseline_tokens: int    # t * h * w, uncompressed pre-pooling bank
    compression_ratio: float

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return {
            'query_tokens': self.query_tokens,
            'memory_tokens': self.memory_tokens,
            'channels': self.channels,
            'mac_count': self.mac_count,
            'flop_misc': self.flop_misc,
            'baseline_tokens': self.baseline_tokens,
            'compression_ratio': self.compression_ratio,
        }


@dataclass(frozen=True, eq=False)
class AttentionOutput:
    """Attended features for every query plus diagnostics"""
    values: np.ndarray       # (N_q, c) float64
    weights_checksum: float  # sum of all attention weights, ~N_q
    cost: CostReport
    counted_macs: int = 0    # tallied from the matrix products actually run


# ============================================================================
# POSITION ENCODING
# ============================================================================

def _group_sizes(channels: int) -> List[int]:
    pairs = channels // 2
    base, extra = divmod(pairs, 3)
    return [2 * (base + (1 if i < extra else 0)) for i in range(3)]


def position_encoding(coords: np.ndarray, channels: int) -> np.ndarray:
    """
    Vectorized position codes for an (N, 3) coordinate array

    Channels are split into three contiguous even-sized groups for
    frame_index, row and col (sizes as equal as possible, earlier groups
    larger). Inside a group of size g, channel 2i is sin(p * w_i) and
    channel 2i+1 is cos(p * w_i) with w_i = 10000^(-2i/g).

    Raises:
        ChannelsTooSmall: if channels is odd or below 6
    """
    if channels < 6 or channels % 2:
        raise ChannelsTooSmall(f"position encoding needs even channels >= 6, got {channels}")
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    out = np.empty((len(coords), channels), dtype=np.float64)
    start = 0
    for axis, size in enumerate(_group_sizes(channels)):
        i = np.arange(size // 2, dtype=np.float64)
        freqs = PE_BASE ** (-2.0 * i / size)
        angles = coords[:, axis:axis + 1] * freqs[None, :]
        out[:, start:start + size:2] = np.sin(angles)
        out[:, start + 1:start + size:2] = np.cos(angles)
        start += size
    return out


def position_encode(coord: TokenCoord, channels: int) -> np.ndarray:
    """Position code of a single token; see position_encoding()"""
    return position_encoding(np.array([tuple(coord)]), channels)[0]


# ============================================================================
# CROSS-ATTENTION
# ============================================================================

def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row softmax stabilized by subtracting each row's maximum"""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _query_block(query, query_coords: Optional[np.ndarray]):
    if isinstance(query, CompressedFrame):
        return query.flat_tokens().astype(np.float64), query.coords()
    q = np.asarray(query, dtype=np.float64)
    if q.ndim == 3:
        rows, cols, c = q.shape
        coords = grid_coords(0, rows, cols)
        q = q.reshape(-1, c)
    elif q.ndim == 2:
        coords = np.stack([np.zeros(len(q)), np.arange(len(q)), np.zeros(len(q))], axis=1)
    else:
        raise ChannelMismatch(f"query must be 2-D or 3-D, got shape {q.shape}")
    if query_coords is not None:
        coords = np.asarray(query_coords).reshape(-1, 3)
    return q, coords


def cross_attend(
    query: Union[CompressedFrame, np.ndarray],
    memory: MemorySnapshot,
    config: EngineConfig,
    query_coords: Optional[np.ndarray] = None,
) -> AttentionOutput:
    """
    out = softmax(Q K^T / sqrt(c)) V

    Args:
        query: Pooled current frame, or a raw (N_q, c) / (h, w, c) array
        memory: Snapshot to attend over; K = V = memory tokens
        config: position_encoding switch and pool size (for the
                compression ratio baseline)
        query_coords: Optional (N_q, 3) provenance for raw queries

    Returns:
        AttentionOutput with exact counts in cost

    Raises:
        EmptyMemory, ChannelMismatch
    """
    if memory.total_tokens == 0:
        raise EmptyMemory("memory snapshot has no tokens")
    q, q_coords = _query_block(query, query_coords)
    c = memory.channels
    if q.shape[1] != c:
        raise ChannelMismatch(f"query has {q.shape[1]} channels, memory has {c}")

    values = memory.all_features().astype(np.float64)
    keys = values
    if config.position_encoding:
        q = q + position_encoding(q_coords, c)
        keys = values + position_encoding(memory.all_coords(), c)

    macs = 0
    logits = (q @ keys.T) / math.sqrt(c)
    macs += q.shape[0] * keys.shape[0] * q.shape[1]
    weights = softmax_rows(logits)
    out = weights @ values
    macs += weights.shape[0] * weights.shape[1] * values.shape[1]

    cost = CostAnalyzer.measured(q.shape[0], memory, c, config)
    return AttentionOutput(
        values=out, weights_checksum=float(weights.sum()), cost=cost, counted_macs=macs,
    )


# ============================================================================
# COST ANALYZER
# ============================================================================

class CostAnalyzer:
    """
    Exact cost accounting

    Counts are derived from dims, never accumulated, so they hold for
    any parallel split of the attention rows.
    """

    @staticmethod
    def report(query_tokens: int, memory_tokens: int, channels: int,
               baseline_tokens: int) -> CostReport:
        return CostReport(
            query_tokens=query_tokens,
            memory_tokens=memory_tokens,
            channels=channels,
            mac_count=2 * query_tokens * memory_tokens * channels,
            flop_misc=4 * query_tokens * memory_tokens,
            baseline_tokens=baseline_tokens,
            compression_ratio=memory_tokens / baseline_tokens if baseline_tokens else 0.0,
        )

    @staticmethod
    def measured(query_tokens: int, memory: MemorySnapshot, channels: int,
                 config: EngineConfig) -> CostReport:
        """Cost of attending over an assembled snapshot"""
        ph, pw = memory.pooled_grid
        frame_tokens = ph * config.pool_dh * pw * config.pool_dw
        return CostAnalyzer.report(
            query_tokens, memory.total_tokens, channels,
            memory.frame_count * frame_tokens,
        )

    @staticmethod
    def memory_tokens(config: EngineConfig, height: int, width: int, t_actual: int,
                      strategy: Optional[TemporalStrategy] = None) -> int:
        """
        Closed-form memory token count for a bank of t_actual frames
        (GT + t_actual - 1 motion frames)
        """
        strategy = TemporalStrategy(strategy or config.temporal_strategy)
        per_frame = pooled_token_count(height, width, config)
        motion = max(t_actual - 1, 0)
        if strategy == TemporalStrategy.TOPN_SELECT:
            n = config.resolve_budget(height // config.pool_dh, width // config.pool_dw)
            return per_frame + min(n, motion * per_frame)
        if strategy == TemporalStrategy.NO_TMC:
            return t_actual * per_frame
        if strategy == TemporalStrategy.GT_PLUS_LAST:
            return per_frame * (1 + min(motion, 1))
        if strategy == TemporalStrategy.FIRST_PLUS_LAST:
            return per_frame * (2 if motion >= 2 else 1)
        if strategy == TemporalStrategy.RETAIN_GT_FIRST_LAST:
            return per_frame * (1 + min(motion, 2))
        return per_frame

    @staticmethod
    def cost_of(config: EngineConfig, height: int, width: int, t_actual: int,
                strategy: Optional[TemporalStrategy] = None, *, channels: int,
                query_tokens: Optional[int] = None) -> CostReport:
        """
        Closed-form cost without running attention

        Args:
            config: Pooling and budget settings
            height, width: Original (pre-pooling) frame grid
            t_actual: Frames in the bank, GT included
            strategy: Defaults to config.temporal_strategy
            channels: Feature width c
            query_tokens: Defaults to the pooled current frame, h^*w^

        Returns:
            CostReport with ratio against t_actual * h * w
        """
        if query_tokens is None:
            query_tokens = pooled_token_count(height, width, config)
        n_kv = CostAnalyzer.memory_tokens(config, height, width, t_actual, strategy)
        return CostAnalyzer.report(query_tokens, n_kv, channels, t_actual * height * width)

    @staticmethod
    def cost_table(config: EngineConfig, height: int, width: int, t_actual: int,
                   channels: int) -> Dict[str, CostReport]:
        """One closed-form CostReport per temporal strategy"""
        return {
            s.value: CostAnalyzer.cost_of(config, height, width, t_actual, s, channels=channels)
            for s in TemporalStrategy
        }


cost_of = CostAnalyzer.cost_of
cost_table = CostAnalyzer.cost_table


if __name__ == "__main__":
    print("Testing Contextual Layer...")

    config = EngineConfig.load_defaults()

    print("\n1. Closed-form cost at 64x64x16, t=7...")
    for name, report in cost_table(config, 64, 64, 7, channels=16).items():
        print(f"   ✓ {name:<22} {report.memory_tokens:>6} tokens, "
              f"ratio {report.compression_ratio:.4f}, {report.mac_count} MACs")

    print("\n2. Position codes...")
    code = position_encode(TokenCoord(3, 1, 2), 16)
    print(f"   ✓ Code width {code.shape[0]}, bounded: {bool(np.all(np.abs(code) <= 1.0))}")
