"""
Memshrink - Relational Layer
============================

Layer 3: Relational (Deterministic)
Temporal memory compression: relates each motion token to its anchor
token (the same cell of the previous bank frame, or of the GT frame),
keeps the n least similar tokens and assembles [M_gt, M_sel].

Also hosts the fixed-frame strategies used by the ablations
(w/o TMC, GT + Last, First + Last, moving average, GT + first + last).
"""

import logging
from collections import abc
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union, overload

import numpy as np

from memshrink.foundation import (
    Anchor, CompressedFrame, EmptyMotionSet, EngineConfig, FEATURE_DTYPE,
    MemorySnapshot, MissingGtFrame, Scope, ScoredToken, ShapeMismatch,
    TemporalStrategy, TokenCoord, grid_coords,
)

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12


# ============================================================================
# SCORE TABLE
# ============================================================================

class ScoreTable(abc.Sequence):
    """
    Read-only sequence of ScoredToken backed by parallel arrays

    coords: (N, 3) int64 (frame_index, row, col)
    similarity: (N,) float64
    features: (N, c) float32
    """

    def __init__(self, coords: np.ndarray, similarity: np.ndarray, features: np.ndarray):
        self.coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        self.similarity = np.asarray(similarity, dtype=np.float64).reshape(-1)
        n = len(self.similarity)
        self.features = np.asarray(features, dtype=FEATURE_DTYPE).reshape(n, -1) if n else \
            np.asarray(features, dtype=FEATURE_DTYPE)
        if len(self.coords) != n or len(self.features) != n:
            raise ShapeMismatch("score table columns differ in length")

    @classmethod
    def empty(cls, channels: int = 0) -> 'ScoreTable':
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros((0, channels)))

    @classmethod
    def coerce(cls, scores: Union['ScoreTable', Sequence[ScoredToken]]) -> 'ScoreTable':
        if isinstance(scores, ScoreTable):
            return scores
        scores = list(scores)
        if not scores:
            return cls.empty()
        return cls(
            np.array([tuple(s.coord) for s in scores], dtype=np.int64),
            np.array([s.similarity for s in scores], dtype=np.float64),
            np.stack([np.asarray(s.features, dtype=FEATURE_DTYPE) for s in scores]),
        )

    def __len__(self) -> int:
        return len(self.similarity)

    @overload
    def __getitem__(self, index: int) -> ScoredToken: ...

    @overload
    def __getitem__(self, index: slice) -> List[ScoredToken]: ...

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        f, r, c = self.coords[index]
        return ScoredToken(
            coord=TokenCoord(int(f), int(r), int(c)),
            features=self.features[index],
            similarity=float(self.similarity[index]),
        )

    def tie_break_order(self, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """Indices sorted by (similarity, frame_index, row, col) ascending"""
        if rows is None:
            rows = np.arange(len(self))
        coords = self.coords[rows]
        order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0], self.similarity[rows]))
        return rows[order]


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Assembled memory plus every candidate score for diagnostics"""
    snapshot: MemorySnapshot
    scores: ScoreTable
    budget_used: int


# ============================================================================
# SIMILARITY SCORING
# ============================================================================

def _check_shapes(frames: Sequence[CompressedFrame]) -> None:
    dims = {f.dims for f in frames}
    if len(dims) > 1:
        raise ShapeMismatch(f"frames disagree on (h, w, c): {sorted(dims)}")


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Row-wise cosine similarity along the last axis

    Zero-norm rows score 1.0 (no motion evidence) and bit-identical rows
    score exactly 1.0. Results are clipped to [-1, 1].
    """
    u64 = np.asarray(u, dtype=np.float64)
    v64 = np.asarray(v, dtype=np.float64)
    dot = np.sum(u64 * v64, axis=-1)
    nu = np.sqrt(np.sum(u64 * u64, axis=-1))
    nv = np.sqrt(np.sum(v64 * v64, axis=-1))
    degenerate = (nu < ZERO_NORM) | (nv < ZERO_NORM)
    with np.errstate(divide='ignore', invalid='ignore'):
        s = np.where(degenerate, 1.0, dot / np.where(degenerate, 1.0, nu * nv))
    s = np.clip(s, -1.0, 1.0)
    return np.where(np.all(np.asarray(u) == np.asarray(v), axis=-1), 1.0, s)


def similarity_scores(frames: Sequence[CompressedFrame], anchor: Anchor) -> ScoreTable:
    """
    Score every motion token against its anchor token

    Args:
        frames: GT first, then motion frames oldest to newest
        anchor: PREVIOUS compares cell (r, c) of motion frame k with the
                same cell of the preceding frame in the sequence (the
                earliest motion frame compares with GT); GT compares
                every motion token with the GT token at (r, c)

    Returns:
        ScoreTable with (len(frames) - 1) * h^ * w^ entries, ordered by
        frame then row-major cell

    Raises:
        MissingGtFrame, ShapeMismatch, EmptyMotionSet
    """
    if not frames or not frames[0].is_gt:
        raise MissingGtFrame("similarity scoring needs the GT frame first")
    _check_shapes(frames)
    if len(frames) < 2:
        raise EmptyMotionSet("no motion frames to score")

    anchor = Anchor(anchor)
    ph, pw, c = frames[0].dims
    stacked = np.stack([f.tokens.reshape(-1, c) for f in frames])  # (T, P, c)
    motion = stacked[1:]
    if anchor == Anchor.PREVIOUS:
        anchors = stacked[:-1]
    else:
        anchors = np.broadcast_to(stacked[0], motion.shape)

    similarity = cosine_similarity(motion, anchors).reshape(-1)
    coords = np.concatenate([grid_coords(f.frame_index, ph, pw) for f in frames[1:]])
    return ScoreTable(coords, similarity, motion.reshape(-1, c))


# ============================================================================
# TOP-N SELECTION
# ============================================================================

def frame_quotas(supplies: Sequence[int], n: int) -> List[int]:
    """
    Split budget n over frames ordered oldest to newest

    Each frame gets floor(n/m); the n mod m remainder goes one each to
    the most recent frames. Quotas are capped by supply and any
    shortfall is handed out one token at a time to frames with spare
    supply, newest first, so the quotas sum to min(n, sum(supplies)).
    """
    m = len(supplies)
    if m == 0 or n <= 0:
        return [0] * m
    q, extra = divmod(n, m)
    quotas = [q + (1 if i >= m - extra else 0) for i in range(m)]
    quotas = [min(quota, supply) for quota, supply in zip(quotas, supplies)]
    shortfall = min(n, sum(supplies)) - sum(quotas)
    while shortfall > 0:
        for i in reversed(range(m)):
            if shortfall == 0:
                break
            if quotas[i] < supplies[i]:
                quotas[i] += 1
                shortfall -= 1
    return quotas


def _coord_sorted(table: ScoreTable, rows: np.ndarray) -> np.ndarray:
    coords = table.coords[rows]
    return rows[np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))]


def _gt_block(frames: Sequence[CompressedFrame]):
    if frames and frames[0].is_gt:
        return frames[0].coords(), frames[0].flat_tokens()
    return None


def select_topn(
    scores: Union[ScoreTable, Sequence[ScoredToken]],
    frames: Sequence[CompressedFrame],
    n: int,
    scope: Scope,
) -> SelectionResult:
    """
    Keep the n least similar motion tokens

    Ties are broken by ascending (frame_index, row, col). With fewer than
    n candidates every candidate is kept.

    Args:
        scores: Candidate scores (ScoreTable or ScoredToken sequence)
        frames: Bank frames, GT first; GT tokens are always retained
        n: Selection budget (>= 0)
        scope: GLOBAL ranks all candidates together; PER_FRAME applies
               the quotas of frame_quotas()

    Returns:
        SelectionResult whose snapshot is [GT tokens (row-major),
        selected tokens in (frame_index, row, col) order]
    """
    if n < 0:
        raise ValueError(f"selection budget must be >= 0, got {n}")
    table = ScoreTable.coerce(scores)
    scope = Scope(scope)

    if n == 0 or len(table) == 0:
        picked = np.zeros(0, dtype=np.int64)
    elif scope == Scope.GLOBAL:
        picked = table.tie_break_order()[:n]
    else:
        frame_ids = np.unique(table.coords[:, 0])
        rows_by_frame = [np.flatnonzero(table.coords[:, 0] == f) for f in frame_ids]
        quotas = frame_quotas([len(rows) for rows in rows_by_frame], n)
        picked = np.concatenate([
            table.tie_break_order(rows)[:quota]
            for rows, quota in zip(rows_by_frame, quotas)
        ])
    picked = _coord_sorted(table, picked.astype(np.int64))

    ref = frames[0] if frames else None
    channels = ref.channels if ref is not None else table.features.shape[-1]
    gt = _gt_block(frames)
    empty_coords = np.zeros((0, 3), dtype=np.int64)
    empty_feats = np.zeros((0, channels), dtype=FEATURE_DTYPE)
    snapshot = MemorySnapshot(
        gt_coords=gt[0] if gt else empty_coords,
        gt_features=gt[1] if gt else empty_feats,
        selected_coords=table.coords[picked],
        selected_features=table.features[picked] if len(picked) else empty_feats,
        channels=channels,
        frame_count=len(frames),
        pooled_grid=(ref.pooled_height, ref.pooled_width) if ref is not None else (0, 0),
    )
    return SelectionResult(snapshot=snapshot, scores=table, budget_used=len(picked))


# ============================================================================
# MEMORY ASSEMBLY
# ============================================================================

_NEEDS_GT = {
    TemporalStrategy.TOPN_SELECT,
    TemporalStrategy.GT_PLUS_LAST,
    TemporalStrategy.RETAIN_GT_FIRST_LAST,
}


def _unique_frames(frames: Sequence[CompressedFrame]) -> List[CompressedFrame]:
    seen, out = set(), []
    for f in frames:
        if f.frame_index not in seen:
            seen.add(f.frame_index)
            out.append(f)
    return out


def _fixed_snapshot(
    gt: Optional[CompressedFrame],
    kept: Sequence[CompressedFrame],
    bank: Sequence[CompressedFrame],
) -> MemorySnapshot:
    ref = bank[0]
    c = ref.channels
    kept = _unique_frames(kept)
    if kept:
        sel_coords = np.concatenate([f.coords() for f in kept])
        sel_feats = np.concatenate([f.flat_tokens() for f in kept])
    else:
        sel_coords = np.zeros((0, 3), dtype=np.int64)
        sel_feats = np.zeros((0, c), dtype=FEATURE_DTYPE)
    return MemorySnapshot(
        gt_coords=gt.coords() if gt is not None else np.zeros((0, 3), dtype=np.int64),
        gt_features=gt.flat_tokens() if gt is not None else np.zeros((0, c), dtype=FEATURE_DTYPE),
        selected_coords=sel_coords,
        selected_features=sel_feats,
        channels=c,
        frame_count=len(bank),
        pooled_grid=(ref.pooled_height, ref.pooled_width),
    )


def temporal_mean(frames: Sequence[CompressedFrame]) -> CompressedFrame:
    """Collapse frames to one grid by the arithmetic mean across time"""
    stacked = np.stack([f.tokens.astype(np.float64) for f in frames])
    last = frames[-1]
    return CompressedFrame(
        frame_index=last.frame_index,
        pooled_height=last.pooled_height,
        pooled_width=last.pooled_width,
        channels=last.channels,
        tokens=stacked.sum(axis=0) / len(frames),
        is_gt=False,
    )


def assemble_memory(bank_frames: Sequence[CompressedFrame], config: EngineConfig) -> SelectionResult:
    """
    Build the attention-ready memory for the configured strategy

    Strategies:
        topn_select          - similarity_scores + select_topn
        no_tmc               - every token of every bank frame
        gt_plus_last         - GT + most recent motion frame
        first_plus_last      - oldest + most recent motion frame, no GT
        moving_average       - all bank frames averaged into one grid
        retain_gt_first_last - GT + oldest + most recent motion frame

    Args:
        bank_frames: GT first, then motion frames oldest to newest
        config: Supplies strategy, anchor, scope and budget

    Returns:
        SelectionResult

    Raises:
        MissingGtFrame: if the bank is empty, or the strategy needs a GT
                        frame and the bank has none
        ShapeMismatch: if frames disagree on dims
    """
    frames = list(bank_frames)
    strategy = TemporalStrategy(config.temporal_strategy)
    if not frames:
        raise MissingGtFrame("memory bank is empty")
    _check_shapes(frames)

    gt = frames[0] if frames[0].is_gt else None
    motion = frames[1:] if gt is not None else frames
    if gt is None and strategy in _NEEDS_GT:
        raise MissingGtFrame(f"strategy {strategy.value} needs a GT frame")

    if strategy == TemporalStrategy.TOPN_SELECT:
        if not motion:
            result = select_topn(ScoreTable.empty(gt.channels), frames, 0, config.scope)
        else:
            scores = similarity_scores(frames, config.anchor)
            n = config.resolve_budget(gt.pooled_height, gt.pooled_width)
            result = select_topn(scores, frames, n, config.scope)
        logger.debug(
            "topn_select: %d candidates, %d selected, %d memory tokens",
            len(result.scores), result.budget_used, result.snapshot.total_tokens,
        )
        return result

    if strategy == TemporalStrategy.NO_TMC:
        snapshot = _fixed_snapshot(gt, motion, frames)
    elif strategy == TemporalStrategy.GT_PLUS_LAST:
        snapshot = _fixed_snapshot(gt, motion[-1:], frames)
    elif strategy == TemporalStrategy.FIRST_PLUS_LAST:
        pool = motion if motion else frames
        snapshot = _fixed_snapshot(None, [pool[0], pool[-1]], frames)
    elif strategy == TemporalStrategy.RETAIN_GT_FIRST_LAST:
        snapshot = _fixed_snapshot(gt, [motion[0], motion[-1]] if motion else [], frames)
    else:
        snapshot = _fixed_snapshot(None, [temporal_mean(frames)], frames)

    logger.debug("%s: %d memory tokens", strategy.value, snapshot.total_tokens)
    return SelectionResult(
        snapshot=snapshot,
        scores=ScoreTable.empty(frames[0].channels),
        budget_used=len(snapshot.selected_coords),
    )
