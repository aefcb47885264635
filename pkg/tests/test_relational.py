"""Tests for similarity scoring, top-n selection and memory assembly"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memshrink.foundation import (
    Anchor, EmptyMotionSet, EngineConfig, MissingGtFrame, Scope, ScoredToken,
    ShapeMismatch, TemporalStrategy, TokenCoord,
)
from memshrink.relational import (
    ScoreTable, assemble_memory, cosine_similarity, frame_quotas, select_topn,
    similarity_scores, temporal_mean,
)

from conftest import make_compressed, random_bank


def scored(frame, row, col, sim, c=2):
    return ScoredToken(TokenCoord(frame, row, col), np.full(c, float(frame)), sim)


def selected_coords(result):
    return [tuple(int(v) for v in row) for row in result.snapshot.selected_coords]


# ============================================================================
# COSINE SIMILARITY
# ============================================================================

def test_identical_tokens_score_one():
    u = np.array([0.3, -1.2, 7.0])
    assert cosine_similarity(u, u.copy()) == 1.0


def test_antipodal_tokens_score_minus_one():
    u = np.array([0.5, 2.0, -1.0])
    assert cosine_similarity(u, -u) == pytest.approx(-1.0, abs=1e-12)


def test_hand_computed_similarity():
    s = cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    assert abs(s - 1 / math.sqrt(2)) <= 1e-9


def test_row_wise_similarity_pins_identical_rows():
    u = np.array([[1.0, 0.0], [0.3, -0.7], [2.0, 2.0]])
    v = np.array([[1.0, 1.0], [0.3, -0.7], [-2.0, -2.0]])
    s = cosine_similarity(u, v)
    assert s.shape == (3,)
    assert s[0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert s[1] == 1.0
    assert s[2] == pytest.approx(-1.0, abs=1e-12)


def test_zero_norm_pairs_score_one():
    assert cosine_similarity(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 1.0
    assert cosine_similarity(np.zeros(3), np.zeros(3)) == 1.0


# ============================================================================
# SCORING
# ============================================================================

def test_previous_anchor_compares_with_preceding_frame():
    gt = make_compressed(0, [[[1.0, 0.0]]], gt=True)
    a = make_compressed(3, [[[1.0, 0.0]]])
    b = make_compressed(5, [[[0.0, 1.0]]])
    scores = similarity_scores([gt, a, b], Anchor.PREVIOUS)
    assert [s.coord for s in scores] == [TokenCoord(3, 0, 0), TokenCoord(5, 0, 0)]
    assert [s.similarity for s in scores] == [1.0, 0.0]


def test_gt_anchor_compares_with_gt_frame():
    gt = make_compressed(0, [[[1.0, 0.0]]], gt=True)
    a = make_compressed(1, [[[0.0, 1.0]]])
    b = make_compressed(2, [[[1.0, 0.0]]])
    scores = similarity_scores([gt, a, b], Anchor.GT)
    assert scores.similarity.tolist() == [0.0, 1.0]


def test_single_motion_frame_scores_the_same_under_both_anchors(rng):
    bank = random_bank(rng, frames=2, ph=4, pw=5, c=3)
    previous = similarity_scores(bank, Anchor.PREVIOUS)
    gt = similarity_scores(bank, Anchor.GT)
    assert previous.similarity.tobytes() == gt.similarity.tobytes()
    assert np.array_equal(previous.coords, gt.coords)
    for scope in Scope:
        a = select_topn(previous, bank, 7, scope).snapshot
        b = select_topn(gt, bank, 7, scope).snapshot
        assert np.array_equal(a.selected_coords, b.selected_coords)


def test_scoring_requires_gt_first():
    frames = [make_compressed(1, np.ones((1, 1, 2))), make_compressed(2, np.ones((1, 1, 2)))]
    with pytest.raises(MissingGtFrame):
        similarity_scores(frames, Anchor.PREVIOUS)


def test_scoring_requires_motion_frames():
    with pytest.raises(EmptyMotionSet):
        similarity_scores([make_compressed(0, np.ones((1, 1, 2)), gt=True)], Anchor.PREVIOUS)


def test_scoring_rejects_mixed_shapes():
    frames = [make_compressed(0, np.ones((1, 1, 2)), gt=True), make_compressed(1, np.ones((1, 2, 2)))]
    with pytest.raises(ShapeMismatch):
        similarity_scores(frames, Anchor.PREVIOUS)


def test_score_count_covers_every_motion_cell(rng):
    frames = random_bank(rng, frames=4, ph=3, pw=5, c=2)
    assert len(similarity_scores(frames, Anchor.GT)) == 3 * 15


# ============================================================================
# TOP-N SELECTION
# ============================================================================

def test_selects_least_similar_token():
    gt = make_compressed(0, np.zeros((1, 3, 2)), gt=True)
    scores = [scored(1, 0, 0, 0.9), scored(1, 0, 1, 0.2), scored(1, 0, 2, 0.5)]
    result = select_topn(scores, [gt], 1, Scope.GLOBAL)
    assert selected_coords(result) == [(1, 0, 1)]


def test_ties_break_by_coordinate_order():
    gt = make_compressed(0, np.zeros((1, 2, 2)), gt=True)
    scores = [scored(2, 0, 0, 0.5), scored(1, 0, 1, 0.5), scored(1, 0, 0, 0.5)]
    result = select_topn(scores, [gt], 2, Scope.GLOBAL)
    assert selected_coords(result) == [(1, 0, 0), (1, 0, 1)]


def test_gt_tokens_always_retained(rng):
    frames = random_bank(rng, frames=3, ph=2, pw=2, c=2)
    scores = similarity_scores(frames, Anchor.PREVIOUS)
    result = select_topn(scores, frames, 0, Scope.GLOBAL)
    assert len(result.snapshot.gt_coords) == 4
    assert result.snapshot.selected_coords.shape == (0, 3)
    assert result.budget_used == 0


def test_budget_above_supply_keeps_everything(rng):
    frames = random_bank(rng, frames=3, ph=2, pw=2, c=2)
    result = select_topn(similarity_scores(frames, Anchor.PREVIOUS), frames, 100, Scope.PER_FRAME)
    assert result.budget_used == 8


def test_selected_tokens_emitted_in_coordinate_order(rng):
    frames = random_bank(rng, frames=5, ph=4, pw=4, c=3)
    result = select_topn(similarity_scores(frames, Anchor.PREVIOUS), frames, 20, Scope.GLOBAL)
    coords = selected_coords(result)
    assert coords == sorted(coords)
    assert not any(f == 0 for f, _, _ in coords)


def test_negative_budget_rejected():
    with pytest.raises(ValueError):
        select_topn([], [], -1, Scope.GLOBAL)


@pytest.mark.parametrize("supplies, n, expected", [
    ([10, 10, 10], 7, [2, 2, 3]),
    ([10, 10, 10], 8, [2, 3, 3]),
    ([1, 10, 10], 9, [1, 4, 4]),
    ([2, 2], 10, [2, 2]),
    ([5, 5, 5], 0, [0, 0, 0]),
])
def test_frame_quotas(supplies, n, expected):
    assert frame_quotas(supplies, n) == expected


def test_per_frame_scope_takes_each_frames_quota():
    gt = make_compressed(0, np.zeros((1, 2, 2)), gt=True)
    scores = [
        scored(1, 0, 0, -0.9), scored(1, 0, 1, -0.8),
        scored(2, 0, 0, 0.7), scored(2, 0, 1, 0.9),
    ]
    global_pick = select_topn(scores, [gt], 2, Scope.GLOBAL)
    frame_pick = select_topn(scores, [gt], 2, Scope.PER_FRAME)
    assert selected_coords(global_pick) == [(1, 0, 0), (1, 0, 1)]
    assert selected_coords(frame_pick) == [(1, 0, 0), (2, 0, 0)]


def test_score_table_sequence_view():
    table = ScoreTable([[1, 0, 0], [2, 1, 1]], [0.25, -0.5], np.ones((2, 3)))
    assert len(table) == 2
    assert table[1].coord == TokenCoord(2, 1, 1)
    assert table[1].similarity == -0.5
    assert [s.coord.frame_index for s in table[:]] == [1, 2]
    assert table.tie_break_order().tolist() == [1, 0]


# ============================================================================
# SELECTION PROPERTIES
# ============================================================================

@st.composite
def score_sets(draw):
    m = draw(st.integers(1, 4))
    cells = draw(st.integers(1, 6))
    levels = draw(st.lists(st.sampled_from([-1.0, -0.5, 0.0, 0.5, 1.0]), min_size=m * cells,
                           max_size=m * cells))
    return [scored(f + 1, 0, col, levels[f * cells + col]) for f in range(m) for col in range(cells)]


@given(score_sets(), st.integers(0, 30), st.sampled_from(list(Scope)))
@settings(max_examples=80, deadline=None)
def test_selection_is_permutation_invariant(scores, n, scope):
    gt = make_compressed(0, np.zeros((1, 6, 2)), gt=True)
    forward = select_topn(scores, [gt], n, scope)
    backward = select_topn(list(reversed(scores)), [gt], n, scope)
    assert selected_coords(forward) == selected_coords(backward)


@given(score_sets(), st.integers(0, 29))
@settings(max_examples=80, deadline=None)
def test_global_selection_is_monotone_in_budget(scores, n):
    gt = make_compressed(0, np.zeros((1, 6, 2)), gt=True)
    smaller = set(selected_coords(select_topn(scores, [gt], n, Scope.GLOBAL)))
    larger = set(selected_coords(select_topn(scores, [gt], n + 1, Scope.GLOBAL)))
    assert smaller <= larger
    assert len(larger) == min(n + 1, len(scores))


@given(st.lists(st.integers(0, 12), min_size=1, max_size=6), st.integers(0, 80))
@settings(max_examples=100, deadline=None)
def test_frame_quotas_respect_supply(supplies, n):
    quotas = frame_quotas(supplies, n)
    assert sum(quotas) == min(n, sum(supplies))
    assert all(0 <= q <= s for q, s in zip(quotas, supplies))


# ============================================================================
# MEMORY ASSEMBLY
# ============================================================================

@pytest.fixture
def full_bank(rng):
    return random_bank(rng, frames=7, ph=32, pw=32, c=4)


def test_topn_select_keeps_gt_plus_one_frame_of_tokens(full_bank):
    result = assemble_memory(full_bank, EngineConfig())
    assert len(result.snapshot.gt_coords) == 1024
    assert len(result.snapshot.selected_coords) == 1024
    assert result.snapshot.total_tokens == 2048
    assert result.snapshot.frame_count == 7


def test_no_tmc_keeps_every_token(full_bank):
    result = assemble_memory(full_bank, EngineConfig(temporal_strategy="no_tmc"))
    assert result.snapshot.total_tokens == 7 * 1024


def test_moving_average_is_the_per_cell_temporal_mean(full_bank, rng):
    result = assemble_memory(full_bank, EngineConfig(temporal_strategy="moving_average"))
    snapshot = result.snapshot
    assert snapshot.total_tokens == 1024
    assert len(snapshot.gt_coords) == 0
    assert set(snapshot.selected_coords[:, 0].tolist()) == {6}
    grid = snapshot.selected_features.reshape(32, 32, 4)
    for _ in range(20):
        r, c, ch = (int(x) for x in rng.integers(0, [32, 32, 4]))
        want = sum(float(f.tokens[r, c, ch]) for f in full_bank) / 7
        assert abs(float(grid[r, c, ch]) - want) <= 1e-6 * max(abs(want), 1.0)


def test_gt_plus_last(full_bank):
    snapshot = assemble_memory(full_bank, EngineConfig(temporal_strategy="gt_plus_last")).snapshot
    assert snapshot.total_tokens == 2048
    assert set(snapshot.selected_coords[:, 0].tolist()) == {6}


def test_first_plus_last_drops_gt(full_bank):
    snapshot = assemble_memory(full_bank, EngineConfig(temporal_strategy="first_plus_last")).snapshot
    assert len(snapshot.gt_coords) == 0
    assert set(snapshot.selected_coords[:, 0].tolist()) == {1, 6}


def test_retain_gt_first_last(full_bank):
    snapshot = assemble_memory(full_bank, EngineConfig(temporal_strategy="retain_gt_first_last")).snapshot
    assert snapshot.total_tokens == 3072
    assert set(snapshot.gt_coords[:, 0].tolist()) == {0}
    assert set(snapshot.selected_coords[:, 0].tolist()) == {1, 6}


def test_single_motion_frame_counts_once(full_bank):
    snapshot = assemble_memory(full_bank[:2], EngineConfig(temporal_strategy="retain_gt_first_last")).snapshot
    assert snapshot.total_tokens == 2048


def test_gt_only_bank_yields_gt_block(full_bank):
    for strategy in ("topn_select", "gt_plus_last", "retain_gt_first_last", "no_tmc"):
        snapshot = assemble_memory(full_bank[:1], EngineConfig(temporal_strategy=strategy)).snapshot
        assert snapshot.total_tokens == 1024
        assert len(snapshot.selected_coords) == 0


def test_empty_bank_raises():
    with pytest.raises(MissingGtFrame):
        assemble_memory([], EngineConfig())


def test_gt_strategies_need_gt(full_bank):
    with pytest.raises(MissingGtFrame):
        assemble_memory(full_bank[1:], EngineConfig())
    snapshot = assemble_memory(full_bank[1:], EngineConfig(temporal_strategy="first_plus_last")).snapshot
    assert snapshot.total_tokens == 2048


def test_snapshot_never_selects_from_gt_frame(full_bank):
    for anchor in Anchor:
        for scope in Scope:
            snapshot = assemble_memory(full_bank, EngineConfig(anchor=anchor, scope=scope)).snapshot
            assert 0 not in snapshot.selected_coords[:, 0]


def test_temporal_mean_carries_latest_index(full_bank):
    mean = temporal_mean(full_bank[2:5])
    assert mean.frame_index == 4
    assert not mean.is_gt


def test_assembly_uses_resolved_budget(full_bank):
    result = assemble_memory(full_bank, EngineConfig(selection_budget=100))
    assert result.budget_used == 100
    assert result.snapshot.total_tokens == 1124


def test_strategy_enum_values_cover_all_strategies():
    assert {s.value for s in TemporalStrategy} == {
        "topn_select", "no_tmc", "gt_plus_last", "first_plus_last",
        "moving_average", "retain_gt_first_last",
    }
