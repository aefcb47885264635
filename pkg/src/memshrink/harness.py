"""
Stream Harness
==============

Synthetic feature streams with ground-truth motion, the end-to-end
pipeline driver, and run metrics (memory tokens, compression ratio,
motion recall against a Monte-Carlo uniform-selection baseline).

Randomness: numpy's counter-based Philox bit generator, keyed through
SeedSequence([seed, stream_id]). The background texture uses stream 0,
frame k uses stream k + 1, the recall baseline uses BASELINE_STREAM.
Any frame regenerates independently of the others.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from memshrink.bank import snapshot_frames
from memshrink.engine import FrameStep, MemoryEngine
from memshrink.foundation import (
    Anchor, BlobTooLarge, EngineConfig, FeatureFrame, ScenarioError,
    check_divisibility,
)
from memshrink.scenario import ScenarioSpec, validate_scenario

logger = logging.getLogger(__name__)

BASELINE_STREAM = 2 ** 32 - 1
DEFAULT_BASELINE_DRAWS = 1000


def _rng(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_id])))


# ============================================================================
# STREAM GENERATION
# ============================================================================

@dataclass(frozen=True, eq=False)
class SyntheticStream:
    """Frames plus the per-frame blob occupancy on the feature grid"""
    frames: List[FeatureFrame]
    occupancy: np.ndarray  # (T, h, w) bool
    spec: Optional[ScenarioSpec] = None

    def pooled_occupancy(self, dh: int, dw: int) -> np.ndarray:
        """Fraction of each dh x dw window covered by the blob, (T, h/dh, w/dw)"""
        t, h, w = self.occupancy.shape
        return self.occupancy.reshape(t, h // dh, dh, w // dw, dw).mean(axis=(2, 4))

    def moved_masks(self, dh: int, dw: int) -> np.ndarray:
        """Pooled cells whose occupancy changed vs the previous frame (frame 0: none)"""
        pooled = self.pooled_occupancy(dh, dw)
        moved = np.zeros(pooled.shape, dtype=bool)
        moved[1:] = pooled[1:] != pooled[:-1]
        return moved


def blob_cells(spec: ScenarioSpec, frame_index: int) -> np.ndarray:
    """Motion-grid occupancy of the blob in one frame, (gh, gw) bool"""
    gh, gw = spec.motion_grid
    r = spec.blob.radius
    if 2 * r + 1 > min(gh, gw):
        raise BlobTooLarge(f"blob radius {r} does not fit motion grid {gh}x{gw}")
    sr, sc = spec.blob.start if spec.blob.start is not None else (gh // 2, gw // 2)
    vr, vc = spec.blob.velocity
    cr, cc = (sr + frame_index * vr) % gh, (sc + frame_index * vc) % gw
    dr = np.abs(np.arange(gh) - cr)
    dc = np.abs(np.arange(gw) - cc)
    dr = np.minimum(dr, gh - dr)
    dc = np.minimum(dc, gw - dc)
    return dr[:, None] ** 2 + dc[None, :] ** 2 <= r * r


def background_texture(spec: ScenarioSpec) -> np.ndarray:
    """Static (h, w, c) texture shared by every frame"""
    if spec.background_amplitude == 0:
        return np.zeros((spec.h, spec.w, spec.c), dtype=np.float64)
    return spec.background_amplitude * _rng(spec.seed, 0).standard_normal((spec.h, spec.w, spec.c))


def cell_occupancy(spec: ScenarioSpec, frame_index: int) -> np.ndarray:
    """Blob occupancy of one frame on the feature grid, (h, w) bool"""
    ch, cw = spec.cell
    return np.repeat(np.repeat(blob_cells(spec, frame_index), ch, axis=0), cw, axis=1)


def scenario_occupancy(spec: ScenarioSpec) -> np.ndarray:
    """Occupancy of every frame, (T, h, w) bool; no random draws involved"""
    return np.stack([cell_occupancy(spec, k) for k in range(spec.frame_count)])


def iter_stream(spec: ScenarioSpec) -> Iterator[Tuple[FeatureFrame, np.ndarray]]:
    """
    Yield (frame, occupancy) in stream order

    Frame 0 is the prompted frame. Each frame is texture + noise(sigma)
    + amplitude on every channel of the blob's cells. The static texture
    defaults to amplitude 1.0, so all-zero frames need blob amplitude 0,
    noise_sigma 0 and background_amplitude 0 together.

    Raises:
        ScenarioError, BlobTooLarge
    """
    errors = validate_scenario(spec)
    if errors:
        raise ScenarioError(f"Invalid scenario: {'; '.join(errors)}")
    texture = background_texture(spec)
    for k in range(spec.frame_count):
        occupancy = cell_occupancy(spec, k)
        data = texture.copy()
        if spec.noise_sigma > 0:
            data += spec.noise_sigma * _rng(spec.seed, k + 1).standard_normal(data.shape)
        data[occupancy] += spec.blob.amplitude
        frame = FeatureFrame(
            frame_index=k,
            height=spec.h,
            width=spec.w,
            channels=spec.c,
            data=data.astype(np.float32).reshape(-1),
            predicted_iou=spec.iou_at(k),
            object_present=not spec.occluded(k),
            is_prompt=(k == 0),
        )
        yield frame, occupancy


def generate_stream(spec: ScenarioSpec) -> SyntheticStream:
    """
    Materialize a whole scenario stream; deterministic in spec.seed

    With background_amplitude=0, noise_sigma=0 and blob amplitude 0
    every frame is zero.
    """
    frames, occupancy = [], []
    for frame, occ in iter_stream(spec):
        frames.append(frame)
        occupancy.append(occ)
    return SyntheticStream(frames=frames, occupancy=np.stack(occupancy), spec=spec)


# ============================================================================
# METRICS
# ============================================================================

@dataclass(frozen=True)
class FrameMetrics:
    """One row of frames.csv"""
    frame_index: int
    admitted: bool
    reason: str
    memory_tokens: int
    compression_ratio: float
    motion_recall: float
    mac_count: int
    bank_frames: int
    moved_candidates: int
    selected_motion: int


@dataclass(frozen=True)
class RunAggregate:
    frames: int
    admitted: int
    rejected_absent: int
    rejected_low_iou: int
    mean_ratio: float
    mean_recall: float
    baseline_recall: float
    recall_frames: int
    total_macs: int
    steady_state_frames: int
    steady_state_tokens: int
    steady_state_ratio: float


@dataclass(frozen=True)
class RunMetrics:
    frames: List[FrameMetrics]
    aggregate: RunAggregate

    def to_dict(self) -> Dict:
        return {
            'aggregate': self.aggregate.__dict__.copy(),
            'frames': [f.__dict__.copy() for f in self.frames],
        }


CSV_COLUMNS = [
    'frame_index', 'admitted', 'reason', 'memory_tokens',
    'compression_ratio', 'motion_recall', 'mac_count',
]


@dataclass
class _RecallSample:
    candidates: int
    moved: int
    selected: int


def _motion_recall(
    step: FrameStep,
    bank: list,
    pooled_occ: Dict[int, np.ndarray],
    anchor: Anchor,
) -> Tuple[float, Optional[_RecallSample], int, int]:
    """
    Recall of the selected block over moved candidate cells

    A candidate (k, r, c) is moved when frame k's pooled occupancy
    differs from that of its anchor frame at (r, c).
    """
    if not bank or not bank[0].is_gt or len(bank) < 2:
        return 0.0, None, 0, 0
    moved_by_frame = {}
    for j in range(1, len(bank)):
        ref = bank[j - 1] if anchor == Anchor.PREVIOUS else bank[0]
        moved_by_frame[bank[j].frame_index] = (
            pooled_occ[bank[j].frame_index] != pooled_occ[ref.frame_index]
        )
    candidates = sum(m.size for m in moved_by_frame.values())
    moved = int(sum(m.sum() for m in moved_by_frame.values()))

    hits = selected = 0
    for f, r, c in step.selection.snapshot.selected_coords:
        mask = moved_by_frame.get(int(f))
        if mask is None:
            continue
        selected += 1
        hits += bool(mask[r, c])
    recall = hits / max(1, moved)
    sample = _RecallSample(candidates, moved, selected) if moved else None
    return recall, sample, moved, selected


def uniform_recall_baseline(samples: Sequence[_RecallSample], draws: int,
                            rng: np.random.Generator) -> float:
    """
    Monte-Carlo recall of uniform selection

    For each frame, the overlap of a uniform draw of `selected` cells
    out of `candidates` with the `moved` cells is hypergeometric.
    """
    if not samples or draws <= 0:
        return 0.0
    per_frame = []
    for s in samples:
        overlap = rng.hypergeometric(s.moved, s.candidates - s.moved, s.selected, size=draws)
        per_frame.append(float(np.mean(overlap)) / max(1, s.moved))
    return float(np.mean(per_frame))


# ============================================================================
# PIPELINE
# ============================================================================

def run_pipeline(
    stream: Union[SyntheticStream, Sequence[FeatureFrame]],
    config: EngineConfig,
    baseline_draws: int = DEFAULT_BASELINE_DRAWS,
    seed: Optional[int] = None,
) -> RunMetrics:
    """
    Drive every frame through MemoryEngine and collect metrics

    Args:
        stream: SyntheticStream (motion recall available) or bare frames
        config: Engine configuration
        baseline_draws: Monte-Carlo draws per frame for the uniform baseline
        seed: Baseline RNG seed; defaults to the scenario seed (or 0)

    Returns:
        RunMetrics; recall means cover frames with at least one moved
        candidate

    Raises:
        ScenarioError: empty stream or first frame not prompted
        plus anything MemoryEngine.process raises
    """
    if isinstance(stream, SyntheticStream):
        frames, occupancy = stream.frames, stream
    else:
        frames, occupancy = list(stream), None
    if not frames:
        raise ScenarioError("stream is empty")
    if not frames[0].is_prompt:
        raise ScenarioError("first frame of the stream must be the prompted frame")

    engine = MemoryEngine(config)
    config = engine.config
    check_divisibility(frames[0].height, frames[0].width, config)
    pooled_occ: Dict[int, np.ndarray] = {}
    if occupancy is not None:
        spec = occupancy.spec
        if spec is not None and tuple(spec.cell) != (config.pool_dh, config.pool_dw):
            logger.warning(
                "motion cell %s differs from pool window %dx%d; moved cells are partial windows",
                spec.cell, config.pool_dh, config.pool_dw,
            )
        grids = occupancy.pooled_occupancy(config.pool_dh, config.pool_dw)
        pooled_occ = {f.frame_index: grids[i] for i, f in enumerate(frames)}

    rows: List[FrameMetrics] = []
    samples: List[_RecallSample] = []
    recalls: List[float] = []
    for frame in frames:
        step = engine.process(frame)
        bank = snapshot_frames(engine.bank.state)
        recall, sample, moved, selected = 0.0, None, 0, 0
        if pooled_occ:
            recall, sample, moved, selected = _motion_recall(step, bank, pooled_occ, config.anchor)
        if sample is not None:
            samples.append(sample)
            recalls.append(recall)
        cost = step.attention.cost
        rows.append(FrameMetrics(
            frame_index=frame.frame_index,
            admitted=step.decision.admitted,
            reason=step.decision.reason.value,
            memory_tokens=step.selection.snapshot.total_tokens,
            compression_ratio=cost.compression_ratio,
            motion_recall=recall,
            mac_count=cost.mac_count,
            bank_frames=len(bank),
            moved_candidates=moved,
            selected_motion=selected,
        ))

    if seed is None:
        seed = occupancy.spec.seed if occupancy is not None and occupancy.spec is not None else 0
    baseline = uniform_recall_baseline(samples, baseline_draws, _rng(seed, BASELINE_STREAM))

    steady = [r for r in rows if r.bank_frames == config.bank_capacity]
    last = steady[-1] if steady else rows[-1]
    aggregate = RunAggregate(
        frames=len(rows),
        admitted=sum(r.admitted for r in rows),
        rejected_absent=sum(r.reason == 'rejected_absent' for r in rows),
        rejected_low_iou=sum(r.reason == 'rejected_low_iou' for r in rows),
        mean_ratio=float(np.mean([r.compression_ratio for r in rows])),
        mean_recall=float(np.mean(recalls)) if recalls else 0.0,
        baseline_recall=baseline,
        recall_frames=len(recalls),
        total_macs=sum(r.mac_count for r in rows),
        steady_state_frames=len(steady),
        steady_state_tokens=last.memory_tokens,
        steady_state_ratio=last.compression_ratio,
    )
    logger.info(
        "run: %d frames, steady-state %d tokens (ratio %.4f), recall %.3f vs baseline %.3f",
        aggregate.frames, aggregate.steady_state_tokens, aggregate.steady_state_ratio,
        aggregate.mean_recall, aggregate.baseline_recall,
    )
    return RunMetrics(frames=rows, aggregate=aggregate)
