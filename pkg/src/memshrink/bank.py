"""
Memshrink - Memory Bank
=======================

Quality-gated streaming memory. The prompted (GT) frame is retained
permanently; motion frames are admitted only when the object is present
and the predicted IoU clears the threshold, and are evicted
first-in-first-out beyond t - 1 entries.

Rejected frames do not advance the recency window.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple

from memshrink.foundation import (
    CompressedFrame, DimsMismatch, EngineConfig, FeatureFrame,
    GtAlreadySet, OutOfOrderFrame,
)

logger = logging.getLogger(__name__)


class AdmissionReason(str, Enum):
    ADMITTED_GT = "admitted_gt"
    ADMITTED_MOTION = "admitted_motion"
    REJECTED_ABSENT = "rejected_absent"
    REJECTED_LOW_IOU = "rejected_low_iou"


@dataclass(frozen=True)
class AdmissionDecision:
    """Outcome of offering one frame to the bank"""
    admitted: bool
    reason: AdmissionReason
    evicted_frame_index: Optional[int] = None


@dataclass(frozen=True, eq=False)
class BankState:
    """
    Immutable bank contents

    motion_entries are oldest first with strictly increasing frame
    indices; gt_entry, once set, is never replaced.
    """
    gt_entry: Optional[CompressedFrame] = None
    motion_entries: Tuple[CompressedFrame, ...] = ()
    admitted_count: int = 0
    rejected_absent_count: int = 0
    rejected_iou_count: int = 0

    @property
    def pinned_dims(self) -> Optional[Tuple[int, int, int]]:
        if self.gt_entry is not None:
            return self.gt_entry.dims
        if self.motion_entries:
            return self.motion_entries[0].dims
        return None

    @property
    def motion_indices(self) -> List[int]:
        return [f.frame_index for f in self.motion_entries]

    @property
    def frame_count(self) -> int:
        return len(self.motion_entries) + (1 if self.gt_entry is not None else 0)


# ============================================================================
# GATING
# ============================================================================

def gate_check(frame: FeatureFrame, config: EngineConfig) -> AdmissionDecision:
    """
    Preview the admission decision without touching any state

    Gates, in order: prompted frames bypass both; absence filter
    (object_present false); IoU gate (predicted_iou < threshold).
    The threshold itself is admitted.
    """
    if frame.is_prompt:
        return AdmissionDecision(True, AdmissionReason.ADMITTED_GT)
    if config.absence_filter and not frame.object_present:
        return AdmissionDecision(False, AdmissionReason.REJECTED_ABSENT)
    if config.iou_gate and frame.predicted_iou < config.iou_threshold:
        return AdmissionDecision(False, AdmissionReason.REJECTED_LOW_IOU)
    return AdmissionDecision(True, AdmissionReason.ADMITTED_MOTION)


# ============================================================================
# ADMISSION
# ============================================================================

def admit(
    state: BankState,
    frame: FeatureFrame,
    pooled: CompressedFrame,
    config: EngineConfig,
) -> Tuple[BankState, AdmissionDecision]:
    """
    Offer one frame to the bank

    Args:
        state: Current bank state (not modified)
        frame: Source frame, supplies the quality signals
        pooled: Pooled tokens of frame
        config: Gate switches, threshold and capacity t

    Returns:
        (new state, decision)

    Raises:
        GtAlreadySet: second prompted frame
        DimsMismatch: pooled dims differ from the bank's pinned dims
        OutOfOrderFrame: frame index not after the newest entry
    """
    pinned = state.pinned_dims
    if pinned is not None and pooled.dims != pinned:
        raise DimsMismatch(f"frame {frame.frame_index}: pooled dims {pooled.dims} != bank dims {pinned}")
    newest = state.motion_entries[-1].frame_index if state.motion_entries else (
        state.gt_entry.frame_index if state.gt_entry is not None else -1
    )
    if frame.frame_index <= newest:
        raise OutOfOrderFrame(f"frame {frame.frame_index} arrived after frame {newest}")

    decision = gate_check(frame, config)

    if decision.reason == AdmissionReason.ADMITTED_GT:
        if state.gt_entry is not None:
            raise GtAlreadySet(
                f"frame {frame.frame_index}: GT already set by frame {state.gt_entry.frame_index}"
            )
        new_state = replace(state, gt_entry=pooled, admitted_count=state.admitted_count + 1)
    elif decision.reason == AdmissionReason.REJECTED_ABSENT:
        new_state = replace(state, rejected_absent_count=state.rejected_absent_count + 1)
    elif decision.reason == AdmissionReason.REJECTED_LOW_IOU:
        new_state = replace(state, rejected_iou_count=state.rejected_iou_count + 1)
    else:
        entries = state.motion_entries + (pooled,)
        limit = max(config.bank_capacity - 1, 0)
        evicted = None
        if len(entries) > limit:
            evicted = entries[0].frame_index
            entries = entries[len(entries) - limit:] if limit else ()
            decision = replace(decision, evicted_frame_index=evicted)
        new_state = replace(state, motion_entries=entries, admitted_count=state.admitted_count + 1)

    logger.debug(
        "frame %d: %s%s", frame.frame_index, decision.reason.value,
        f" (evicted {decision.evicted_frame_index})" if decision.evicted_frame_index is not None else "",
    )
    return new_state, decision


def snapshot_frames(state: BankState) -> List[CompressedFrame]:
    """Bank frames in attention order: GT first, then motion oldest to newest"""
    frames = [state.gt_entry] if state.gt_entry is not None else []
    return frames + list(state.motion_entries)


class MemoryBank:
    """
    Single-writer streaming wrapper around BankState

    Snapshots are immutable and stay valid across later admissions.
    """

    def __init__(self, config: EngineConfig):
        self.config = config
        self.state = BankState()

    def admit(self, frame: FeatureFrame, pooled: CompressedFrame) -> AdmissionDecision:
        self.state, decision = admit(self.state, frame, pooled, self.config)
        return decision

    def frames(self) -> List[CompressedFrame]:
        return snapshot_frames(self.state)

    def reset(self):
        self.state = BankState()
