"""
Memshrink - Engine
==================

Integrates all layers into one streaming memory engine.

Architecture:
- Layer 1: Foundation (types, config, validation)
- Layer 2: Structure (spatial pooling)
- Memory bank (quality-gated FIFO)
- Layer 3: Relational (temporal token selection)
- Layer 4: Contextual (cross-attention and cost accounting)

Per frame: pool -> gate/admit -> assemble memory -> cross-attend.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from memshrink.bank import AdmissionDecision, MemoryBank
from memshrink.contextual import AttentionOutput, cross_attend
from memshrink.foundation import (
    CompressedFrame, ConfigError, DimsMismatch, EngineConfig, FeatureFrame, validate_frame,
)
from memshrink.relational import SelectionResult, assemble_memory
from memshrink.structure import pool_frame

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FrameStep:
    """Everything the engine produced for one frame"""
    frame_index: int
    decision: AdmissionDecision
    pooled: CompressedFrame
    selection: SelectionResult
    attention: AttentionOutput


class MemoryEngine:
    """
    Streaming memory engine for one video stream

    The first frame pins (h, w, c); later frames must match. Frames are
    processed strictly in order.
    """

    def __init__(self, config: Optional[EngineConfig] = None):
        """
        Args:
            config: Engine configuration; defaults to the headline setting

        Raises:
            ConfigError: if the config is invalid
        """
        self.config = (config or EngineConfig.load_defaults()).validate()
        self.bank = MemoryBank(self.config)
        self.dims: Optional[Tuple[int, int, int]] = None

    def reset(self):
        self.bank.reset()
        self.dims = None

    def _check_channels(self, channels: int):
        # three even sin/cos groups, one per (frame, row, col) axis
        if self.config.position_encoding and (channels < 6 or channels % 2):
            raise ConfigError(
                f"position encoding needs even channels >= 6, stream has {channels}; "
                "disable position_encoding for this stream"
            )

    def process(self, frame: FeatureFrame) -> FrameStep:
        """
        Run one frame through the full pipeline

        Returns:
            FrameStep with the admission decision, the assembled memory
            and the cross-attention of this frame's pooled tokens over it

        Raises:
            ConfigError: position encoding on with channels it cannot split
            DimsMismatch, PoolingDivisibility, DimensionMismatch,
            IouOutOfRange, GtAlreadySet, MissingGtFrame, OutOfOrderFrame
        """
        validate_frame(frame, self.config)
        if self.dims is None:
            self._check_channels(frame.channels)
            self.dims = frame.dims
        elif frame.dims != self.dims:
            raise DimsMismatch(f"frame {frame.frame_index}: dims {frame.dims} != stream dims {self.dims}")

        pooled = pool_frame(frame, self.config)
        decision = self.bank.admit(frame, pooled)
        selection = assemble_memory(self.bank.frames(), self.config)
        attention = cross_attend(pooled, selection.snapshot, self.config)
        return FrameStep(
            frame_index=frame.frame_index,
            decision=decision,
            pooled=pooled,
            selection=selection,
            attention=attention,
        )

    def describe(self) -> dict:
        """
        Layer structure and current configuration

        Returns:
            Dictionary describing each layer and the active config
        """
        state = self.bank.state
        return {
            "engine": "memshrink",
            "layers": [
                {"name": "foundation", "description": "Frames, tokens, snapshots, config, validation"},
                {"name": "structure", "description": "Windowed average/max pooling per frame"},
                {"name": "bank", "description": "GT retention, absence/IoU gating, FIFO eviction"},
                {"name": "relational", "description": "Cosine-similarity top-n token selection"},
                {"name": "contextual", "description": "Cross-attention with 3-axis PE, MAC accounting"},
            ],
            "config": self.config.to_dict(),
            "bank": {
                "frames": state.frame_count,
                "motion_indices": state.motion_indices,
                "admitted": state.admitted_count,
                "rejected_absent": state.rejected_absent_count,
                "rejected_low_iou": state.rejected_iou_count,
            },
        }
