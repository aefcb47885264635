"""
Memshrink
=========

Streaming memory-token compression for a video-segmentation memory bank.

Per frame:
  Structure   - pool the (h, w, c) feature grid by a dh x dw window
  Bank        - keep the prompted GT frame; gate motion frames on object
                presence and predicted IoU; FIFO beyond t - 1 entries
  Relational  - score motion tokens against their anchor (previous or GT)
                and keep the n least similar
  Contextual  - cross-attend the current frame over [GT tokens, selected
                tokens] with 3-axis positional codes; exact cost accounting

Entry points:
  MemoryEngine       - one stream, frame by frame
  run_pipeline       - synthetic or file streams end to end, with metrics
  memshrink (CLI)    - run / gen / oracle / cost
  memshrink-mcp      - FastMCP tool server
"""

__version__ = "1.0.0"

from memshrink.foundation import (
    # Errors
    MemshrinkError, ConfigError, ScenarioError, StreamFormatError,
    # Enums and constants
    AUTO, Anchor, PoolingKind, Scope, TemporalStrategy,
    # Core types
    FeatureFrame, CompressedFrame, TokenCoord, ScoredToken, MemorySnapshot,
    EngineConfig, validate_frame,
)
from memshrink.structure import pool_frame, pool_grid, pooled_token_count
from memshrink.relational import (
    ScoreTable, SelectionResult, assemble_memory, select_topn, similarity_scores,
)
from memshrink.bank import AdmissionDecision, AdmissionReason, BankState, MemoryBank, admit
from memshrink.contextual import CostAnalyzer, CostReport, cost_of, cost_table, cross_attend
from memshrink.engine import FrameStep, MemoryEngine
from memshrink.scenario import (
    BlobSpec, ScenarioSpec, load_scenario,
    create_default_scenario, create_occlusion_scenario, create_static_scenario,
)
from memshrink.harness import RunMetrics, generate_stream, run_pipeline
