"""
Memshrink - Structure Layer
===========================

Layer 2: Structure (Deterministic)
Spatial memory compression: windowed average or max pooling of one
frame's (h, w, c) feature grid down to (h/dh, w/dw, c).

Pooling is applied once per frame, at admission time.
"""

import numpy as np

from memshrink.foundation import (
    CompressedFrame, EngineConfig, FeatureFrame, PoolingKind,
    check_divisibility, validate_frame,
)


def pooled_token_count(height: int, width: int, config: EngineConfig) -> int:
    """
    Tokens per frame after pooling: h*w / (dh*dw)

    Raises:
        PoolingDivisibility: if the window does not divide the grid
    """
    check_divisibility(height, width, config)
    return (height // config.pool_dh) * (width // config.pool_dw)


def pool_grid(grid: np.ndarray, dh: int, dw: int, kind: PoolingKind) -> np.ndarray:
    """
    Pool an (h, w, c) array with a non-overlapping dh x dw window

    Average divides the float64 window sum by dh*dw exactly; max is exact.

    Returns: (h/dh, w/dw, c) float32 array
    """
    h, w, c = grid.shape
    windows = grid.reshape(h // dh, dh, w // dw, dw, c)
    if kind == PoolingKind.MAX:
        pooled = windows.max(axis=(1, 3))
    else:
        pooled = windows.astype(np.float64).sum(axis=(1, 3)) / (dh * dw)
    return pooled.astype(np.float32)


def pool_frame(frame: FeatureFrame, config: EngineConfig) -> CompressedFrame:
    """
    Compress one frame spatially

    Args:
        frame: Feature frame (validated here)
        config: Supplies the window size and pooling kind

    Returns:
        CompressedFrame with the GT flag copied from frame.is_prompt

    Raises:
        PoolingDivisibility, DimensionMismatch, IouOutOfRange
    """
    validate_frame(frame, config)
    dh, dw = config.pool_dh, config.pool_dw
    tokens = pool_grid(frame.grid, dh, dw, config.pooling_kind)
    return CompressedFrame(
        frame_index=frame.frame_index,
        pooled_height=frame.height // dh,
        pooled_width=frame.width // dw,
        channels=frame.channels,
        tokens=tokens,
        is_gt=frame.is_prompt,
    )


if __name__ == "__main__":
    print("Testing Structure Layer...")

    config = EngineConfig.load_defaults()
    grid = np.arange(4 * 4 * 2, dtype=np.float32).reshape(4, 4, 2)

    print("\n1. Average pooling...")
    pooled = pool_grid(grid, 2, 2, PoolingKind.AVERAGE)
    print(f"   ✓ {grid.shape} -> {pooled.shape}")
    print(f"   ✓ Mean preserved: {np.isclose(pooled.mean(), grid.mean())}")

    print("\n2. Max pooling...")
    pooled = pool_grid(grid, 2, 2, PoolingKind.MAX)
    print(f"   ✓ Top-left window max: {pooled[0, 0].tolist()}")

    print("\n3. Token count at 64x64...")
    print(f"   ✓ {pooled_token_count(64, 64, config)} tokens per frame")
