"""
Binary Stream Format
====================

Little-endian, fixed-width feature stream files.

Header (20 bytes, struct "<4sIIHHI"):
  magic        4 bytes  b"MBS1"
  version      u32      1
  frame_count  u32
  h, w         u16 each
  c            u32

Frame record (h*w*c*4 + 8 bytes), repeated frame_count times:
  features       h*w*c float32, row-major (h, w, c)
  predicted_iou  float32
  object_present u8 (0/1)
  is_prompt      u8 (0/1)
  padding        2 zero bytes

Frame indices are record positions.
"""

import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from memshrink.foundation import FeatureFrame, StreamFormatError

logger = logging.getLogger(__name__)

MAGIC = b"MBS1"
VERSION = 1
HEADER = struct.Struct("<4sIIHHI")
TRAILER = struct.Struct("<fBB2x")
FEATURE_LE = np.dtype("<f4")

PathLike = Union[str, Path]


def record_size(h: int, w: int, c: int) -> int:
    return h * w * c * FEATURE_LE.itemsize + TRAILER.size


def file_size(frame_count: int, h: int, w: int, c: int) -> int:
    return HEADER.size + frame_count * record_size(h, w, c)


# ============================================================================
# WRITING
# ============================================================================

def write_header(fh: BinaryIO, frame_count: int, h: int, w: int, c: int):
    if h > 0xFFFF or w > 0xFFFF:
        raise StreamFormatError(f"grid {h}x{w} exceeds the u16 header fields")
    fh.write(HEADER.pack(MAGIC, VERSION, frame_count, h, w, c))


def write_frame(fh: BinaryIO, frame: FeatureFrame):
    fh.write(np.ascontiguousarray(frame.data, dtype=FEATURE_LE).tobytes())
    fh.write(TRAILER.pack(frame.predicted_iou, int(frame.object_present), int(frame.is_prompt)))


def write_stream(path: PathLike, frames: Sequence[FeatureFrame]) -> int:
    """
    Serialize frames to path

    Returns: number of bytes written

    Raises:
        StreamFormatError: empty stream or frames with differing dims
    """
    frames = list(frames)
    if not frames:
        raise StreamFormatError("cannot write an empty stream")
    dims = frames[0].dims
    if any(f.dims != dims for f in frames):
        raise StreamFormatError("all frames of a stream must share (h, w, c)")
    with open(path, "wb") as fh:
        write_header(fh, len(frames), *dims)
        for frame in frames:
            write_frame(fh, frame)
    size = file_size(len(frames), *dims)
    logger.info("wrote %d frames (%d bytes) to %s", len(frames), size, path)
    return size


def write_meta(path: PathLike, meta: dict) -> Path:
    """Write the <stream>.meta.json sidecar next to path"""
    meta_path = meta_path_for(path)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta_path


def meta_path_for(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


# ============================================================================
# READING
# ============================================================================

def read_header(fh: BinaryIO) -> Tuple[int, int, int, int]:
    """
    Read and check the header

    Returns: (frame_count, h, w, c)

    Raises:
        StreamFormatError: short header, bad magic or unknown version
    """
    raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise StreamFormatError(f"header truncated: {len(raw)} of {HEADER.size} bytes")
    magic, version, frame_count, h, w, c = HEADER.unpack(raw)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    if min(h, w, c) < 1:
        raise StreamFormatError(f"header dims must be positive, got {h}x{w}x{c}")
    return frame_count, h, w, c


def iter_frames(path: PathLike) -> Iterator[FeatureFrame]:
    """
    Stream frames from a file one record at a time

    Raises:
        StreamFormatError: malformed header, size mismatch, truncated
                           record or flag bytes other than 0/1
    """
    with open(path, "rb") as fh:
        frame_count, h, w, c = read_header(fh)
        expected = file_size(frame_count, h, w, c)
        actual = Path(path).stat().st_size
        if actual != expected:
            raise StreamFormatError(
                f"file is {actual} bytes, header implies {expected} "
                f"({frame_count} frames of {h}x{w}x{c})"
            )
        n_values = h * w * c
        for index in range(frame_count):
            payload = fh.read(n_values * FEATURE_LE.itemsize)
            trailer = fh.read(TRAILER.size)
            if len(trailer) != TRAILER.size:
                raise StreamFormatError(f"frame {index} truncated")
            iou, present, prompt = TRAILER.unpack(trailer)
            if present > 1 or prompt > 1:
                raise StreamFormatError(f"frame {index}: flag bytes must be 0 or 1")
            yield FeatureFrame(
                frame_index=index,
                height=h,
                width=w,
                channels=c,
                data=np.frombuffer(payload, dtype=FEATURE_LE).astype(np.float32),
                predicted_iou=float(iou),
                object_present=bool(present),
                is_prompt=bool(prompt),
            )


def read_stream(path: PathLike) -> List[FeatureFrame]:
    return list(iter_frames(path))


def read_meta(path: PathLike) -> Optional[dict]:
    """Sidecar metadata for a stream file, or None when absent"""
    meta_path = meta_path_for(path)
    if not meta_path.exists():
        return None
    try:
        return json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise StreamFormatError(f"{meta_path}: {e}")
