"""
Scenario Schema
===============

Input schema for synthetic feature streams.

A scenario describes a static seeded background texture, per-frame
Gaussian noise and one blob moving toroidally over a grid of motion
cells, plus the quality signals (occlusions, predicted IoU) fed to
the memory bank.

Two tiers of input:
  Bare:  h, w, c, frame_count, seed
  Full:  + blob, noise_sigma, occlusion_windows, iou_schedule, ...
"""

from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Tuple, Union

from memshrink.foundation import ScenarioError


# ============================================================================
# SCHEMA
# ============================================================================

@dataclass(frozen=True)
class BlobSpec:
    """
    Moving blob, in motion-cell units

    A cell is inside when its toroidal distance from the centre is at
    most radius. Centre of frame k is start + k * velocity (mod grid);
    start defaults to the grid centre.
    """
    radius: int = 3
    velocity: Tuple[int, int] = (1, 1)
    amplitude: float = 1.0
    start: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete synthetic stream description"""
    h: int = 64
    w: int = 64
    c: int = 16
    frame_count: int = 40
    seed: int = 42
    blob: BlobSpec = field(default_factory=BlobSpec)
    noise_sigma: float = 0.1
    occlusion_windows: Tuple[Tuple[int, int], ...] = ()  # inclusive
    iou_schedule: Union[float, Tuple[float, ...]] = 0.9
    background_amplitude: float = 1.0
    cell: Tuple[int, int] = (2, 2)  # motion-cell size on the feature grid

    @property
    def motion_grid(self) -> Tuple[int, int]:
        return self.h // self.cell[0], self.w // self.cell[1]

    def iou_at(self, frame_index: int) -> float:
        if frame_index == 0:
            return 1.0
        schedule = self.iou_schedule
        if isinstance(schedule, (int, float)):
            return float(schedule)
        return float(schedule[(frame_index - 1) % len(schedule)])

    def occluded(self, frame_index: int) -> bool:
        if frame_index == 0:
            return False
        return any(start <= frame_index <= end for start, end in self.occlusion_windows)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out['blob']['velocity'] = list(self.blob.velocity)
        out['blob']['start'] = list(self.blob.start) if self.blob.start is not None else None
        out['occlusion_windows'] = [list(w) for w in self.occlusion_windows]
        out['cell'] = list(self.cell)
        if not isinstance(self.iou_schedule, (int, float)):
            out['iou_schedule'] = list(self.iou_schedule)
        return out


# ============================================================================
# PARSING
# ============================================================================

def _pair(value, name: str) -> Tuple[int, int]:
    try:
        a, b = value
        return int(a), int(b)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name} must be a pair of integers, got {value!r}")


def parse_scenario(data: Dict[str, Any]) -> ScenarioSpec:
    """
    Build a ScenarioSpec from a JSON dict

    Missing keys take the defaults of the headline scenario.

    Raises:
        ScenarioError: unknown keys or wrongly typed values
    """
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario must be a JSON object, got {type(data).__name__}")
    known = set(ScenarioSpec.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")

    blob_data = data.get('blob', {}) or {}
    if not isinstance(blob_data, dict):
        raise ScenarioError("blob must be a JSON object")
    unknown_blob = set(blob_data) - set(BlobSpec.__dataclass_fields__)
    if unknown_blob:
        raise ScenarioError(f"unknown blob keys: {sorted(unknown_blob)}")

    defaults = ScenarioSpec()
    blob_defaults = BlobSpec()
    try:
        blob = BlobSpec(
            radius=int(blob_data.get('radius', blob_defaults.radius)),
            velocity=_pair(blob_data.get('velocity', blob_defaults.velocity), 'blob.velocity'),
            amplitude=float(blob_data.get('amplitude', blob_defaults.amplitude)),
            start=_pair(blob_data['start'], 'blob.start') if blob_data.get('start') is not None else None,
        )
        schedule = data.get('iou_schedule', defaults.iou_schedule)
        if isinstance(schedule, (list, tuple)):
            schedule = tuple(float(x) for x in schedule)
        else:
            schedule = float(schedule)
        spec = ScenarioSpec(
            h=int(data.get('h', defaults.h)),
            w=int(data.get('w', defaults.w)),
            c=int(data.get('c', defaults.c)),
            frame_count=int(data.get('frame_count', defaults.frame_count)),
            seed=int(data.get('seed', defaults.seed)),
            blob=blob,
            noise_sigma=float(data.get('noise_sigma', defaults.noise_sigma)),
            occlusion_windows=tuple(
                _pair(win, 'occlusion_windows[]') for win in data.get('occlusion_windows', ())
            ),
            iou_schedule=schedule,
            background_amplitude=float(data.get('background_amplitude', defaults.background_amplitude)),
            cell=_pair(data.get('cell', defaults.cell), 'cell'),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario: {e}")
    return spec


# ============================================================================
# VALIDATION
# ============================================================================

def validate_scenario(spec: ScenarioSpec) -> List[str]:
    """
    Validate a scenario

    Checks:
    - Positive dims and frame count, 64-bit seed
    - Motion cell divides the grid
    - Non-negative radius, noise and background
    - IoU values in [0, 1], well-ordered occlusion windows

    Returns: List of error messages (empty if valid)
    """
    errors = []
    for name in ('h', 'w', 'c', 'frame_count'):
        if getattr(spec, name) < 1:
            errors.append(f"{name} must be positive, got {getattr(spec, name)}")
    if not (0 <= spec.seed < 2 ** 64):
        errors.append(f"seed must fit in 64 unsigned bits, got {spec.seed}")
    ch, cw = spec.cell
    if ch < 1 or cw < 1:
        errors.append(f"cell must be positive, got {spec.cell}")
    elif spec.h % ch or spec.w % cw:
        errors.append(f"cell {ch}x{cw} does not divide grid {spec.h}x{spec.w}")
    if spec.blob.radius < 0:
        errors.append(f"blob.radius must be >= 0, got {spec.blob.radius}")
    if spec.noise_sigma < 0:
        errors.append(f"noise_sigma must be >= 0, got {spec.noise_sigma}")
    if spec.background_amplitude < 0:
        errors.append(f"background_amplitude must be >= 0, got {spec.background_amplitude}")

    schedule = spec.iou_schedule
    values = [schedule] if isinstance(schedule, (int, float)) else list(schedule)
    if not values:
        errors.append("iou_schedule must not be empty")
    bad = [v for v in values if not (0.0 <= v <= 1.0)]
    if bad:
        errors.append(f"iou_schedule values outside [0, 1]: {bad}")

    for start, end in spec.occlusion_windows:
        if start > end or start < 0:
            errors.append(f"occlusion window ({start}, {end}) is not a valid inclusive range")

    return errors


def load_scenario(data: Dict[str, Any]) -> ScenarioSpec:
    """parse_scenario + validate_scenario, raising on any problem"""
    spec = parse_scenario(data)
    errors = validate_scenario(spec)
    if errors:
        raise ScenarioError(f"Invalid scenario: {'; '.join(errors)}")
    return spec


# ============================================================================
# SAMPLES
# ============================================================================

def create_default_scenario() -> ScenarioSpec:
    """64x64x16, blob radius 3 moving (1, 1), sigma 0.1, seed 42, 40 frames"""
    return ScenarioSpec()


def create_occlusion_scenario() -> ScenarioSpec:
    """Default scenario with the object absent in frames 10-15"""
    return ScenarioSpec(occlusion_windows=((10, 15),))


def create_static_scenario() -> ScenarioSpec:
    """Noise-free stream with a motionless blob"""
    return ScenarioSpec(blob=BlobSpec(velocity=(0, 0)), noise_sigma=0.0)
