"""
Ablation Presets
================

Named engine configurations, one per ablation row: spatial pooling,
memory quality management, temporal compression and compression ratio.
Each preset is a set of overrides on the headline configuration.
"""

from dataclasses import replace
from fractions import Fraction
from typing import Any, Dict, List

from memshrink.contextual import CostAnalyzer, CostReport
from memshrink.foundation import ConfigError, EngineConfig


PRESETS: Dict[str, Dict[str, Any]] = {
    # Spatial
    'avg-pool': {
        'group': 'spatial',
        'description': '2x2 average pooling (headline)',
        'overrides': {'pooling_kind': 'average'},
    },
    'max-pool': {
        'group': 'spatial',
        'description': '2x2 max pooling',
        'overrides': {'pooling_kind': 'max'},
    },
    # Memory quality management
    'w/o-iou': {
        'group': 'quality',
        'description': 'Absence filter only, no IoU gate',
        'overrides': {'iou_gate': False},
    },
    'w/o-abs': {
        'group': 'quality',
        'description': 'IoU gate only, no absence filter',
        'overrides': {'absence_filter': False},
    },
    'w/o-abs-or-iou': {
        'group': 'quality',
        'description': 'Every frame admitted',
        'overrides': {'absence_filter': False, 'iou_gate': False},
    },
    'abs+iou': {
        'group': 'quality',
        'description': 'Absence filter and IoU gate (headline)',
        'overrides': {},
    },
    # Temporal
    'first+last': {
        'group': 'temporal',
        'description': 'Oldest and newest motion frames, no GT',
        'overrides': {'temporal_strategy': 'first_plus_last'},
    },
    'gt+last': {
        'group': 'temporal',
        'description': 'GT frame and newest motion frame',
        'overrides': {'temporal_strategy': 'gt_plus_last'},
    },
    'w/o-tmc': {
        'group': 'temporal',
        'description': 'Every pooled bank frame, no temporal selection',
        'overrides': {'temporal_strategy': 'no_tmc'},
    },
    'gt+frame': {
        'group': 'temporal',
        'description': 'Top-n against the GT frame, per-frame quotas',
        'overrides': {'anchor': 'gt', 'scope': 'per_frame'},
    },
    'prev+frame': {
        'group': 'temporal',
        'description': 'Top-n against the previous frame, per-frame quotas',
        'overrides': {'anchor': 'previous', 'scope': 'per_frame'},
    },
    'gt+global': {
        'group': 'temporal',
        'description': 'Top-n against the GT frame, ranked across frames',
        'overrides': {'anchor': 'gt', 'scope': 'global'},
    },
    'prev+global': {
        'group': 'temporal',
        'description': 'Top-n against the previous frame, ranked across frames (headline)',
        'overrides': {'anchor': 'previous', 'scope': 'global'},
    },
    # Compression ratio
    '28:1': {
        'group': 'ratio',
        'description': 'Bank averaged into a single frame',
        'overrides': {'temporal_strategy': 'moving_average'},
    },
    '14:1': {
        'group': 'ratio',
        'description': 'GT plus one frame worth of selected tokens (headline)',
        'overrides': {'temporal_strategy': 'topn_select'},
    },
    '28:3': {
        'group': 'ratio',
        'description': 'GT, oldest and newest motion frames',
        'overrides': {'temporal_strategy': 'retain_gt_first_last'},
    },
}


def preset(name: str) -> EngineConfig:
    """
    Engine configuration of a named preset

    Raises:
        ConfigError: unknown preset name
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return replace(EngineConfig.load_defaults(), **PRESETS[name]['overrides']).validate()


def list_presets() -> List[Dict[str, Any]]:
    return [
        {'name': name, 'group': entry['group'], 'description': entry['description']}
        for name, entry in PRESETS.items()
    ]


def ratio_label(report: CostReport) -> str:
    """
    Compression ratio as a reduced baseline:tokens label

    2048 of 28672 tokens renders as "14:1".
    """
    if report.memory_tokens == 0:
        return f"{report.baseline_tokens}:0"
    ratio = Fraction(report.baseline_tokens, report.memory_tokens)
    return f"{ratio.numerator}:{ratio.denominator}"


def preset_cost_table(height: int, width: int, channels: int,
                      t_actual: int = None) -> List[Dict[str, Any]]:
    """
    Closed-form cost of every preset at steady state

    Args:
        height, width, channels: Frame dims
        t_actual: Bank frames; defaults to each preset's capacity

    Returns:
        One row per preset: name, group, ratio label and CostReport fields
    """
    rows = []
    for name in PRESETS:
        config = preset(name)
        t = t_actual if t_actual is not None else config.bank_capacity
        report = CostAnalyzer.cost_of(config, height, width, t, channels=channels)
        rows.append({
            'preset': name,
            'group': PRESETS[name]['group'],
            'label': ratio_label(report),
            **report.to_dict(),
        })
    return rows
