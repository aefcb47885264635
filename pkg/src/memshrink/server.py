"""
Memshrink MCP Server
====================

FastMCP server over the memory engine. Tools return JSON strings.

Usage:
    # As MCP server (stdio)
    memshrink-mcp
    python -m memshrink.server
"""

import json
from dataclasses import replace
from typing import Optional

from fastmcp import FastMCP

from memshrink import __version__
from memshrink.contextual import cost_table
from memshrink.engine import MemoryEngine
from memshrink.foundation import EngineConfig
from memshrink.harness import generate_stream, run_pipeline
from memshrink.oracles import oracle_suite
from memshrink.presets import list_presets as preset_catalogue, preset, ratio_label
from memshrink.scenario import load_scenario

mcp = FastMCP("memshrink")


def _config(config_json: Optional[str], preset_name: Optional[str]) -> EngineConfig:
    config = preset(preset_name) if preset_name else EngineConfig.load_defaults()
    if config_json:
        overrides = json.loads(config_json)
        EngineConfig.from_dict(overrides)  # rejects unknown keys
        config = replace(config, **overrides)
    return config.validate()


def _error(e: Exception) -> str:
    return json.dumps({
        'error': str(e),
        'error_type': type(e).__name__
    }, indent=2)


# ============================================================================
# MCP TOOLS
# ============================================================================

@mcp.tool()
def compute_cost_table(
    height: int = 64,
    width: int = 64,
    channels: int = 16,
    t_actual: int = 7,
    config_json: Optional[str] = None,
    preset_name: Optional[str] = None,
) -> str:
    """
    Closed-form memory token and attention cost for every temporal strategy.

    Args:
        height, width: Feature grid before pooling
        channels: Feature width c
        t_actual: Frames in the bank, GT included
        config_json: Optional JSON object of EngineConfig overrides
        preset_name: Optional preset to start from (see list_presets)

    Returns:
        JSON with one entry per strategy: memory_tokens, baseline_tokens,
        mac_count, flop_misc, compression_ratio and the ratio label
        ("14:1", "28:3", ...)

    Cost: 0 tokens (pure arithmetic)
    """
    try:
        config = _config(config_json, preset_name)
        table = cost_table(config, height, width, t_actual, channels)
        return json.dumps({
            'config': config.to_dict(),
            'dims': {'height': height, 'width': width, 'channels': channels, 't_actual': t_actual},
            'strategies': {
                name: {**report.to_dict(), 'label': ratio_label(report)}
                for name, report in table.items()
            },
        }, indent=2)
    except Exception as e:
        return _error(e)


@mcp.tool()
def run_scenario(
    scenario_json: str = "{}",
    config_json: Optional[str] = None,
    preset_name: Optional[str] = None,
    baseline_draws: int = 1000,
    include_frames: bool = False,
) -> str:
    """
    Generate a synthetic stream and run the engine over it.

    Args:
        scenario_json: JSON object of scenario fields (h, w, c, frame_count,
            seed, blob, noise_sigma, occlusion_windows, iou_schedule, ...);
            missing fields take the 64x64x16, 40-frame defaults
        config_json: Optional JSON object of EngineConfig overrides
        preset_name: Optional preset to start from
        baseline_draws: Monte-Carlo draws for the uniform-selection baseline
        include_frames: Also return the per-frame rows

    Returns:
        JSON with config (AUTO budget expanded), aggregate metrics and,
        optionally, per-frame metrics
    """
    try:
        spec = load_scenario(json.loads(scenario_json))
        config = _config(config_json, preset_name)
        metrics = run_pipeline(generate_stream(spec), config, baseline_draws=baseline_draws)
        result = {
            'scenario': spec.to_dict(),
            'config': config.resolved(spec.h, spec.w).to_dict(),
            'aggregate': metrics.to_dict()['aggregate'],
        }
        if include_frames:
            result['frames'] = metrics.to_dict()['frames']
        return json.dumps(result, indent=2)
    except Exception as e:
        return _error(e)


@mcp.tool()
def run_oracles(instances: Optional[int] = None, seed: int = 0) -> str:
    """
    Check pooling, selection, bank, attention and cost kernels against
    brute-force oracles.

    Args:
        instances: Instances per check (None: 200/500/100/50/100)
        seed: Instance generator seed

    Returns:
        JSON report with per-check mismatches and max deviations
    """
    try:
        return json.dumps(oracle_suite(instances=instances, seed=seed).to_dict(), indent=2)
    except Exception as e:
        return _error(e)


@mcp.tool()
def list_presets() -> str:
    """
    Named ablation presets usable as preset_name.

    Returns:
        JSON list of {name, group, description, config}
    """
    return json.dumps([
        {**entry, 'config': preset(entry['name']).to_dict()}
        for entry in preset_catalogue()
    ], indent=2)


@mcp.tool()
def validate_config(config_json: str) -> str:
    """
    Validate EngineConfig overrides without running anything.

    Returns:
        JSON with:
        - valid: Boolean
        - errors: List of error messages (empty if valid)
    """
    try:
        config = EngineConfig.from_dict(json.loads(config_json))
        errors = config.config_errors()
        return json.dumps({
            'valid': len(errors) == 0,
            'errors': errors,
        }, indent=2)
    except Exception as e:
        return json.dumps({
            'valid': False,
            'errors': [f'Parse error: {str(e)}'],
            'error_type': type(e).__name__
        }, indent=2)


@mcp.tool()
def get_server_info() -> str:
    """
    Server capabilities, version and engine layers.
    """
    return json.dumps({
        'name': 'Memshrink MCP Server',
        'version': __version__,
        'description': 'Streaming memory-token compression for video-segmentation memory banks',
        'engine': MemoryEngine().describe(),
        'temporal_strategies': [
            'topn_select', 'no_tmc', 'gt_plus_last', 'first_plus_last',
            'moving_average', 'retain_gt_first_last',
        ],
        'available_tools': [
            'compute_cost_table',
            'run_scenario',
            'run_oracles',
            'list_presets',
            'validate_config',
            'get_server_info',
        ],
    }, indent=2)


def main():
    mcp.run()


if __name__ == "__main__":
    main()
