"""
Command-line surface

    memshrink run    --scenario PATH | --stream PATH  [config flags] --out DIR
    memshrink gen    --scenario PATH --out STREAM [--seed N]
    memshrink oracle [--instances N] [--seed S]
    memshrink cost   [--height H --width W --channels C] [--capacity T] [--json]

Exit codes: 0 success, 1 oracle mismatch, 2 malformed input or IO
failure, 3 invalid configuration.

Set MEMSHRINK_LOG=error|info|debug for diagnostics on stderr.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from memshrink import __version__
from memshrink.foundation import (
    AUTO, Anchor, ConfigError, EngineConfig, FeatureFrame, MemshrinkError, PoolingDivisibility,
    PoolingKind, Scope, TemporalStrategy,
)
from memshrink.harness import (
    CSV_COLUMNS, RunMetrics, SyntheticStream, generate_stream, run_pipeline,
    scenario_occupancy,
)
from memshrink.oracles import oracle_suite
from memshrink.presets import PRESETS, preset, preset_cost_table
from memshrink.scenario import ScenarioSpec, load_scenario
from memshrink.stream_io import read_header, read_meta, read_stream, write_meta, write_stream

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ORACLE = 1
EXIT_INPUT = 2
EXIT_CONFIG = 3

LOG_LEVELS = {'error': logging.ERROR, 'info': logging.INFO, 'debug': logging.DEBUG}

STRATEGY_FLAGS = {
    'topn': TemporalStrategy.TOPN_SELECT,
    'no-tmc': TemporalStrategy.NO_TMC,
    'gt-last': TemporalStrategy.GT_PLUS_LAST,
    'first-last': TemporalStrategy.FIRST_PLUS_LAST,
    'moving-avg': TemporalStrategy.MOVING_AVERAGE,
    'gt-first-last': TemporalStrategy.RETAIN_GT_FIRST_LAST,
}
ANCHOR_FLAGS = {'prev': Anchor.PREVIOUS, 'gt': Anchor.GT}
SCOPE_FLAGS = {'global': Scope.GLOBAL, 'per-frame': Scope.PER_FRAME}
POOL_FLAGS = {'avg': PoolingKind.AVERAGE, 'max': PoolingKind.MAX}

REPORT_NAME = 'report.json'
FRAMES_NAME = 'frames.csv'


class InputError(MemshrinkError):
    """Unreadable or malformed CLI input"""


def configure_logging(env: Optional[Dict[str, str]] = None) -> int:
    """Attach a stderr handler to the memshrink logger at MEMSHRINK_LOG level"""
    env = os.environ if env is None else env
    level = LOG_LEVELS.get(env.get('MEMSHRINK_LOG', 'error').strip().lower(), logging.ERROR)
    root = logging.getLogger('memshrink')
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        root.addHandler(handler)
    root.setLevel(level)
    return level


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='memshrink',
        description='Streaming memory-token compression engine',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run the engine over a scenario or stream file')
    source = run.add_mutually_exclusive_group()
    source.add_argument('--scenario', help='Scenario JSON file')
    source.add_argument('--stream', help='Binary feature stream (MBS1)')
    run.add_argument('--out', default='out', help='Report directory (default: out)')
    run.add_argument('--preset', choices=sorted(PRESETS), help='Start from a named preset')
    run.add_argument('--strategy', choices=list(STRATEGY_FLAGS))
    run.add_argument('--anchor', choices=list(ANCHOR_FLAGS))
    run.add_argument('--scope', choices=list(SCOPE_FLAGS))
    run.add_argument('--pool', choices=list(POOL_FLAGS))
    run.add_argument('--pool-size', metavar='HxW')
    run.add_argument('--budget', metavar='N|auto')
    run.add_argument('--capacity', type=int, metavar='T')
    run.add_argument('--iou-threshold', type=float, metavar='F')
    run.add_argument('--no-absence-filter', action='store_true')
    run.add_argument('--no-iou-gate', action='store_true')
    run.add_argument('--no-pe', action='store_true')
    run.add_argument('--seed', type=int, help='Scenario seed override / baseline seed')
    run.add_argument('--baseline-draws', type=int, default=1000, metavar='N')
    run.add_argument('--print-config', action='store_true',
                     help='Print the resolved config and exit')

    gen = sub.add_parser('gen', help='Serialize a scenario to a stream file')
    gen.add_argument('--scenario', required=True)
    gen.add_argument('--out', required=True, help='Output stream path')
    gen.add_argument('--seed', type=int)

    oracle = sub.add_parser('oracle', help='Check kernels against brute-force oracles')
    oracle.add_argument('--instances', type=int, help='Instances per check')
    oracle.add_argument('--seed', type=int, default=0)

    cost = sub.add_parser('cost', help='Closed-form cost table for every preset')
    cost.add_argument('--height', type=int, default=64)
    cost.add_argument('--width', type=int, default=64)
    cost.add_argument('--channels', type=int, default=16)
    cost.add_argument('--capacity', type=int, metavar='T')
    cost.add_argument('--json', action='store_true')
    return parser


# ============================================================================
# CONFIG FROM FLAGS
# ============================================================================

def _parse_pool_size(text: str) -> Tuple[int, int]:
    try:
        dh, dw = text.lower().split('x')
        return int(dh), int(dw)
    except ValueError:
        raise ConfigError(f"--pool-size must look like HxW, got {text!r}")


def _parse_budget(text: str):
    if text.strip().lower() == AUTO:
        return AUTO
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"--budget must be a positive integer or 'auto', got {text!r}")


def config_from_args(args: argparse.Namespace) -> EngineConfig:
    """
    EngineConfig from a preset (or the defaults) plus explicit flags

    Raises:
        ConfigError
    """
    config = preset(args.preset) if args.preset else EngineConfig.load_defaults()
    overrides = {}
    if args.strategy:
        overrides['temporal_strategy'] = STRATEGY_FLAGS[args.strategy]
    if args.anchor:
        overrides['anchor'] = ANCHOR_FLAGS[args.anchor]
    if args.scope:
        overrides['scope'] = SCOPE_FLAGS[args.scope]
    if args.pool:
        overrides['pooling_kind'] = POOL_FLAGS[args.pool]
    if args.pool_size:
        overrides['pool_dh'], overrides['pool_dw'] = _parse_pool_size(args.pool_size)
    if args.budget is not None:
        overrides['selection_budget'] = _parse_budget(args.budget)
    if args.capacity is not None:
        overrides['bank_capacity'] = args.capacity
    if args.iou_threshold is not None:
        overrides['iou_threshold'] = args.iou_threshold
    if args.no_absence_filter:
        overrides['absence_filter'] = False
    if args.no_iou_gate:
        overrides['iou_gate'] = False
    if args.no_pe:
        overrides['position_encoding'] = False
    return replace(config, **overrides).validate()


# ============================================================================
# INPUT
# ============================================================================

def load_scenario_file(path: str, seed: Optional[int] = None) -> ScenarioSpec:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read scenario {path}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise InputError(f"scenario {path} is not valid JSON: {e}")
    spec = load_scenario(data)
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec


def load_stream_file(path: str) -> Union[SyntheticStream, List[FeatureFrame]]:
    """
    Frames of a stream file, with ground-truth occupancy rebuilt from the
    <stream>.meta.json sidecar when it describes the same stream
    """
    try:
        frames = read_stream(path)
        meta = read_meta(path)
    except OSError as e:
        raise InputError(f"cannot read stream {path}: {e.strerror or e}")
    if not (meta and isinstance(meta.get('scenario'), dict)):
        return frames
    spec = load_scenario(meta['scenario'])
    if not frames or (spec.h, spec.w, spec.c, spec.frame_count) != (*frames[0].dims, len(frames)):
        logger.warning("%s: sidecar scenario does not match the stream; recall disabled", path)
        return frames
    return SyntheticStream(frames=frames, occupancy=scenario_occupancy(spec), spec=spec)


def _input_dims(args: argparse.Namespace) -> Optional[Tuple[int, int]]:
    if args.scenario:
        spec = load_scenario_file(args.scenario, args.seed)
        return spec.h, spec.w
    if args.stream:
        try:
            with open(args.stream, 'rb') as fh:
                _, h, w, _ = read_header(fh)
        except OSError as e:
            raise InputError(f"cannot read stream {args.stream}: {e.strerror or e}")
        return h, w
    return None


# ============================================================================
# OUTPUT
# ============================================================================

def _csv_value(value):
    if isinstance(value, bool):
        return int(value)
    return value


def write_report(out_dir: Path, config: EngineConfig, metrics: RunMetrics) -> Path:
    """Write report.json and frames.csv into out_dir"""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / FRAMES_NAME, 'w', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for row in metrics.frames:
            writer.writerow([_csv_value(getattr(row, col)) for col in CSV_COLUMNS])
    report = {
        'config': config.to_dict(),
        'aggregate': metrics.to_dict()['aggregate'],
        'frames_path': FRAMES_NAME,
    }
    report_path = out_dir / REPORT_NAME
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + '\n')
    logger.info("wrote %s and %s", report_path, out_dir / FRAMES_NAME)
    return report_path


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)

    if args.print_config:
        dims = _input_dims(args)
        shown = config.resolved(*dims) if dims else config
        print(json.dumps(shown.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    if not (args.scenario or args.stream):
        raise InputError("run needs --scenario or --stream")
    if args.scenario:
        stream = generate_stream(load_scenario_file(args.scenario, args.seed))
    else:
        stream = load_stream_file(args.stream)

    frames = stream.frames if isinstance(stream, SyntheticStream) else stream
    if not frames:
        raise InputError("stream has no frames")
    metrics = run_pipeline(
        stream,
        config,
        baseline_draws=args.baseline_draws,
        seed=args.seed,
    )
    h, w, _ = frames[0].dims
    write_report(Path(args.out), config.resolved(h, w), metrics)
    agg = metrics.aggregate
    print(
        f"{agg.frames} frames, steady-state {agg.steady_state_tokens} tokens "
        f"(ratio {agg.steady_state_ratio:.4f}), recall {agg.mean_recall:.3f} "
        f"vs baseline {agg.baseline_recall:.3f}"
    )
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    spec = load_scenario_file(args.scenario, args.seed)
    stream = generate_stream(spec)
    try:
        size = write_stream(args.out, stream.frames)
        write_meta(args.out, {'format': 'MBS1', 'version': 1, 'scenario': spec.to_dict()})
    except OSError as e:
        raise InputError(f"cannot write {args.out}: {e.strerror or e}")
    print(f"wrote {len(stream.frames)} frames ({size} bytes) to {args.out}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.instances is not None and args.instances < 0:
        raise InputError("--instances must be >= 0")
    report = oracle_suite(instances=args.instances, seed=args.seed)
    for check in report.checks:
        status = 'PASS' if check.passed else 'FAIL'
        print(
            f"{check.name:<10} {status}  instances={check.instances} "
            f"mismatches={check.mismatches} max_deviation={check.max_deviation:.3g}"
        )
        for note in check.notes:
            print(f"    {note}")
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_cost(args: argparse.Namespace) -> int:
    rows = preset_cost_table(args.height, args.width, args.channels, args.capacity)
    if args.json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    print(f"{'preset':<16}{'group':<10}{'ratio':>8}{'tokens':>10}{'baseline':>10}{'macs':>14}")
    for row in rows:
        print(
            f"{row['preset']:<16}{row['group']:<10}{row['label']:>8}"
            f"{row['memory_tokens']:>10}{row['baseline_tokens']:>10}{row['mac_count']:>14}"
        )
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'gen': cmd_gen,
    'oracle': cmd_oracle,
    'cost': cmd_cost,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PoolingDivisibility) as e:
        print(f"memshrink: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MemshrinkError as e:
        print(f"memshrink: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"memshrink: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
