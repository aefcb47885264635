"""
Oracle Suite
============

Brute-force reference implementations checked against the production
kernels on randomized instances:

- pooling:    triple-loop window reduction
- selection:  full Python sort on (similarity, frame, row, col)
- bank:       plain-list model of the gated FIFO
- attention:  per-query dense softmax with loop-built position codes
- cost:       MAC formula and the no-compression token ratio

Kernels are looked up on their modules at call time, so a patched
kernel is what gets checked. Failures are report entries, never
exceptions.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np

from memshrink import bank, contextual, relational, structure
from memshrink.foundation import (
    CompressedFrame, EngineConfig, FeatureFrame, PoolingKind, Scope, TemporalStrategy,
    grid_coords,
)

logger = logging.getLogger(__name__)

DEFAULT_INSTANCES: Dict[str, int] = {
    'pooling': 200,
    'selection': 500,
    'bank': 100,
    'attention': 50,
    'cost': 100,
}
BANK_REPLAY_FRAMES = 1000

POOL_TOLERANCE = 1e-6
ATTENTION_TOLERANCE = 1e-5
SOFTMAX_TOLERANCE = 1e-6


# ============================================================================
# REPORT
# ============================================================================

@dataclass
class OracleCheck:
    name: str
    instances: int
    mismatches: int = 0
    max_deviation: float = 0.0
    tolerance: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.mismatches == 0

    def record(self, deviation: float, ok: bool, note: Optional[str] = None):
        self.max_deviation = max(self.max_deviation, float(deviation))
        if not ok:
            self.mismatches += 1
            if note and len(self.notes) < 5:
                self.notes.append(note)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'instances': self.instances,
            'mismatches': self.mismatches,
            'max_deviation': self.max_deviation,
            'tolerance': self.tolerance,
            'passed': self.passed,
            'notes': list(self.notes),
        }


@dataclass
class OracleReport:
    checks: List[OracleCheck]
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            'seed': self.seed,
            'passed': self.passed,
            'checks': [c.to_dict() for c in self.checks],
        }


# ============================================================================
# POOLING
# ============================================================================

def pool_oracle(grid: np.ndarray, dh: int, dw: int, kind: PoolingKind) -> np.ndarray:
    h, w, c = grid.shape
    out = np.zeros((h // dh, w // dw, c), dtype=np.float64)
    for i in range(h // dh):
        for j in range(w // dw):
            for ch in range(c):
                window = [float(grid[i * dh + a, j * dw + b, ch]) for a in range(dh) for b in range(dw)]
                out[i, j, ch] = max(window) if kind == PoolingKind.MAX else sum(window) / len(window)
    return out


def check_pooling(instances: int, rng: np.random.Generator) -> OracleCheck:
    check = OracleCheck('pooling', instances, tolerance=POOL_TOLERANCE)
    for k in range(instances):
        dh, dw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        h = dh * int(rng.integers(1, 16 // dh + 1))
        w = dw * int(rng.integers(1, 16 // dw + 1))
        c = int(rng.integers(1, 9))
        grid = rng.standard_normal((h, w, c)).astype(np.float32)
        for kind in PoolingKind:
            got = structure.pool_grid(grid, dh, dw, kind).astype(np.float64)
            want = pool_oracle(grid, dh, dw, kind)
            if got.shape != want.shape:
                check.record(math.inf, False, f"instance {k} {kind.value}: shape {got.shape} != {want.shape}")
                continue
            if kind == PoolingKind.MAX:
                deviation = float(np.max(np.abs(got - want)))
                check.record(deviation, deviation == 0.0, f"instance {k} max: deviation {deviation}")
            else:
                rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-6)
                deviation = float(np.max(rel))
                check.record(deviation, deviation <= POOL_TOLERANCE,
                             f"instance {k} average: relative error {deviation}")
    return check


# ============================================================================
# SELECTION
# ============================================================================

def _oracle_quotas(supplies: List[int], n: int) -> List[int]:
    m = len(supplies)
    base, extra = n // m, n % m
    quotas = []
    for i, supply in enumerate(supplies):
        bonus = 1 if i >= m - extra else 0
        quotas.append(min(supply, base + bonus))
    target = min(n, sum(supplies))
    while sum(quotas) < target:
        for i in range(m - 1, -1, -1):
            if sum(quotas) < target and quotas[i] < supplies[i]:
                quotas[i] += 1
    return quotas


def selection_oracle(entries: List[tuple], n: int, scope: Scope) -> set:
    """entries: (similarity, frame, row, col) tuples"""
    ranked = sorted(entries)
    if scope == Scope.GLOBAL:
        return {e[1:] for e in ranked[:n]}
    frames = sorted({e[1] for e in entries})
    per_frame = [[e for e in ranked if e[1] == f] for f in frames]
    quotas = _oracle_quotas([len(p) for p in per_frame], n)
    picked = set()
    for rows, quota in zip(per_frame, quotas):
        picked.update(e[1:] for e in rows[:quota])
    return picked


def _random_frames(rng: np.random.Generator, m: int, ph: int, pw: int, c: int) -> List[CompressedFrame]:
    indices = [0] + sorted(int(x) for x in rng.choice(np.arange(1, 50), size=m, replace=False))
    return [
        CompressedFrame(
            frame_index=idx, pooled_height=ph, pooled_width=pw, channels=c,
            tokens=rng.standard_normal((ph, pw, c)), is_gt=(i == 0),
        )
        for i, idx in enumerate(indices)
    ]


def check_selection(instances: int, rng: np.random.Generator) -> OracleCheck:
    check = OracleCheck('selection', instances)
    for k in range(instances):
        m = int(rng.integers(1, 7))
        ph, pw, c = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
        frames = _random_frames(rng, m, ph, pw, c)
        total = m * ph * pw
        if k % 2 == 0:
            # Tie-heavy: a handful of distinct levels
            similarity = rng.integers(-2, 3, size=total) / 2.0
        else:
            similarity = rng.uniform(-1.0, 1.0, size=total)
            dup = rng.random(total) < 0.3
            similarity[dup] = similarity[0]
        coords = np.concatenate([grid_coords(f.frame_index, ph, pw) for f in frames[1:]])
        features = np.concatenate([f.flat_tokens() for f in frames[1:]])
        table = relational.ScoreTable(coords, similarity, features)
        n = int(rng.integers(0, total + 4))
        scope = Scope.GLOBAL if rng.random() < 0.5 else Scope.PER_FRAME

        result = relational.select_topn(table, frames, n, scope)
        got = {tuple(int(v) for v in row) for row in result.snapshot.selected_coords}
        entries = [(float(s), int(f), int(r), int(cc)) for s, (f, r, cc) in zip(similarity, coords)]
        want = selection_oracle(entries, n, scope)
        diff = len(got ^ want)
        check.record(diff, diff == 0, f"instance {k} ({scope.value}, n={n}): {diff} coords differ")
    return check


# ============================================================================
# BANK
# ============================================================================

class ListBank:
    """Reference bank on plain lists"""

    def __init__(self, capacity: int, threshold: float, absence_filter: bool, iou_gate: bool):
        self.capacity = capacity
        self.threshold = threshold
        self.absence_filter = absence_filter
        self.iou_gate = iou_gate
        self.gt: Optional[int] = None
        self.motion: List[int] = []
        self.admitted = self.absent = self.low_iou = 0

    def offer(self, index: int, present: bool, iou: float, prompt: bool):
        if prompt:
            self.gt = index
            self.admitted += 1
            return 'admitted_gt', None
        if self.absence_filter and not present:
            self.absent += 1
            return 'rejected_absent', None
        if self.iou_gate and iou < self.threshold:
            self.low_iou += 1
            return 'rejected_low_iou', None
        self.motion.append(index)
        self.admitted += 1
        evicted = None
        while len(self.motion) > self.capacity - 1:
            popped = self.motion.pop(0)
            evicted = popped if evicted is None else evicted
        return 'admitted_motion', evicted


def check_bank(instances: int, rng: np.random.Generator,
               frames_per_replay: int = BANK_REPLAY_FRAMES) -> OracleCheck:
    check = OracleCheck('bank', instances)
    tokens = np.zeros((1, 1, 1), dtype=np.float32)
    data = np.zeros(1, dtype=np.float32)
    for k in range(instances):
        config = EngineConfig(
            pool_dh=1, pool_dw=1,
            bank_capacity=int(rng.integers(1, 9)),
            iou_threshold=float(rng.uniform(0.0, 1.0)),
            absence_filter=bool(rng.random() < 0.8),
            iou_gate=bool(rng.random() < 0.8),
        )
        model = ListBank(config.bank_capacity, config.iou_threshold,
                         config.absence_filter, config.iou_gate)
        state = bank.BankState()
        present = rng.random(frames_per_replay) < 0.8
        ious = rng.uniform(0.0, 1.0, size=frames_per_replay)
        mismatched = 0
        for i in range(frames_per_replay):
            prompt = i == 0
            frame = FeatureFrame(i, 1, 1, 1, data, predicted_iou=1.0 if prompt else float(ious[i]),
                                 object_present=bool(present[i]) or prompt, is_prompt=prompt)
            pooled = CompressedFrame(i, 1, 1, 1, tokens, is_gt=prompt)
            state, decision = bank.admit(state, frame, pooled, config)
            reason, evicted = model.offer(i, frame.object_present, frame.predicted_iou, prompt)
            same = (
                decision.reason.value == reason
                and decision.evicted_frame_index == evicted
                and state.gt_entry is not None and state.gt_entry.frame_index == model.gt == 0
                and state.motion_indices == model.motion
                and len(state.motion_entries) <= config.bank_capacity - 1
                and (state.admitted_count, state.rejected_absent_count, state.rejected_iou_count)
                == (model.admitted, model.absent, model.low_iou)
            )
            if not same:
                mismatched += 1
                if mismatched == 1 and len(check.notes) < 5:
                    check.notes.append(
                        f"replay {k} frame {i}: bank {decision.reason.value} {state.motion_indices} "
                        f"!= model {reason} {model.motion}"
                    )
        check.record(mismatched, mismatched == 0)
    return check


# ============================================================================
# ATTENTION
# ============================================================================

def position_code_oracle(coord, channels: int) -> np.ndarray:
    pairs = channels // 2
    base, extra = divmod(pairs, 3)
    code = np.zeros(channels, dtype=np.float64)
    start = 0
    for axis in range(3):
        size = 2 * (base + (1 if axis < extra else 0))
        for i in range(size // 2):
            angle = float(coord[axis]) * 10000.0 ** (-2.0 * i / size)
            code[start + 2 * i] = math.sin(angle)
            code[start + 2 * i + 1] = math.cos(angle)
        start += size
    return code


def attention_oracle(queries: List[tuple], memory: List[tuple], channels: int,
                     position_encoding: bool = True) -> np.ndarray:
    """queries, memory: (coord, vector) pairs; returns (N_q, c)"""
    out = np.zeros((len(queries), channels), dtype=np.float64)
    scale = math.sqrt(channels)
    for qi, (q_coord, q_vec) in enumerate(queries):
        q = np.asarray(q_vec, dtype=np.float64)
        if position_encoding:
            q = q + position_code_oracle(q_coord, channels)
        logits = []
        for k_coord, k_vec in memory:
            k = np.asarray(k_vec, dtype=np.float64)
            if position_encoding:
                k = k + position_code_oracle(k_coord, channels)
            logits.append(float(np.dot(q, k)) / scale)
        top = max(logits)
        weights = [math.exp(l - top) for l in logits]
        total = sum(weights)
        for weight, (_, v_vec) in zip(weights, memory):
            out[qi] += (weight / total) * np.asarray(v_vec, dtype=np.float64)
    return out


def check_attention(instances: int, rng: np.random.Generator) -> OracleCheck:
    check = OracleCheck('attention', instances, tolerance=ATTENTION_TOLERANCE)
    for k in range(instances):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        while h * w > 64:
            w -= 1
        c = 2 * int(rng.integers(3, 17))
        t = int(rng.integers(1, 8))
        config = EngineConfig(
            pool_dh=1, pool_dw=1, bank_capacity=t,
            temporal_strategy=TemporalStrategy.NO_TMC,
            absence_filter=False, iou_gate=False,
        )
        frames = [
            FeatureFrame(i, h, w, c, rng.standard_normal(h * w * c).astype(np.float32),
                         predicted_iou=float(rng.uniform()), is_prompt=(i == 0))
            for i in range(t)
        ]
        state = bank.BankState()
        for frame in frames:
            state, _ = bank.admit(state, frame, structure.pool_frame(frame, config), config)
        snapshot = relational.assemble_memory(bank.snapshot_frames(state), config).snapshot
        query = structure.pool_frame(frames[-1], config)
        result = contextual.cross_attend(query, snapshot, config)

        def tokens(frame: FeatureFrame):
            grid = frame.grid
            return [((frame.frame_index, r, col), grid[r, col]) for r in range(h) for col in range(w)]

        memory = [tok for frame in frames for tok in tokens(frame)]
        want = attention_oracle(tokens(frames[-1]), memory, c)
        deviation = float(np.max(np.abs(result.values - want))) if result.values.shape == want.shape else math.inf
        n_q = h * w
        softmax_drift = abs(result.weights_checksum - n_q) / n_q
        macs_ok = result.counted_macs == result.cost.mac_count == 2 * n_q * len(memory) * c
        check.record(
            deviation,
            deviation <= ATTENTION_TOLERANCE and softmax_drift <= SOFTMAX_TOLERANCE and macs_ok,
            f"instance {k} ({h}x{w}x{c}, t={t}): deviation {deviation}, "
            f"softmax drift {softmax_drift}, macs {result.counted_macs}/{result.cost.mac_count}",
        )
    return check


# ============================================================================
# COST
# ============================================================================

def check_cost(instances: int, rng: np.random.Generator) -> OracleCheck:
    check = OracleCheck('cost', instances)
    for k in range(instances):
        n_q, n_kv, c = (int(x) for x in rng.integers(1, 4097, size=3))
        report = contextual.CostAnalyzer.report(n_q, n_kv, c, n_kv)
        check.record(0, report.mac_count == 2 * n_q * n_kv * c,
                     f"instance {k}: mac_count {report.mac_count} for {n_q}x{n_kv}x{c}")
    if instances:
        config = EngineConfig.load_defaults()
        full = contextual.CostAnalyzer.memory_tokens(config, 64, 64, 7, TemporalStrategy.NO_TMC)
        compressed = contextual.CostAnalyzer.memory_tokens(config, 64, 64, 7)
        ratio = Fraction(full, compressed)
        check.record(0, ratio == Fraction(7, 2), f"no_tmc/default token ratio {ratio} != 7/2")
    return check


# ============================================================================
# SUITE
# ============================================================================

CHECKS = {
    'pooling': check_pooling,
    'selection': check_selection,
    'bank': check_bank,
    'attention': check_attention,
    'cost': check_cost,
}


def oracle_suite(instances: Optional[int] = None, seed: int = 0) -> OracleReport:
    """
    Run every oracle check

    Args:
        instances: Instances per check; None uses DEFAULT_INSTANCES
        seed: Seed for the instance generators

    Returns:
        OracleReport; report.passed is False on any mismatch
    """
    checks = []
    for i, (name, run) in enumerate(CHECKS.items()):
        count = DEFAULT_INSTANCES[name] if instances is None else instances
        rng = np.random.default_rng([seed, i])
        check = run(count, rng)
        if check.passed:
            logger.info("oracle %s: %d instances, max deviation %.3g",
                        name, check.instances, check.max_deviation)
        else:
            logger.warning("oracle %s: %d of %d instances mismatched (%s)",
                           name, check.mismatches, check.instances, '; '.join(check.notes))
        checks.append(check)
    return OracleReport(checks=checks, seed=seed)
