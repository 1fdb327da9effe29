"""Global controller: cascade selection by beam search and online SP deployment."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .engine import (AccuracyEstimate, CascadeConfig, ExpectedCost, expected_balanced_accuracy,
                     expected_cost, worst_case_latency)
from .errors import ConfigError, InfeasibleTask
from .profiles import Task

log = logging.getLogger(__name__)

# float slack for the accuracy-drop comparison
DROP_EPS = 1e-12


@dataclass(frozen=True)
class NodeConstraints:
    memory_budget_bytes: float
    deadline_ms: float
    t_lc_ms: float = 0.0

    def __post_init__(self):
        if self.memory_budget_bytes <= 0 or self.deadline_ms <= 0 or self.t_lc_ms < 0:
            raise ConfigError("memory budget and deadline must be positive, T_LC non-negative")
        if self.t_lc_ms >= self.deadline_ms:
            raise ConfigError("T_LC must be smaller than the deadline")


@dataclass(frozen=True)
class SchedulerParams:
    beam_width: int = 8
    max_depth: int | None = None
    max_accuracy_drop: float = 0.04
    gc_period: int = 200

    def __post_init__(self):
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")
        if not 0.0 <= self.max_accuracy_drop <= 1.0:
            raise ConfigError("max_accuracy_drop must lie in [0, 1]")
        if self.gc_period < 1:
            raise ConfigError("gc_period must be >= 1")


@dataclass(frozen=True)
class SchedulingDecision:
    config: CascadeConfig
    expected: ExpectedCost
    accuracy: AccuracyEstimate
    accuracy_drop: float
    memory_bytes: float
    worst_case_latency_ms: float
    reasons: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.reasons

    @property
    def order(self) -> tuple[str, ...]:
        return self.config.enabled_sps

    def to_dict(self, task: Task | None = None) -> dict:
        out = {
            "order": list(self.order),
            "fb": self.config.fb,
            "thr_minus": self.config.thr_minus,
            "thr_plus": self.config.thr_plus,
            "expected_macs": self.expected.macs,
            "expected_latency_ms": self.expected.latency_ms,
            "expected_energy_mj": self.expected.energy_mj,
            "expected_balanced_accuracy": self.accuracy.balanced,
            "expected_plain_accuracy": self.accuracy.plain,
            "accuracy_drop": self.accuracy_drop,
            "memory_bytes": self.memory_bytes,
            "worst_case_latency_ms": self.worst_case_latency_ms,
            "feasible": self.feasible,
            "reasons": list(self.reasons),
        }
        if task is not None:
            out["order_classes"] = [task[s].target for s in self.order]
        return out


@dataclass(frozen=True)
class NodeTelemetry:
    """Snapshot a node sends to the GC."""

    index: int
    ema: tuple[float, ...]
    enabled_sps: tuple[str, ...]
    stored_sps: tuple[str, ...]
    battery_level: float = 1.0
    temperature_c: float = 45.0
    deadline_misses: int = 0
    cpu_scale: float = 1.0

    def __post_init__(self):
        if any(not 0.0 <= v <= 1.0 + 1e-12 for v in self.ema):
            raise ValueError("EMA entries must lie in [0, 1]")


@dataclass(frozen=True)
class SpDeployment:
    sp_id: str
    index: int = 0


def score(config: CascadeConfig, task: Task, dist: Sequence[float] | None = None) -> float:
    """Expected MACs per inference; lower is better."""
    dist = task.stats.class_distribution if dist is None else dist
    return expected_cost(config, dist, task.profiles).macs


def _ranked(scored):
    return sorted(scored, key=lambda item: (item[0], item[1].ordered_sps))


def beam_search_candidates(task: Task, params: SchedulerParams,
                           dist: Sequence[float] | None = None) -> list[list[CascadeConfig]]:
    """Retained cascades per depth, best first. Depth 0 is the fallback alone."""
    max_depth = min(params.max_depth or task.num_classes, len(task.sps), task.num_classes)
    levels = [[CascadeConfig.for_task(task)]]
    for _ in range(max_depth):
        scored = {}
        for base in levels[-1]:
            used = set(base.ordered_sps)
            for sid in task.sp_ids:
                if sid in used:
                    continue
                cfg = CascadeConfig.for_task(task, base.ordered_sps + (sid,))
                scored[cfg.ordered_sps] = (score(cfg, task, dist), cfg)
        if not scored:
            break
        levels.append([cfg for _, cfg in _ranked(scored.values())[:params.beam_width]])
    return levels


def assess(config: CascadeConfig, task: Task, constraints: NodeConstraints,
           params: SchedulerParams, dist: Sequence[float] | None = None,
           stored: Sequence[str] | None = None, cpu_scale: float = 1.0) -> SchedulingDecision:
    """Evaluate one configuration against accuracy, memory and latency limits.

    ``stored`` lists SPs that occupy node memory besides the enabled ones.
    """
    dist = task.stats.class_distribution if dist is None else dist
    acc = expected_balanced_accuracy(config, dist, task.profiles)
    drop = task.stats.fb_balanced_accuracy - acc.balanced
    resident = set(config.enabled_sps) | set(stored or ())
    memory = task.fallback.memory_bytes + sum(task[s].memory_bytes for s in resident)
    wcl = worst_case_latency(config, constraints, task.profiles, cpu_scale)
    reasons = []
    if drop > params.max_accuracy_drop + DROP_EPS:
        reasons.append("accuracy")
    if memory > constraints.memory_budget_bytes:
        reasons.append("memory")
    if wcl > constraints.deadline_ms:
        reasons.append("latency")
    return SchedulingDecision(
        config=config,
        expected=expected_cost(config, dist, task.profiles, t_lc_ms=constraints.t_lc_ms),
        accuracy=acc,
        accuracy_drop=drop,
        memory_bytes=memory,
        worst_case_latency_ms=wcl,
        reasons=tuple(reasons),
    )


def feasibility_filter(candidates, task: Task, constraints: NodeConstraints,
                       params: SchedulerParams) -> list[SchedulingDecision]:
    """Keep the candidates that respect every constraint.

    ``candidates`` is either the per-depth output of the beam search or a flat
    list of configurations.
    """
    flat = [c for level in candidates for c in level] \
        if candidates and isinstance(candidates[0], list) else list(candidates)
    feasible = []
    for cfg in flat:
        d = assess(cfg, task, constraints, params)
        if d.feasible:
            feasible.append(d)
    if not feasible:
        fb_only = assess(CascadeConfig.for_task(task), task, constraints, params)
        raise InfeasibleTask(fb_only.reasons or ("no feasible candidate",))
    return feasible


def select(decisions: Sequence[SchedulingDecision]) -> SchedulingDecision:
    return min(decisions, key=lambda d: (d.expected.macs, d.config.ordered_sps))


def schedule(task: Task, constraints: NodeConstraints, params: SchedulerParams) -> SchedulingDecision:
    """Minimum expected-MAC cascade among the feasible beam-search candidates."""
    candidates = beam_search_candidates(task, params)
    decision = select(feasibility_filter(candidates, task, constraints, params))
    log.info("scheduled %s: %.4g MACs, drop %.4f", decision.order, decision.expected.macs,
             decision.accuracy_drop)
    return decision


def pareto_sweep(task: Task, constraints: NodeConstraints, params: SchedulerParams,
                 drop_grid: Sequence[float]) -> list[tuple[float, SchedulingDecision | InfeasibleTask]]:
    """Schedule once per accuracy-drop budget; infeasible budgets are recorded, not raised."""
    if list(drop_grid) != sorted(drop_grid):
        raise ValueError("drop_grid must be sorted ascending")
    candidates = beam_search_candidates(task, params)
    flat = [c for level in candidates for c in level]
    # accuracy is budget independent, so assess every candidate once with no drop limit
    loose = SchedulerParams(params.beam_width, params.max_depth, 1.0, params.gc_period)
    assessed = [assess(c, task, constraints, loose) for c in flat]
    out = []
    for budget in drop_grid:
        ok = [d for d in assessed
              if d.feasible and d.accuracy_drop <= budget + DROP_EPS]
        if ok:
            out.append((budget, select(ok)))
        else:
            fb_only = assess(CascadeConfig.for_task(task), task, constraints,
                             SchedulerParams(params.beam_width, params.max_depth, budget))
            out.append((budget, InfeasibleTask(fb_only.reasons or ("no feasible candidate",))))
    return out


def ema_order(sp_ids: Sequence[str], ema: Sequence[float], task: Task) -> list[str]:
    """Sort SP ids by the EMA of their target class, descending; ties by id."""
    return sorted(sp_ids, key=lambda s: (-ema[task[s].target], s))


def online_update(telemetry: NodeTelemetry, task: Task, constraints: NodeConstraints,
                  params: SchedulerParams) -> SpDeployment | None:
    """Pick at most one SP to ship to the node, or None.

    Candidates are the SPs the node lacks, highest EMA class first. The first
    one whose addition keeps the node feasible (with the EMA standing in for
    the class distribution) and strictly lowers expected MACs is returned.
    """
    ema = telemetry.ema
    current = CascadeConfig.for_task(task, telemetry.enabled_sps)
    current_macs = score(current, task, ema)
    stored = set(telemetry.stored_sps)
    for sid in ema_order([s for s in task.sp_ids if s not in stored], ema, task):
        order = ema_order(list(telemetry.enabled_sps) + [sid], ema, task)
        trial = CascadeConfig.for_task(task, order)
        d = assess(trial, task, constraints, params, dist=ema, stored=stored,
                   cpu_scale=telemetry.cpu_scale)
        if not d.feasible:
            log.debug("skip %s at %d: %s", sid, telemetry.index, ",".join(d.reasons))
            continue
        if d.expected.macs < current_macs:
            return SpDeployment(sid, telemetry.index)
    return None
