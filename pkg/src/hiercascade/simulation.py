"""Closed-loop simulation of one edge node and the global controller."""

from __future__ import annotations

import csv
import enum
import json
import math
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import EmaState, LcPolicy, LocalController, LocalStore
from .engine import CascadeConfig, Sample, evaluate, worst_case_latency
from .errors import ScenarioError
from .messages import Event, deployment_to_event, telemetry_to_event, write_events
from .profiles import Task
from .scheduler import (NodeConstraints, NodeTelemetry, SchedulerParams, SchedulingDecision,
                        SpDeployment, online_update)

KINDS = ("base", "mismatch-minor", "mismatch-major", "custom")


class Mode(enum.Enum):
    STATIC = "static"     # fallback only, no controllers
    DYNAMIC = "dynamic"   # scheduled cascade, frozen
    OURS = "ours"         # scheduled cascade with LC and GC

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class WorkloadScenario:
    kind: str = "base"
    factor: float = 5.0
    target_class: int | None = None
    trace_path: str | None = None
    repetitions: int = 3
    seed: int = 0
    length: int | None = None
    grow_length: bool = False
    test_distribution: tuple[float, ...] | None = None
    resource_schedule: tuple[tuple[int, float], ...] = ()
    battery_capacity_mj: float = 1e6
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.factor < 1:
            raise ScenarioError("factor must be >= 1")
        if self.repetitions < 1:
            raise ScenarioError("repetitions must be >= 1")
        if self.kind == "mismatch-major" and self.target_class is None:
            raise ScenarioError("mismatch-major needs a target_class")
        if self.kind == "custom" and not self.trace_path:
            raise ScenarioError("custom scenario needs a trace_path")
        object.__setattr__(self, "resource_schedule",
                           tuple((int(i), float(s)) for i, s in self.resource_schedule))
        if any(s < 1.0 for _, s in self.resource_schedule):
            raise ScenarioError("cpu_scale must be >= 1")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadScenario":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known) - {"calibration", "constraints", "policy", "description"}
        if unknown:
            raise ScenarioError(f"unknown scenario fields {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k in known}
        if kw.get("test_distribution") is not None:
            kw["test_distribution"] = tuple(kw["test_distribution"])
        if kw.get("factor") is not None and isinstance(kw["factor"], str):
            kw["factor"] = float(kw["factor"])
        return cls(**kw)


@dataclass
class NodeSimState:
    cpu_scale: float = 1.0
    battery_level: float = 1.0
    clock: int = 0


def scenario_distribution(test_distribution: Sequence[float], scenario: WorkloadScenario,
                          deployed_classes: Sequence[int]) -> np.ndarray:
    """Class distribution after the scenario's reweighting."""
    dist = np.asarray(test_distribution, dtype=float)
    if scenario.kind == "mismatch-minor":
        if not deployed_classes:
            raise ScenarioError("mismatch-minor needs a non-empty deployed order")
        boost = deployed_classes[-1]
    elif scenario.kind == "mismatch-major":
        if scenario.target_class in deployed_classes:
            raise ScenarioError(f"class {scenario.target_class} is already in the deployed order")
        boost = scenario.target_class
    else:
        return dist / dist.sum()
    dist = dist.copy()
    dist[boost] *= scenario.factor
    return dist / dist.sum()


def generate_trace(test_distribution: Sequence[float], scenario: WorkloadScenario,
                   deployed_classes: Sequence[int], length: int | None = None) -> list[int]:
    """One pass over the (reweighted) test stream; repeated ``repetitions`` times by the runner."""
    if scenario.kind == "custom":
        text = Path(scenario.trace_path).read_text().replace(",", " ").split()
        return [int(t) for t in text]
    length = scenario.length or length or 1000
    dist = scenario_distribution(test_distribution, scenario, deployed_classes)
    if scenario.grow_length and scenario.kind != "base":
        base = np.asarray(test_distribution, dtype=float)
        boost = int(np.argmax(dist / np.maximum(base / base.sum(), 1e-300)))
        length = int(round(length * (1 + (scenario.factor - 1) * base[boost] / base.sum())))
    rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 1]))
    return [int(c) for c in rng.choice(len(dist), size=length, p=dist)]


def draw_trace_samples(task: Task, trace: Sequence[int], seed: int) -> list[Sample]:
    """Draw every predictor's output for every trace entry (vectorised per class)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    trace = np.asarray(trace, dtype=int)
    order = [task.fallback, *task.sps]
    u_conf = rng.random((len(order), len(trace)))
    u_label = rng.random(len(trace))
    conf = np.empty((len(order), len(trace)))
    labels = np.empty(len(trace), dtype=int)
    fb = task.fallback
    for c in np.unique(trace):
        idx = trace == c
        for k, p in enumerate(order):
            conf[k, idx] = p.confidence.quantile(int(c), u_conf[k, idx])
        labels[idx] = [fb.predict_label(int(c), u) for u in u_label[idx]]
    ids = [p.id for p in order]
    return [Sample(int(trace[j]), dict(zip(ids, conf[:, j].tolist())), {fb.id: int(labels[j])})
            for j in range(len(trace))]


RECORD_FIELDS = ("inference", "repetition", "true_class", "predicted", "exit", "exit_position",
                 "executed", "macs", "latency_ms", "energy_mj", "cpu_scale", "battery_level",
                 "deadline_miss", "active_order")


@dataclass
class SimulationRun:
    mode: Mode
    scenario: str
    records: list[dict] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    wcl_violations: int = 0
    num_classes: int = 0

    @property
    def summary(self) -> dict:
        return summarize(self.records, self.num_classes, self.wcl_violations,
                         mode=str(self.mode), scenario=self.scenario)

    def write(self, out_dir, prefix: str = "") -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{prefix}records.csv", "w", newline="") as fh:
            fields = list(RECORD_FIELDS) + [f"ema_{c}" for c in range(self.num_classes)]
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(self.records)
        write_events(out / f"{prefix}events.csv", self.events)
        summary = self.summary
        (out / f"{prefix}summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary


def summarize(records: Sequence[dict], num_classes: int, wcl_violations: int = 0,
              **extra) -> dict:
    """Run statistics; works on in-memory records or rows parsed back from CSV."""
    lat = np.array([float(r["latency_ms"]) for r in records])
    energy = np.array([float(r["energy_mj"]) for r in records])
    macs = np.array([float(r["macs"]) for r in records])
    true = np.array([int(r["true_class"]) for r in records])
    pred = np.array([int(r["predicted"]) for r in records])
    misses = sum(str(r["deadline_miss"]) in ("1", "True") for r in records)
    recalls = [float(np.mean(pred[true == c] == c)) for c in range(num_classes) if np.any(true == c)]
    out = {
        "inferences": len(records),
        "mean_latency_ms": float(lat.mean()),
        "p50_latency_ms": float(np.percentile(lat, 50)),
        "p95_latency_ms": float(np.percentile(lat, 95)),
        "p99_latency_ms": float(np.percentile(lat, 99)),
        "max_latency_ms": float(lat.max()),
        "mean_energy_mj": float(energy.mean()),
        "total_energy_mj": float(energy.sum()),
        "mean_macs": float(macs.mean()),
        "accuracy": float(np.mean(true == pred)),
        "balanced_accuracy": float(np.mean(recalls)),
        "deadline_misses": int(misses),
        "wcl_violations": int(wcl_violations),
    }
    out.update(extra)
    return out


class _GcWorker(threading.Thread):
    """Global controller in its own thread; answers one telemetry message at a time."""

    def __init__(self, task, constraints, params):
        super().__init__(daemon=True)
        self.inbox: queue.Queue = queue.Queue()
        self.outbox: queue.Queue = queue.Queue()
        self.args = (task, constraints, params)

    def run(self):
        while True:
            msg = self.inbox.get()
            if msg is None:
                return
            self.outbox.put(online_update(msg, *self.args))


def run_simulation(task: Task, decision: SchedulingDecision | CascadeConfig,
                   scenario: WorkloadScenario, constraints: NodeConstraints,
                   policy: LcPolicy | None = None, params: SchedulerParams | None = None, *,
                   mode: Mode = Mode.OURS, gc_delay: float = 0, threaded: bool = False,
                   trace: Sequence[int] | None = None) -> SimulationRun:
    """Simulate one node over ``repetitions`` passes of the scenario trace.

    Per inference: evaluate the active cascade (latencies scaled by the current
    CPU factor, plus T_LC when the LC runs), let the LC update, and every
    ``gc_period`` inferences exchange telemetry with the GC. A deployment is
    stored on the node ``gc_delay`` inferences later; ``math.inf`` cuts the
    GC off entirely.
    """
    policy = policy or LcPolicy()
    params = params or SchedulerParams()
    config = decision.config if isinstance(decision, SchedulingDecision) else decision
    deployed_classes = [task[s].target for s in config.enabled_sps]
    if trace is None:
        trace = generate_trace(scenario.test_distribution or task.stats.class_distribution,
                               scenario, deployed_classes, task.test_size)
    samples = draw_trace_samples(task, trace, scenario.seed)

    if mode is Mode.STATIC:
        config = CascadeConfig.for_task(task)
    adaptive = mode is Mode.OURS
    t_lc = constraints.t_lc_ms if adaptive else 0.0
    lc = None
    if adaptive:
        lc = LocalController(config, LocalStore(set(config.ordered_sps)),
                             EmaState.initial(policy.alpha, task.stats.class_distribution),
                             policy, constraints, task.profiles)
    gc_on = adaptive and not math.isinf(gc_delay)
    worker = None
    if gc_on and threaded:
        worker = _GcWorker(task, constraints, params)
        worker.start()

    run = SimulationRun(mode, scenario.label, num_classes=task.num_classes)
    node = NodeSimState()
    schedule = dict(scenario.resource_schedule)
    pending: list[tuple[int, SpDeployment]] = []
    shipped: set[str] = set()
    misses = 0
    try:
        for rep in range(scenario.repetitions):
            for sample in samples:
                i = node.clock
                node.clock += 1
                count = node.clock
                if i in schedule:
                    node.cpu_scale = schedule[i]
                active = lc.config if adaptive else config
                out = evaluate(sample, active, task.profiles, t_lc_ms=t_lc, cpu_scale=node.cpu_scale)
                node.battery_level = max(0.0, node.battery_level - out.energy_mj / scenario.battery_capacity_mj)
                miss = out.latency_ms > constraints.deadline_ms
                misses += miss
                if adaptive:
                    low = policy.low_battery_mode or node.battery_level < policy.battery_threshold
                    run.events += lc.step(out, count, node.cpu_scale, low_battery=low)
                    if gc_on and count % params.gc_period == 0:
                        tel = NodeTelemetry(
                            index=count, ema=lc.snapshot(), enabled_sps=lc.config.enabled_sps,
                            stored_sps=tuple(sorted(lc.store.stored_sps | shipped)),
                            battery_level=node.battery_level, deadline_misses=misses,
                            cpu_scale=node.cpu_scale, temperature_c=45.0 + 10.0 * (node.cpu_scale - 1.0),
                        )
                        run.events.append(telemetry_to_event(tel))
                        if worker is not None:
                            worker.inbox.put(tel)
                            dep = worker.outbox.get()
                        else:
                            dep = online_update(tel, task, constraints, params)
                        if dep is not None:
                            shipped.add(dep.sp_id)
                            run.events.append(deployment_to_event(dep, tel.ema))
                            pending.append((count + int(gc_delay), dep))
                    for due, dep in [p for p in pending if p[0] <= count]:
                        pending.remove((due, dep))
                        lc.store.add(dep.sp_id)
                        run.events.append(Event(count, "NODE", "STORE", dep.sp_id, "", lc.snapshot()))
                        run.events += lc.reconcile_now(count, node.cpu_scale, low_battery=low)
                    wcl = worst_case_latency(lc.config, constraints, task.profiles, node.cpu_scale)
                    run.wcl_violations += wcl > constraints.deadline_ms
                record = {
                    "inference": count,
                    "repetition": rep,
                    "true_class": sample.true_class,
                    "predicted": out.predicted,
                    "exit": out.exit.value,
                    "exit_position": "" if out.exit_position is None else out.exit_position,
                    "executed": ">".join(out.executed),
                    "macs": out.macs,
                    "latency_ms": out.latency_ms,
                    "energy_mj": out.energy_mj,
                    "cpu_scale": node.cpu_scale,
                    "battery_level": node.battery_level,
                    "deadline_miss": int(miss),
                    "active_order": ">".join(active.enabled_sps),
                }
                ema = lc.snapshot() if adaptive else task.stats.class_distribution
                record.update({f"ema_{c}": v for c, v in enumerate(ema)})
                run.records.append(record)
    finally:
        if worker is not None:
            worker.inbox.put(None)
            worker.join()
    return run


def run_comparison(task: Task, decision: SchedulingDecision, scenarios: Sequence[WorkloadScenario],
                   constraints: NodeConstraints, policy: LcPolicy | None = None,
                   params: SchedulerParams | None = None,
                   modes: Sequence[Mode] = (Mode.STATIC, Mode.DYNAMIC, Mode.OURS),
                   gc_delay: float = 0) -> list[dict]:
    """Table-I-shaped rows: one per (scenario, mode), all modes on the same trace."""
    rows = []
    deployed = [task[s].target for s in decision.order]
    for sc in scenarios:
        trace = generate_trace(sc.test_distribution or task.stats.class_distribution,
                               sc, deployed, task.test_size)
        for mode in modes:
            run = run_simulation(task, decision, sc, constraints, policy, params,
                                 mode=mode, gc_delay=gc_delay, trace=trace)
            s = run.summary
            rows.append({
                "task": task.name,
                "scenario": sc.label,
                "mode": str(mode),
                "sp_order": " ".join(str(c) for c in deployed) if mode is not Mode.STATIC else "",
                "mean_latency_ms": s["mean_latency_ms"],
                "mean_energy_mj": s["mean_energy_mj"],
                "balanced_accuracy": s["balanced_accuracy"],
                "deadline_misses": s["deadline_misses"],
                "inferences": s["inferences"],
            })
    return rows
