"""Cascade execution, cost accounting and analytic expectations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .profiles import PredictorProfile, Task, check_thresholds, exit_probabilities


class ExitKind(enum.Enum):
    ACCEPT = "accept"          # an SP accepted its class
    UNDECIDED = "undecided"    # an SP was undecided, FB ran immediately
    EXHAUSTED = "exhausted"    # every enabled SP rejected, FB ran
    FB_ONLY = "fb_only"        # nothing enabled


@dataclass(frozen=True)
class CascadeConfig:
    """Ordered SPs terminated by the fallback.

    ``enabled`` masks positions of ``ordered_sps``; only enabled SPs execute.
    """

    ordered_sps: tuple[str, ...]
    fb: str
    thr_minus: float = 0.1
    thr_plus: float = 0.9
    enabled: tuple[bool, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ordered_sps", tuple(self.ordered_sps))
        if self.enabled is None:
            object.__setattr__(self, "enabled", (True,) * len(self.ordered_sps))
        else:
            object.__setattr__(self, "enabled", tuple(bool(e) for e in self.enabled))
        if len(self.enabled) != len(self.ordered_sps):
            raise ConfigError("enabled mask length differs from the SP list")
        if len(set(self.ordered_sps)) != len(self.ordered_sps):
            raise ConfigError("an SP appears twice in the cascade")
        if self.fb in self.ordered_sps:
            raise ConfigError("the fallback cannot be part of the SP list")
        check_thresholds(self.thr_minus, self.thr_plus)

    @classmethod
    def for_task(cls, task: Task, order: Sequence[str] = ()) -> "CascadeConfig":
        return cls(tuple(order), task.fallback.id, task.thr_minus, task.thr_plus)

    @property
    def enabled_sps(self) -> tuple[str, ...]:
        return tuple(s for s, e in zip(self.ordered_sps, self.enabled) if e)

    @property
    def depth(self) -> int:
        return len(self.enabled_sps)

    def with_order(self, order: Sequence[str], enabled: Sequence[bool] | None = None) -> "CascadeConfig":
        return replace(self, ordered_sps=tuple(order),
                       enabled=None if enabled is None else tuple(enabled))

    def active(self) -> "CascadeConfig":
        """The same cascade restricted to its enabled SPs."""
        return self.with_order(self.enabled_sps)

    def validate(self, profiles: Mapping[str, PredictorProfile], num_classes: int) -> None:
        try:
            sps = [profiles[s] for s in self.ordered_sps]
            fb = profiles[self.fb]
        except KeyError as exc:
            raise ConfigError(f"unknown predictor {exc.args[0]!r}") from None
        if not fb.is_fallback or any(sp.is_fallback for sp in sps):
            raise ConfigError("the cascade must end with exactly one fallback")
        targets = [sp.target for sp in sps]
        if len(set(targets)) != len(targets):
            raise ConfigError("SP targets must be pairwise distinct")
        if len(sps) > num_classes:
            raise ConfigError("cascade deeper than the number of classes")


@dataclass(frozen=True)
class Sample:
    """One input: its true class and every predictor's drawn output.

    ``confidences`` maps predictor id to the drawn probability; ``labels`` maps
    multiclass predictor ids to the label they would output.
    """

    true_class: int
    confidences: Mapping[str, float]
    labels: Mapping[str, int]


@dataclass(frozen=True)
class InferenceOutcome:
    predicted: int
    executed: tuple[str, ...]
    macs: float
    latency_ms: float
    energy_mj: float
    exit: ExitKind
    exit_position: int | None = None


class ExpectedCost(NamedTuple):
    macs: float
    latency_ms: float
    energy_mj: float


class AccuracyEstimate(NamedTuple):
    balanced: float
    plain: float


def draw_sample(profiles: Sequence[PredictorProfile], true_class: int,
                rng: np.random.Generator) -> Sample:
    """Draw every predictor's output for one input, in the given profile order."""
    conf, labels = {}, {}
    for p in profiles:
        conf[p.id] = float(p.confidence.quantile(true_class, rng.random()))
        if p.is_fallback:
            labels[p.id] = p.predict_label(true_class, rng.random())
    return Sample(int(true_class), conf, labels)


def evaluate(sample: Sample, config: CascadeConfig, profiles: Mapping[str, PredictorProfile],
             *, t_lc_ms: float = 0.0, cpu_scale: float = 1.0) -> InferenceOutcome:
    """Run one input through the enabled SPs, then the fallback if needed."""
    executed = []
    exit_kind, position = ExitKind.FB_ONLY, None
    for k, sid in enumerate(config.enabled_sps):
        executed.append(sid)
        p = sample.confidences[sid]
        if p > config.thr_plus:
            return _outcome(profiles[sid].target, executed, profiles, t_lc_ms, cpu_scale,
                            ExitKind.ACCEPT, k)
        if p >= config.thr_minus:
            exit_kind, position = ExitKind.UNDECIDED, k
            break
        exit_kind = ExitKind.EXHAUSTED
    executed.append(config.fb)
    return _outcome(sample.labels[config.fb], executed, profiles, t_lc_ms, cpu_scale,
                    exit_kind, position)


def big_little_evaluate(sample: Sample, little: PredictorProfile, big: PredictorProfile,
                        tau: float, *, cpu_scale: float = 1.0) -> InferenceOutcome:
    """Two-model cascade: keep the little model's answer when its top probability reaches tau."""
    profiles = {little.id: little, big.id: big}
    if sample.confidences[little.id] >= tau:
        return _outcome(sample.labels[little.id], [little.id], profiles, 0.0, cpu_scale,
                        ExitKind.ACCEPT, 0)
    return _outcome(sample.labels[big.id], [little.id, big.id], profiles, 0.0, cpu_scale,
                    ExitKind.EXHAUSTED, None)


def _outcome(predicted, executed, profiles, t_lc_ms, cpu_scale, kind, position):
    models = [profiles[i] for i in executed]
    return InferenceOutcome(
        predicted=int(predicted),
        executed=tuple(executed),
        macs=sum(m.macs for m in models),
        latency_ms=t_lc_ms + cpu_scale * sum(m.latency_ms for m in models),
        energy_mj=sum(m.energy_mj for m in models),
        exit=kind,
        exit_position=position,
    )


def worst_case_latency(config: CascadeConfig, constraints, profiles: Mapping[str, PredictorProfile],
                       cpu_scale: float = 1.0) -> float:
    """T_LC plus every enabled SP plus the fallback, at the given CPU scale."""
    t_lc = getattr(constraints, "t_lc_ms", constraints)
    sps = sum(profiles[s].latency_ms for s in config.enabled_sps)
    return t_lc + cpu_scale * (sps + profiles[config.fb].latency_ms)


@lru_cache(maxsize=None)
def _split(profile: PredictorProfile, true_class: int, thr_minus: float, thr_plus: float):
    return exit_probabilities(profile, true_class, thr_minus, thr_plus)


def route_probabilities(config: CascadeConfig, profiles: Mapping[str, PredictorProfile],
                        true_class: int) -> tuple[list[float], list[float], float]:
    """Per enabled position: P(executed), P(accepts); plus P(fallback runs)."""
    reach, executed, accepts, p_fb = 1.0, [], [], 0.0
    for sid in config.enabled_sps:
        pa, pr, pu = _split(profiles[sid], true_class, config.thr_minus, config.thr_plus)
        executed.append(reach)
        accepts.append(reach * pa)
        p_fb += reach * pu
        reach *= pr
    return executed, accepts, p_fb + reach


def expected_cost(config: CascadeConfig, dist: Sequence[float],
                  profiles: Mapping[str, PredictorProfile], *, t_lc_ms: float = 0.0) -> ExpectedCost:
    """Exact expected MACs, latency and energy per inference under ``dist``."""
    sps = [profiles[s] for s in config.enabled_sps]
    fb = profiles[config.fb]
    macs = lat = energy = 0.0
    for c, w in enumerate(dist):
        if w == 0:
            continue
        executed, _, p_fb = route_probabilities(config, profiles, c)
        macs += w * (sum(e * sp.macs for e, sp in zip(executed, sps)) + p_fb * fb.macs)
        lat += w * (sum(e * sp.latency_ms for e, sp in zip(executed, sps)) + p_fb * fb.latency_ms)
        energy += w * (sum(e * sp.energy_mj for e, sp in zip(executed, sps)) + p_fb * fb.energy_mj)
    return ExpectedCost(macs, lat + t_lc_ms, energy)


def class_recalls(config: CascadeConfig, profiles: Mapping[str, PredictorProfile],
                  num_classes: int) -> list[float]:
    sps = [profiles[s] for s in config.enabled_sps]
    fb = profiles[config.fb]
    recalls = []
    for c in range(num_classes):
        _, accepts, p_fb = route_probabilities(config, profiles, c)
        hit = sum(a for a, sp in zip(accepts, sps) if sp.target == c)
        recalls.append(hit + p_fb * fb.confusion[c][c])
    return recalls


def expected_balanced_accuracy(config: CascadeConfig, dist: Sequence[float],
                               profiles: Mapping[str, PredictorProfile]) -> AccuracyEstimate:
    """Analytic balanced (unweighted per-class recall) and dist-weighted accuracy."""
    recalls = class_recalls(config, profiles, len(dist))
    return AccuracyEstimate(sum(recalls) / len(recalls),
                            sum(w * r for w, r in zip(dist, recalls)))
