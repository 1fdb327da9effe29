"""Local controller: per-class EMA of predictions, SP enable/disable/sort, latency guard."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .engine import CascadeConfig, InferenceOutcome, worst_case_latency
from .errors import ConfigError, ConstraintUnsatisfiable
from .messages import Event
from .profiles import PredictorProfile


@dataclass(frozen=True)
class EmaState:
    alpha: float
    values: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def initial(cls, alpha: float, distribution: Sequence[float]) -> "EmaState":
        return cls(alpha, tuple(distribution))


@dataclass(frozen=True)
class LcPolicy:
    """Thresholds and cadence of the local controller.

    The defaults are tuned on the shipped SCD-like calibration: with them the
    EMA of the class-5 SP crosses ``tau`` about 180 inferences into the
    Mismatch-Major trace (median over trace seeds). ``tau`` is a class
    frequency, so other tasks need their own value (see the scenario presets).

    ``tau_on`` enables hysteresis (re-enable only above ``tau_on``); by default
    one threshold serves both directions.
    """

    tau: float = 0.145
    alpha: float = 0.003
    reconcile_period: int = 20
    tau_on: float | None = None
    low_battery_mode: bool = False
    battery_threshold: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.tau_on is not None and not self.tau <= self.tau_on <= 1.0:
            raise ConfigError("tau_on must lie in [tau, 1]")
        if self.reconcile_period < 0:
            raise ConfigError("reconcile_period must be >= 0 (0 disables periodic reconcile)")

    @property
    def enable_threshold(self) -> float:
        return self.tau if self.tau_on is None else self.tau_on


@dataclass
class LocalStore:
    """SPs physically present on the node."""

    stored_sps: set[str] = field(default_factory=set)

    def add(self, sp_id: str) -> None:
        self.stored_sps.add(sp_id)

    def __contains__(self, sp_id) -> bool:
        return sp_id in self.stored_sps


def update_ema(state: EmaState, predicted: int) -> EmaState:
    a = state.alpha
    values = tuple((1.0 - a) * v + (a if c == predicted else 0.0)
                   for c, v in enumerate(state.values))
    return replace(state, values=values)


def _ema_of(sid, state, profiles):
    return state.values[profiles[sid].target]


def safety_check(config: CascadeConfig, constraints, profiles: Mapping[str, PredictorProfile],
                 cpu_scale: float = 1.0) -> CascadeConfig:
    """Disable the last enabled SPs until the worst-case latency meets the deadline."""
    fb_only = config.with_order(config.ordered_sps, [False] * len(config.ordered_sps))
    if worst_case_latency(fb_only, constraints, profiles, cpu_scale) > constraints.deadline_ms:
        raise ConstraintUnsatisfiable(
            f"fallback alone exceeds the {constraints.deadline_ms} ms deadline"
        )
    enabled = list(config.enabled)
    while worst_case_latency(config.with_order(config.ordered_sps, enabled), constraints,
                             profiles, cpu_scale) > constraints.deadline_ms:
        last = max(i for i, e in enumerate(enabled) if e)
        enabled[last] = False
    if enabled == list(config.enabled):
        return config
    return config.with_order(config.ordered_sps, enabled)


def reconcile_enabled(state: EmaState, store: LocalStore, config: CascadeConfig, policy: LcPolicy,
                      constraints, profiles: Mapping[str, PredictorProfile],
                      cpu_scale: float = 1.0, low_battery: bool | None = None) -> CascadeConfig:
    """Apply the tau rule, sort enabled SPs by EMA, then enforce the latency guard.

    Stored SPs missing from ``config`` join the cascade as candidates. The
    result is canonical: enabled SPs first by EMA descending (ties by id),
    disabled ones after in the same order.
    """
    out = _tau_and_sort(state, store, config, policy, profiles, low_battery)
    return safety_check(out, constraints, profiles, cpu_scale)


def _tau_and_sort(state, store, config, policy, profiles, low_battery):
    low_battery = policy.low_battery_mode if low_battery is None else low_battery
    was_enabled = dict(zip(config.ordered_sps, config.enabled))
    pool = list(config.ordered_sps) + sorted(s for s in store.stored_sps if s not in was_enabled)
    enabled = set()
    for sid in pool:
        ema = _ema_of(sid, state, profiles)
        if was_enabled.get(sid, False):
            if ema >= policy.tau or (low_battery and sid in store):
                enabled.add(sid)
        elif sid in store and (low_battery or ema > policy.enable_threshold):
            enabled.add(sid)
    key = lambda s: (-_ema_of(s, state, profiles), s)
    on = sorted(enabled, key=key)
    off = sorted((s for s in pool if s not in enabled), key=key)
    return config.with_order(on + off, [True] * len(on) + [False] * len(off))


def _reconcile_due(outcome, index, policy, constraints) -> bool:
    missed = outcome.latency_ms > constraints.deadline_ms
    periodic = policy.reconcile_period > 0 and index % policy.reconcile_period == 0
    return missed or periodic


def on_inference(outcome: InferenceOutcome, state: EmaState, store: LocalStore,
                 config: CascadeConfig, constraints, policy: LcPolicy,
                 profiles: Mapping[str, PredictorProfile], *, index: int,
                 cpu_scale: float = 1.0, low_battery: bool | None = None
                 ) -> tuple[EmaState, CascadeConfig]:
    """Post-inference LC step. ``index`` counts completed inferences (1-based).

    Reconciles on a deadline miss or every ``policy.reconcile_period``
    inferences, and always returns a cascade that meets the latency guard at
    the current ``cpu_scale``.
    """
    state = update_ema(state, outcome.predicted)
    if _reconcile_due(outcome, index, policy, constraints):
        config = _tau_and_sort(state, store, config, policy, profiles, low_battery)
    return state, safety_check(config, constraints, profiles, cpu_scale)


class LocalController:
    """Owns the EMA, the local store and the active cascade; logs every action."""

    def __init__(self, config: CascadeConfig, store: LocalStore, state: EmaState,
                 policy: LcPolicy, constraints, profiles: Mapping[str, PredictorProfile]):
        missing = set(config.enabled_sps) - store.stored_sps
        if missing:
            raise ConfigError(f"enabled SPs not stored on the node: {sorted(missing)}")
        self.config = config
        self.store = store
        self.state = state
        self.policy = policy
        self.constraints = constraints
        self.profiles = profiles

    def step(self, outcome: InferenceOutcome, index: int, cpu_scale: float = 1.0,
             low_battery: bool | None = None) -> list[Event]:
        """Same transition as :func:`on_inference`, with the actions it took."""
        before = self.config
        self.state = update_ema(self.state, outcome.predicted)
        events = []
        mid = before
        if _reconcile_due(outcome, index, self.policy, self.constraints):
            mid = _tau_and_sort(self.state, self.store, before, self.policy, self.profiles,
                                low_battery)
            events += _tau_events(before, mid, index, self.state.values)
        after = safety_check(mid, self.constraints, self.profiles, cpu_scale)
        for sid in mid.enabled_sps:
            if sid not in after.enabled_sps:
                events.append(Event(index, "LC", "SAFETY_SHRINK", sid, "", self.state.values))
        self.config = after
        return events

    def reconcile_now(self, index: int, cpu_scale: float = 1.0,
                      low_battery: bool | None = None) -> list[Event]:
        """Out-of-cycle reconcile, e.g. right after the GC delivered an SP."""
        mid = _tau_and_sort(self.state, self.store, self.config, self.policy, self.profiles,
                            low_battery)
        events = _tau_events(self.config, mid, index, self.state.values)
        after = safety_check(mid, self.constraints, self.profiles, cpu_scale)
        events += [Event(index, "LC", "SAFETY_SHRINK", s, "", self.state.values)
                   for s in mid.enabled_sps if s not in after.enabled_sps]
        self.config = after
        return events

    def snapshot(self) -> tuple[float, ...]:
        return tuple(self.state.values)


def _tau_events(before: CascadeConfig, after: CascadeConfig, index: int, ema) -> list[Event]:
    b_on, a_on = before.enabled_sps, after.enabled_sps
    events = [Event(index, "LC", "DISABLE", s, "", ema) for s in b_on if s not in a_on]
    events += [Event(index, "LC", "ENABLE", s, "", ema) for s in a_on if s not in b_on]
    kept_b = [s for s in b_on if s in a_on]
    kept_a = [s for s in a_on if s in b_on]
    if kept_b != kept_a:
        events.append(Event(index, "LC", "REORDER", "", ">".join(a_on), ema))
    return events
