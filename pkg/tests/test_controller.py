import numpy as np
import pytest

from hiercascade import (CascadeConfig, ConfigError, ConstraintUnsatisfiable, EmaState, ExitKind,
                         InferenceOutcome, LcPolicy, LocalController, LocalStore, NodeConstraints,
                         on_inference, reconcile_enabled, safety_check, update_ema,
                         worst_case_latency)

from test_engine import make_fb, make_sp

N = 7


@pytest.fixture
def profiles():
    p = {s.id: s for s in (make_sp(c, [(0.5, 0.5)] * N) for c in range(N))}
    p["FB"] = make_fb(N)
    return p


def cfg(order, enabled=None):
    return CascadeConfig(tuple(order), "FB", enabled=enabled)


def outcome(latency, predicted=0):
    return InferenceOutcome(predicted, ("FB",), 31.64e6, latency, 18.13, ExitKind.FB_ONLY)


def test_update_ema_examples():
    s = update_ema(EmaState(0.1, (0.5, 0.3, 0.2, 0.0)), 0)
    assert s.values == pytest.approx((0.55, 0.27, 0.18, 0.0))
    s = update_ema(EmaState(0.1, (0.1, 0.2, 0.2, 0.5)), 3)
    assert s.values[3] == pytest.approx(0.55)
    assert update_ema(EmaState(1.0, (0.2, 0.3, 0.5)), 2).values == (0.0, 0.0, 1.0)


def test_update_ema_geometric_limit():
    s = EmaState(0.05, (0.0, 0.5, 0.5))
    for _ in range(1000):
        s = update_ema(s, 0)
    assert s.values[0] >= 1 - 0.95 ** 1000 - 1e-12
    assert s.values[0] == pytest.approx(1.0, abs=1e-9)


def test_ema_alpha_validated():
    with pytest.raises(ConfigError):
        EmaState(0.0, (1.0,))
    with pytest.raises(ConfigError):
        LcPolicy(tau=1.5)
    with pytest.raises(ConfigError):
        LcPolicy(tau=0.2, tau_on=0.1)


def ema(**by_class):
    v = [0.0] * N
    for k, x in by_class.items():
        v[int(k[1:])] = x
    return EmaState(0.05, tuple(v))


def test_reconcile_disables_rare_last_sp(profiles):
    state = ema(c6=0.5, c2=0.3, c5=0.01, c0=0.19)
    store = LocalStore({"SP6", "SP2", "SP5"})
    out = reconcile_enabled(state, store, cfg(["SP6", "SP2", "SP5"]), LcPolicy(tau=0.05),
                            NodeConstraints(1e9, 50.0, 0.1), profiles)
    assert out.enabled_sps == ("SP6", "SP2")


def test_reconcile_reenables_stored_sp_first(profiles):
    state = ema(c0=0.6, c6=0.2, c2=0.2)
    store = LocalStore({"SP6", "SP2", "SP0"})
    start = cfg(["SP6", "SP2", "SP0"], (True, True, False))
    out = reconcile_enabled(state, store, start, LcPolicy(tau=0.05), NodeConstraints(1e9, 50.0, 0.1),
                            profiles)
    assert out.enabled_sps[0] == "SP0" and set(out.enabled_sps) == {"SP0", "SP2", "SP6"}


def test_reconcile_picks_up_newly_stored_sp(profiles):
    state = ema(c0=0.6, c6=0.2, c2=0.2)
    out = reconcile_enabled(state, LocalStore({"SP6", "SP2", "SP0"}), cfg(["SP6", "SP2"]),
                            LcPolicy(tau=0.05), NodeConstraints(1e9, 50.0, 0.1), profiles)
    assert out.enabled_sps == ("SP0", "SP2", "SP6")


def test_reconcile_sorts_by_ema(profiles):
    state = ema(c0=0.1, c1=0.5, c2=0.4)
    out = reconcile_enabled(state, LocalStore({"SP0", "SP1", "SP2"}), cfg(["SP0", "SP1", "SP2"]),
                            LcPolicy(tau=0.05), NodeConstraints(1e9, 50.0, 0.1), profiles)
    assert out.enabled_sps == ("SP1", "SP2", "SP0")


def test_reconcile_never_enables_unstored(profiles):
    state = ema(c0=0.9, c1=0.1)
    out = reconcile_enabled(state, LocalStore({"SP1"}), cfg(["SP1", "SP0"], (True, False)),
                            LcPolicy(tau=0.05), NodeConstraints(1e9, 50.0, 0.1), profiles)
    assert out.enabled_sps == ("SP1",)


def test_low_battery_enables_every_stored_sp(profiles):
    state = ema(c0=0.98, c1=0.01, c2=0.01)
    store = LocalStore({"SP0", "SP1", "SP2"})
    start = cfg(["SP0", "SP1", "SP2"], (True, False, False))
    cons = NodeConstraints(1e9, 50.0, 0.1)
    assert reconcile_enabled(state, store, start, LcPolicy(tau=0.05), cons, profiles).depth == 1
    out = reconcile_enabled(state, store, start, LcPolicy(tau=0.05, low_battery_mode=True), cons, profiles)
    assert out.enabled_sps == ("SP0", "SP1", "SP2")


def test_hysteresis(profiles):
    state = ema(c0=0.08, c1=0.92)
    store = LocalStore({"SP0", "SP1"})
    off = cfg(["SP1", "SP0"], (True, False))
    on = cfg(["SP1", "SP0"])
    pol = LcPolicy(tau=0.05, tau_on=0.1)
    cons = NodeConstraints(1e9, 50.0, 0.1)
    assert reconcile_enabled(state, store, off, pol, cons, profiles).enabled_sps == ("SP1",)
    assert reconcile_enabled(state, store, on, pol, cons, profiles).enabled_sps == ("SP1", "SP0")


def test_safety_check_shrinks_to_one_sp(profiles):
    cons = NodeConstraints(1e9, 15.5, 0.5)
    start = cfg(["SP0", "SP1", "SP2"])
    assert worst_case_latency(start, cons, profiles) == pytest.approx(16.06)
    out = safety_check(start, cons, profiles)
    assert out.enabled_sps == ("SP0",)
    assert worst_case_latency(out, cons, profiles) == pytest.approx(15.18)


def test_safety_check_fixed_points(profiles):
    start = cfg(["SP0", "SP1", "SP2"])
    assert safety_check(start, NodeConstraints(1e9, 50.0, 0.5), profiles) is start
    empty = cfg([])
    assert safety_check(empty, NodeConstraints(1e9, 50.0, 0.5), profiles) is empty


def test_safety_check_fallback_too_slow(profiles):
    with pytest.raises(ConstraintUnsatisfiable):
        safety_check(cfg(["SP0"]), NodeConstraints(1e9, 14.0, 0.5), profiles)


def test_safety_check_scales_with_cpu(profiles):
    out = safety_check(cfg(["SP0", "SP1", "SP2"]), NodeConstraints(1e9, 50.0, 0.1), profiles, cpu_scale=3.4)
    assert worst_case_latency(out, 0.1, profiles, 3.4) <= 50.0
    assert out.depth < 3


def test_on_inference_without_trigger_only_updates_ema(profiles):
    start = cfg(["SP6", "SP2", "SP5"])
    store = LocalStore(set(start.ordered_sps))
    state = EmaState(0.05, (0.0,) * 6 + (1.0,))
    cons = NodeConstraints(1e9, 50.0, 0.1)
    new_state, out = on_inference(outcome(14.7, predicted=0), state, store, start, cons,
                                  LcPolicy(tau=0.05), profiles, index=7)
    assert out == start
    assert new_state.values[0] == pytest.approx(0.05)


def test_on_inference_miss_triggers_reconcile(profiles):
    start = cfg(["SP5", "SP2", "SP6"])
    store = LocalStore(set(start.ordered_sps))
    state = EmaState(0.05, (0.0, 0.0, 0.5, 0.0, 0.0, 0.01, 0.49))
    cons = NodeConstraints(1e9, 50.0, 0.1)
    _, out = on_inference(outcome(51.0, predicted=2), state, store, start, cons,
                          LcPolicy(tau=0.05), profiles, index=7)
    assert out.enabled_sps == ("SP2", "SP6")
    assert worst_case_latency(out, cons, profiles) <= 50.0


def test_local_controller_logs_actions(profiles):
    start = cfg(["SP5", "SP6", "SP2"])
    lc = LocalController(start, LocalStore(set(start.ordered_sps)),
                         EmaState(0.05, (0.0, 0.0, 0.5, 0.0, 0.0, 0.01, 0.49)), LcPolicy(tau=0.05),
                         NodeConstraints(1e9, 50.0, 0.1), profiles)
    events = lc.step(outcome(14.0, predicted=2), index=20)
    assert [e.action for e in events] == ["DISABLE", "REORDER"]
    assert events[0].sp_id == "SP5" and events[0].source == "LC"
    assert events[1].detail == "SP2>SP6" and lc.config.enabled_sps == ("SP2", "SP6")


def test_local_controller_rejects_unstored_enabled(profiles):
    with pytest.raises(ConfigError):
        LocalController(cfg(["SP0"]), LocalStore(set()), EmaState(0.05, (1.0,) + (0.0,) * 6),
                        LcPolicy(), NodeConstraints(1e9, 50.0, 0.1), profiles)


def test_reconcile_idempotent(profiles):
    rng = np.random.default_rng(0)
    cons = NodeConstraints(1e9, 16.0, 0.1)
    for _ in range(200):
        values = rng.dirichlet(np.ones(N))
        state = EmaState(0.05, tuple(values))
        stored = {f"SP{c}" for c in range(N) if rng.random() < 0.7}
        order = list(rng.permutation(sorted(stored)))
        start = cfg(order, tuple(rng.random(len(order)) < 0.5))
        pol = LcPolicy(tau=float(rng.uniform(0, 0.3)))
        once = reconcile_enabled(state, LocalStore(stored), start, pol, cons, profiles)
        assert reconcile_enabled(state, LocalStore(stored), once, pol, cons, profiles) == once
