"""Invariant suite. Runs on its own: ``pytest tests/test_properties.py``."""

import dataclasses
import hashlib

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hiercascade import (CascadeConfig, EmaState, ExitKind, InferenceOutcome, LcPolicy,
                         LocalController, LocalStore, NodeConstraints, SchedulerParams,
                         exit_probabilities, reconcile_enabled, run_simulation, schedule,
                         update_ema, worst_case_latency)
from hiercascade.presets import load_setup

from helpers import random_task, ref_regions

simplex = st.integers(2, 10).flatmap(
    lambda n: st.lists(st.floats(0.001, 1.0), min_size=n, max_size=n)).map(
    lambda w: tuple(np.asarray(w) / np.sum(w)))


@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(start=simplex, alpha=st.floats(1e-4, 1.0), data=st.data())
def test_ema_stays_on_simplex(start, alpha, data):
    n = len(start)
    seq = data.draw(st.lists(st.integers(0, n - 1), max_size=40))
    state = EmaState(alpha, start)
    for c in seq:
        state = update_ema(state, c)
        assert abs(sum(state.values) - 1.0) <= 1e-9
        assert all(0.0 <= v <= 1.0 for v in state.values)


def _sorted_by_ema(config, state, profiles):
    e = [state.values[profiles[s].target] for s in config.enabled_sps]
    return all(a >= b for a, b in zip(e, e[1:]))


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tau=st.floats(0.0, 0.4), low=st.booleans(),
       slack=st.floats(0.0, 4.0))
def test_reconcile_sorted_subset_and_safe(seed, tau, low, slack):
    rng = np.random.default_rng(seed)
    task = random_task(rng, 6)
    ids = list(task.sp_ids)
    stored = {s for s in ids if rng.random() < 0.7}
    order = list(rng.permutation(ids))[:int(rng.integers(0, 7))]
    mask = [s in stored and rng.random() < 0.6 for s in order]
    config = CascadeConfig.for_task(task, order).with_order(order, mask)
    state = EmaState(0.05, tuple(rng.dirichlet(np.ones(6))))
    cons = NodeConstraints(1e12, task.fallback.latency_ms + 0.1 + slack, 0.1)
    out = reconcile_enabled(state, LocalStore(stored), config, LcPolicy(tau=tau, low_battery_mode=low),
                            cons, task.profiles)
    assert _sorted_by_ema(out, state, task.profiles)
    assert set(out.enabled_sps) <= stored
    assert worst_case_latency(out, cons, task.profiles) <= cons.deadline_ms


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.005, 0.3), tau=st.floats(0.0, 0.3),
       period=st.integers(1, 25), slack=st.floats(0.0, 4.0))
def test_controller_loop_invariants(seed, alpha, tau, period, slack):
    """Drive an LC with random outcomes, deliveries and CPU steps; check every step."""
    rng = np.random.default_rng(seed)
    task = random_task(rng, 6)
    ids = list(task.sp_ids)
    initial = [s for s in ids if rng.random() < 0.5]
    cons = NodeConstraints(1e12, task.fallback.latency_ms * 1.5 + 0.1 + slack, 0.1)
    lc = LocalController(CascadeConfig.for_task(task, initial), LocalStore(set(initial)),
                         EmaState.initial(alpha, task.stats.class_distribution),
                         LcPolicy(tau=tau, reconcile_period=period), cons, task.profiles)
    scale = 1.0
    for i in range(1, 301):
        if rng.random() < 0.02:
            scale = float(rng.uniform(1.0, 1.5))
        if rng.random() < 0.02:
            lc.store.add(str(rng.choice(ids)))
            lc.reconcile_now(i, scale)
        lat = float(rng.uniform(1, cons.deadline_ms * 1.1))
        out = InferenceOutcome(int(rng.integers(6)), ("FB",), 1.0, lat, 1.0, ExitKind.FB_ONLY)
        reconciled = lat > cons.deadline_ms or i % period == 0
        lc.step(out, i, scale)
        assert set(lc.config.enabled_sps) <= lc.store.stored_sps
        assert worst_case_latency(lc.config, cons, task.profiles, scale) <= cons.deadline_ms
        assert abs(sum(lc.state.values) - 1.0) <= 1e-9
        if reconciled:
            assert _sorted_by_ema(lc.config, lc.state, task.profiles)


thresholds = st.tuples(st.floats(0, 1), st.floats(0, 1)).map(sorted)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), thr=thresholds, c=st.integers(0, 3))
def test_exit_probabilities_normalized(seed, thr, c):
    task = random_task(np.random.default_rng(seed), 4)
    for p in (*task.sps, task.fallback):
        got = exit_probabilities(p, c, *thr)
        assert abs(sum(got) - 1.0) <= 1e-9
        assert min(got) >= 0
        assert got == pytest.approx(ref_regions(p, c, *thr), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lo=st.floats(0, 1), a=st.floats(0, 1), b=st.floats(0, 1),
       c=st.integers(0, 2))
def test_threshold_monotonicity(seed, lo, a, b, c):
    p = random_task(np.random.default_rng(seed), 3).sps[0]
    hi1, hi2 = sorted((max(lo, a), max(lo, b)))
    # raising thr_plus never raises p_accept
    assert exit_probabilities(p, c, lo, hi2)[0] <= exit_probabilities(p, c, lo, hi1)[0] + 1e-12
    lo1, lo2 = sorted((min(a, hi1), min(b, hi1)))
    # raising thr_minus never lowers p_reject
    assert exit_probabilities(p, c, lo2, hi1)[1] >= exit_probabilities(p, c, lo1, hi1)[1] - 1e-12


def run_digest(preset: str, out_dir) -> str:
    task, sc, cons, pol = load_setup(preset)
    sc = dataclasses.replace(sc, repetitions=1)
    decision = schedule(task, cons, SchedulerParams())
    run_simulation(task, decision, sc, cons, pol).write(out_dir)
    h = hashlib.sha256()
    for name in ("records.csv", "events.csv", "summary.json"):
        h.update((out_dir / name).read_bytes())
    return h.hexdigest()


@pytest.mark.parametrize("preset", ["scd_base", "scd_minor", "scd_major", "cifar_major"])
def test_double_run_hash_equal(tmp_path, preset):
    assert run_digest(preset, tmp_path / "a") == run_digest(preset, tmp_path / "b")
