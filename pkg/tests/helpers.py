"""Random tasks and a from-scratch reference model used as test oracles.

The reference functions re-derive routing probabilities straight from the
histogram masses and never call into ``hiercascade.engine``.
"""

from __future__ import annotations

import itertools

import numpy as np

from hiercascade import ConfidenceProfile, PredictorProfile, Task, ValidationStats



def random_task(rng: np.random.Generator, n_sps: int, n_classes: int | None = None,
                *, thr=(0.1, 0.9), bins: int = 10, sharp: float = 1.0) -> Task:
    """Task with ``n_sps`` SPs on the first classes, random costs and histograms.

    ``sharp`` > 1 concentrates SP confidence near 1 on the target class and
    near 0 elsewhere, which makes early exits likely.
    """
    n = n_classes or n_sps
    edges = np.linspace(0.0, 1.0, bins + 1)
    dist = rng.dirichlet(np.full(n, 2.0))
    diag = rng.uniform(0.6, 0.97, n) if n > 1 else np.ones(1)
    confusion = np.zeros((n, n))
    for c in range(n):
        off = rng.dirichlet(np.ones(n - 1)) * (1 - diag[c]) if n > 1 else np.array([])
        confusion[c] = np.insert(off, c, diag[c])
    fb = PredictorProfile("FB", macs=rng.uniform(20e6, 100e6), memory_bytes=rng.uniform(2e6, 9e6),
                          latency_ms=rng.uniform(10, 35), energy_mj=rng.uniform(10, 45),
                          confidence=ConfidenceProfile(edges, rng.dirichlet(np.ones(bins), n)),
                          confusion=confusion)
    ramp = np.linspace(0, 1, bins) ** sharp
    sps = []
    for c in range(n_sps):
        rows = []
        for k in range(n):
            w = ramp if k == c else ramp[::-1]
            rows.append(rng.dirichlet(0.3 + 3 * w))
        sps.append(PredictorProfile(f"SP{c}", macs=rng.uniform(0.4e6, 1.2e6),
                                    memory_bytes=rng.uniform(1e5, 4e5),
                                    latency_ms=rng.uniform(0.3, 0.8), energy_mj=rng.uniform(0.1, 0.5),
                                    confidence=ConfidenceProfile(edges, np.array(rows)), target=c))
    stats = ValidationStats(tuple(dist / dist.sum()), float(np.mean(np.diag(confusion))))
    return Task("random", n, fb, tuple(sps), stats, thr_minus=thr[0], thr_plus=thr[1])


def ref_regions(p: PredictorProfile, c: int, lo_thr: float, hi_thr: float):
    """(accept, reject, undecided) by integrating the piecewise-uniform density."""
    e = p.confidence.edges
    m = p.confidence.mass[c]
    below = lambda t: float(sum(mk * min(max((t - a) / (b - a), 0.0), 1.0)
                                for mk, a, b in zip(m, e[:-1], e[1:])))
    bm, bp = below(lo_thr), below(hi_thr)
    return 1.0 - bp, bm, bp - bm


def ref_evaluate_config(task: Task, order, dist=None, t_lc: float = 0.0) -> dict:
    """Expected MACs / latency / energy and balanced accuracy of ``order``."""
    dist = task.stats.class_distribution if dist is None else dist
    fb = task.fallback
    macs = lat = en = 0.0
    recall = []
    for c in range(task.num_classes):
        reach, hit, cm, cl, ce = 1.0, 0.0, 0.0, 0.0, 0.0
        p_fb = 0.0
        for sid in order:
            sp = task[sid]
            a, r, u = ref_regions(sp, c, task.thr_minus, task.thr_plus)
            cm += reach * sp.macs
            cl += reach * sp.latency_ms
            ce += reach * sp.energy_mj
            if sp.target == c:
                hit += reach * a
            p_fb += reach * u
            reach *= r
        p_fb += reach
        cm += p_fb * fb.macs
        cl += p_fb * fb.latency_ms
        ce += p_fb * fb.energy_mj
        recall.append(hit + p_fb * fb.confusion[c][c])
        macs += dist[c] * cm
        lat += dist[c] * cl
        en += dist[c] * ce
    bal = float(np.mean(recall))
    return {"macs": macs, "latency_ms": lat + t_lc, "energy_mj": en, "balanced": bal,
            "drop": task.stats.fb_balanced_accuracy - bal,
            "memory": fb.memory_bytes + sum(task[s].memory_bytes for s in order),
            "wcl": t_lc + sum(task[s].latency_ms for s in order) + fb.latency_ms}


def exhaustive_best(task: Task, constraints, max_drop: float, eps: float = 1e-12):
    """Brute force over every ordered subset of SPs; returns (order, macs) or None."""
    best = None
    for k in range(len(task.sps) + 1):
        for order in itertools.permutations(task.sp_ids, k):
            r = ref_evaluate_config(task, order, t_lc=constraints.t_lc_ms)
            if (r["drop"] <= max_drop + eps and r["memory"] <= constraints.memory_budget_bytes
                    and r["wcl"] <= constraints.deadline_ms):
                key = (r["macs"], order)
                if best is None or key < best:
                    best = key
    return None if best is None else (best[1], best[0])
