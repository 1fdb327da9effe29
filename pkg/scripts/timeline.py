"""Per-inference latency over the first pass of the SCD Mismatch-Major trace.

Writes a plot-ready series (inference, static, dynamic, ours, each raw and
smoothed with a trailing moving average) and the LC/GC events of the Ours run,
so the moment the LC disables an SP and the GC ships SP0 can be lined up with
the latency drop.

Run:  python scripts/timeline.py [--preset scd_major] [--window 20] [--out results]
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from hiercascade import Mode, SchedulerParams, generate_trace, run_simulation, schedule
from hiercascade.messages import write_events
from hiercascade.presets import load_setup

MODES = (Mode.STATIC, Mode.DYNAMIC, Mode.OURS)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` points (fewer at the start)."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    hi = np.arange(1, len(x) + 1)
    lo = np.maximum(hi - window, 0)
    return (c[hi] - c[lo]) / (hi - lo)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--preset", default="scd_major")
    ap.add_argument("--window", type=int, default=20)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    task, sc, cons, policy = load_setup(args.preset)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    params = SchedulerParams()
    decision = schedule(task, cons, params)
    trace = generate_trace(task.stats.class_distribution, sc,
                           [task[s].target for s in decision.order], task.test_size)
    n = len(trace)
    series, ours = {}, None
    for mode in MODES:
        run = run_simulation(task, decision, sc, cons, policy, params, mode=mode, trace=trace)
        series[mode] = np.array([r["latency_ms"] for r in run.records[:n]])
        if mode is Mode.OURS:
            ours = run

    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"timeline_{args.preset}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["inference"] + [f"{m}_ms" for m in MODES] + [f"{m}_ma" for m in MODES])
        smooth = {m: moving_average(series[m], args.window) for m in MODES}
        for i in range(n):
            w.writerow([i + 1] + [series[m][i] for m in MODES] + [smooth[m][i] for m in MODES])
    events = [e for e in ours.events if e.index <= n and e.action != "TELEMETRY"]
    write_events(args.out / f"timeline_{args.preset}_events.csv", events)

    for e in events:
        print(f"{e.index:5d}  {e.source:<4} {e.action:<13} {e.sp_id:<4} {e.detail}")
    for m in MODES:
        print(f"{str(m):<8} mean {series[m].mean():6.2f} ms over the first pass")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
