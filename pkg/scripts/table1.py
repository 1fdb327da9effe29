"""Static / Dynamic / Ours deployment comparison on both shipped calibrations.

Runs every shipped scenario preset (base, mismatch-minor, mismatch-major) of
each calibration, all three modes on the same trace, and writes one row per
(task, scenario, mode) next to reference hardware measurements. Absolute
milliseconds are not expected to match: the latencies are calibration inputs
and the confidence histograms are synthetic. The relative trends are what
carries over.

Run:  python scripts/table1.py [--out results/table1.csv]
"""

from __future__ import annotations

import argparse
import csv
import time
from pathlib import Path

from hiercascade import SchedulerParams, run_comparison, schedule
from hiercascade.presets import load_setup

PRESETS = {"scd-like": ("scd_base", "scd_minor", "scd_major"),
           "cifar-like": ("cifar_base", "cifar_minor", "cifar_major")}

# reference (latency ms, energy mJ) per task / scenario kind / mode
REFERENCE = {
    ("scd-like", "base"): {"static": (14.24, 18.13), "dynamic": (5.66, 6.31), "ours": (5.82, 6.32)},
    ("scd-like", "mismatch-minor"): {"static": (14.24, 18.13), "dynamic": (4.05, 4.07), "ours": (3.98, 3.99)},
    ("scd-like", "mismatch-major"): {"static": (14.24, 18.13), "dynamic": (9.81, 11.81), "ours": (5.96, 6.54)},
    ("cifar-like", "base"): {"static": (33.65, 43.88), "dynamic": (30.35, 38.62), "ours": (28.32, 36.28)},
    ("cifar-like", "mismatch-minor"): {"static": (33.65, 43.88), "dynamic": (27.41, 34.91), "ours": (24.22, 30.65)},
    ("cifar-like", "mismatch-major"): {"static": (33.65, 43.88), "dynamic": (30.14, 38.62), "ours": (28.28, 36.28)},
}
FIELDS = ("task", "scenario", "kind", "mode", "sp_order", "mean_latency_ms", "mean_energy_mj",
          "balanced_accuracy", "deadline_misses", "speedup_vs_static",
          "ref_latency_ms", "ref_energy_mj", "ref_speedup_vs_static")


def table_rows(task_name: str, params: SchedulerParams) -> list[dict]:
    rows = []
    decision = None
    for preset in PRESETS[task_name]:
        task, sc, cons, policy = load_setup(preset)
        decision = decision or schedule(task, cons, params)
        out = run_comparison(task, decision, [sc], cons, policy, params)
        static = next(r["mean_latency_ms"] for r in out if r["mode"] == "static")
        ref = REFERENCE[task_name, sc.kind]
        for r in out:
            lat, en = ref[r["mode"]]
            rows.append({**{k: r[k] for k in ("task", "scenario", "mode", "sp_order", "mean_latency_ms",
                                               "mean_energy_mj", "balanced_accuracy", "deadline_misses")},
                         "kind": sc.kind,
                         "speedup_vs_static": static / r["mean_latency_ms"],
                         "ref_latency_ms": lat, "ref_energy_mj": en,
                         "ref_speedup_vs_static": ref["static"][0] / lat})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", type=Path, default=Path("results/table1.csv"))
    args = ap.parse_args()
    params = SchedulerParams()
    rows = []
    for name in PRESETS:
        t0 = time.perf_counter()
        rows += table_rows(name, params)
        print(f"{name}: {time.perf_counter() - t0:.1f} s")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    print(f"{'task':<11} {'scenario':<15} {'mode':<8} {'order':<6} {'ms':>7} {'mJ':>7} "
          f"{'x':>6} | {'ref ms':>7} {'ref x':>6}")
    for r in rows:
        print(f"{r['task']:<11} {r['kind']:<15} {r['mode']:<8} {r['sp_order']:<6} "
              f"{r['mean_latency_ms']:7.2f} {r['mean_energy_mj']:7.2f} {r['speedup_vs_static']:6.2f} | "
              f"{r['ref_latency_ms']:7.2f} {r['ref_speedup_vs_static']:6.2f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
