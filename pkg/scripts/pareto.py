"""Accuracy-drop vs expected-MAC frontier for both shipped calibrations.

Sweeps the drop budget over 0..10% in 1% steps under each task's shipped node
constraints and writes one CSV per task (same columns as ``hiercascade
pareto``) plus a combined file with a ``task`` column.

Run:  python scripts/pareto.py [--out results] [--step 0.01]
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from hiercascade import SchedulerParams
from hiercascade.cli import PARETO_FIELDS, pareto_rows
from hiercascade.presets import load_setup

TASKS = {"scd-like": "scd_base", "cifar-like": "cifar_base"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--max-drop", type=float, default=0.10)
    args = ap.parse_args()
    grid = np.round(np.arange(0.0, args.max_drop + 1e-9, args.step), 6).tolist()
    args.out.mkdir(parents=True, exist_ok=True)
    combined = []
    for name, preset in TASKS.items():
        task, _, cons, _ = load_setup(preset)
        rows = pareto_rows(task, cons, SchedulerParams(), grid)
        with open(args.out / f"pareto_{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=PARETO_FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        combined += [{"task": name, **r} for r in rows]
        print(f"== {name} (FB {task.fallback.macs / 1e6:.2f} M MACs, "
              f"balanced acc {task.stats.fb_balanced_accuracy:.4f})")
        for r in rows:
            if r["order"] == "" and r["reasons"]:
                print(f"  {r['drop_budget']:.2f}  infeasible: {r['reasons']}")
                continue
            print(f"  {r['drop_budget']:.2f}  drop {100 * r['accuracy_drop']:6.2f}%  "
                  f"MACs -{100 * r['mac_reduction']:5.2f}%  order [{r['order']}]")
    with open(args.out / "pareto.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["task", *PARETO_FIELDS], lineterminator="\n")
        w.writeheader()
        w.writerows(combined)
    print(f"wrote {args.out}/pareto_*.csv")


if __name__ == "__main__":
    main()
