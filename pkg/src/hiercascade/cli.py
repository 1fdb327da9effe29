"""Command-line entry point: ``hiercascade {schedule,pareto,simulate,compare}``.

Exit codes: 0 success, 2 infeasible task, 3 input error. Output files go to
``--out``, defaulting to ``$HIERCASCADE_OUT`` or ``./results``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from .controller import LcPolicy
from .errors import CalibrationError, ConfigError, InfeasibleTask, ScenarioError
from .presets import (calibration_names, load_calibration, load_preset, preset_constraints,
                      preset_policy, scenario_names)
from .scheduler import NodeConstraints, SchedulerParams, pareto_sweep, schedule
from .simulation import KINDS, Mode, WorkloadScenario, run_comparison, run_simulation

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3
OUT_ENV = "HIERCASCADE_OUT"
PARETO_FIELDS = ("drop_budget", "expected_macs", "expected_accuracy", "order",
                 "accuracy_drop", "mac_reduction", "reasons")
COMPARE_FIELDS = ("task", "scenario", "mode", "sp_order", "mean_latency_ms", "mean_energy_mj",
                  "balanced_accuracy", "deadline_misses", "inferences")


class InputError(Exception):
    pass


def _delay(text: str) -> float:
    v = float(text)  # accepts "inf"
    if v < 0 or math.isnan(v):
        raise argparse.ArgumentTypeError("gc delay must be >= 0 or inf")
    return v


def _grid(text: str) -> list[float]:
    return sorted(float(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("inputs")
    g.add_argument("--calibration", help=f"calibration JSON or shipped name ({', '.join(calibration_names())})")
    g.add_argument("--scenario", action="append",
                   help=f"scenario preset JSON or shipped name ({', '.join(scenario_names())}); "
                        "compare accepts it repeatedly")
    g.add_argument("--seed", type=int, help="override the scenario seed")
    g.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./results)")
    n = common.add_argument_group("node constraints")
    n.add_argument("--deadline-ms", type=float)
    n.add_argument("--memory-bytes", type=float)
    n.add_argument("--t-lc-ms", type=float)
    s = common.add_argument_group("scheduler")
    s.add_argument("--beam-width", type=int)
    s.add_argument("--max-drop", type=float, help="accuracy-drop budget (fraction, e.g. 0.04)")
    s.add_argument("--gc-period", type=int)
    s.add_argument("--gc-delay", type=_delay, default=0.0, help="inferences until a deployment lands; inf disables the GC")
    lc = common.add_argument_group("local controller")
    lc.add_argument("--alpha", type=float)
    lc.add_argument("--tau", type=float)

    ap = argparse.ArgumentParser(prog="hiercascade", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("schedule", parents=[common], help="pick the cascade for a node; writes decision.json")
    p = sub.add_parser("pareto", parents=[common], help="sweep the accuracy-drop budget; writes pareto.csv")
    p.add_argument("--grid", type=_grid, default=[i / 100 for i in range(11)],
                   help="comma-separated drop budgets (default 0,0.01,...,0.10)")
    p = sub.add_parser("simulate", parents=[common], help="closed-loop run of one scenario")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.OURS.value)
    p.add_argument("--threaded", action="store_true", help="run the GC in a worker thread")
    sub.add_parser("compare", parents=[common], help="Static/Dynamic/Ours across scenarios; writes compare.csv")
    return ap


@dataclasses.dataclass
class Manifest:
    task: object
    constraints: NodeConstraints
    params: SchedulerParams
    policy: LcPolicy
    scenarios: list[WorkloadScenario]
    policies: list[LcPolicy]
    out: Path
    gc_delay: float


def _override(obj, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    return dataclasses.replace(obj, **changes) if changes else obj


def _shipped_preset_for(calibration: str) -> dict:
    """First shipped preset using ``calibration``; supplies default node constraints."""
    name = Path(calibration).stem
    for s in scenario_names():
        doc = load_preset(s)
        if doc.get("calibration") == name:
            return doc
    return {}


def resolve(args) -> Manifest:
    """Merge scenario presets, calibration and flag overrides."""
    docs = [load_preset(s) for s in (args.scenario or [])]
    if args.command == "compare" and not docs:
        if not args.calibration:
            raise InputError("compare needs --scenario or --calibration")
        name = Path(args.calibration).stem
        docs = [d for d in map(load_preset, scenario_names()) if d.get("calibration") == name]
        docs.sort(key=lambda d: KINDS.index(d.get("kind", "base")))
        if not docs:
            raise InputError(f"no shipped scenarios use calibration {name!r}; pass --scenario")
    calib = args.calibration or (docs[0].get("calibration") if docs else None)
    if not calib:
        raise InputError("need --calibration or a --scenario preset naming one")
    task = load_calibration(calib)

    base = docs[0] if docs else _shipped_preset_for(calib)
    if base.get("constraints"):
        cons = preset_constraints(base)
        cons = NodeConstraints(
            args.memory_bytes if args.memory_bytes is not None else cons.memory_budget_bytes,
            args.deadline_ms if args.deadline_ms is not None else cons.deadline_ms,
            args.t_lc_ms if args.t_lc_ms is not None else cons.t_lc_ms)
    else:
        if args.deadline_ms is None:
            raise InputError("need --deadline-ms (or a scenario preset with constraints)")
        cons = NodeConstraints(math.inf if args.memory_bytes is None else args.memory_bytes,
                               args.deadline_ms, args.t_lc_ms or 0.0)
    params = _override(SchedulerParams(), beam_width=args.beam_width,
                       max_accuracy_drop=args.max_drop, gc_period=args.gc_period)
    scenarios, policies = [], []
    for d in docs:
        scenarios.append(_override(WorkloadScenario.from_dict(d), seed=args.seed))
        policies.append(_override(preset_policy(d), alpha=args.alpha, tau=args.tau))
    policy = policies[0] if policies else _override(LcPolicy(), alpha=args.alpha, tau=args.tau)
    out = args.out or Path(os.environ.get(OUT_ENV, "results"))
    return Manifest(task, cons, params, policy, scenarios, policies, out, args.gc_delay)


def cmd_schedule(m: Manifest) -> int:
    decision = schedule(m.task, m.constraints, m.params)
    doc = decision.to_dict(m.task)
    doc["task"] = m.task.name
    doc["constraints"] = dataclasses.asdict(m.constraints)
    m.out.mkdir(parents=True, exist_ok=True)
    (m.out / "decision.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def pareto_rows(task, constraints, params, grid) -> list[dict]:
    rows = []
    fb_macs = task.fallback.macs
    for budget, d in pareto_sweep(task, constraints, params, grid):
        if isinstance(d, InfeasibleTask):
            rows.append({"drop_budget": budget, "expected_macs": "", "expected_accuracy": "",
                         "order": "", "accuracy_drop": "", "mac_reduction": "",
                         "reasons": " ".join(d.reasons)})
            continue
        rows.append({
            "drop_budget": budget,
            "expected_macs": d.expected.macs,
            "expected_accuracy": d.accuracy.balanced,
            "order": " ".join(str(task[s].target) for s in d.order),
            "accuracy_drop": d.accuracy_drop,
            "mac_reduction": 1.0 - d.expected.macs / fb_macs,
            "reasons": "",
        })
    return rows


def _write_csv(path: Path, fields, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_pareto(m: Manifest, grid) -> int:
    rows = pareto_rows(m.task, m.constraints, m.params, grid)
    _write_csv(m.out / "pareto.csv", PARETO_FIELDS, rows)
    for r in rows:
        if r["order"] == "" and r["reasons"]:
            print(f"{r['drop_budget']:.3f}  infeasible ({r['reasons']})")
        else:
            print(f"{r['drop_budget']:.3f}  macs {r['expected_macs'] / 1e6:8.3f} M  "
                  f"-{100 * r['mac_reduction']:5.2f}%  drop {100 * r['accuracy_drop']:5.2f}%  "
                  f"order [{r['order']}]")
    print(f"wrote {m.out / 'pareto.csv'}")
    return EXIT_OK


def _print_summary(s: dict) -> None:
    keys = ("scenario", "mode", "inferences", "mean_latency_ms", "p95_latency_ms", "mean_energy_mj",
            "balanced_accuracy", "deadline_misses", "wcl_violations")
    width = max(len(k) for k in keys)
    for k in keys:
        v = s[k]
        print(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}")


def cmd_simulate(m: Manifest, mode: str, threaded: bool) -> int:
    if len(m.scenarios) != 1:
        raise InputError("simulate needs exactly one --scenario")
    decision = schedule(m.task, m.constraints, m.params)
    run = run_simulation(m.task, decision, m.scenarios[0], m.constraints, m.policy, m.params,
                         mode=Mode(mode), gc_delay=m.gc_delay, threaded=threaded)
    summary = run.write(m.out)
    _print_summary(summary)
    print(f"wrote {m.out}/records.csv, events.csv, summary.json")
    return EXIT_OK


def cmd_compare(m: Manifest) -> int:
    decision = schedule(m.task, m.constraints, m.params)
    rows = []
    for sc, pol in zip(m.scenarios, m.policies):
        rows += run_comparison(m.task, decision, [sc], m.constraints, pol, m.params,
                               gc_delay=m.gc_delay)
    _write_csv(m.out / "compare.csv", COMPARE_FIELDS, rows)
    print(f"{'scenario':<14} {'mode':<8} {'order':<10} {'lat_ms':>8} {'energy_mJ':>10} {'b_acc':>7}")
    for r in rows:
        print(f"{r['scenario']:<14} {r['mode']:<8} {r['sp_order']:<10} {r['mean_latency_ms']:8.2f} "
              f"{r['mean_energy_mj']:10.2f} {r['balanced_accuracy']:7.4f}")
    print(f"wrote {m.out / 'compare.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        m = resolve(args)
        if args.command == "schedule":
            return cmd_schedule(m)
        if args.command == "pareto":
            return cmd_pareto(m, args.grid)
        if args.command == "simulate":
            return cmd_simulate(m, args.mode, args.threaded)
        return cmd_compare(m)
    except InfeasibleTask as e:
        print(f"infeasible: {' '.join(e.reasons)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, CalibrationError, ScenarioError, ConfigError, OSError, ValueError, KeyError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
