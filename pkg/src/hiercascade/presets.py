"""Shipped calibrations and scenario presets.

A scenario preset is a JSON file holding :class:`WorkloadScenario` fields plus
``calibration`` (name of a shipped calibration or a path), ``constraints``
(``memory_budget_bytes``, ``deadline_ms``, ``t_lc_ms``) for the node and an
optional ``policy`` with :class:`LcPolicy` fields.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import NamedTuple

from .controller import LcPolicy
from .errors import ScenarioError
from .profiles import Task, load_task
from .scheduler import NodeConstraints
from .simulation import WorkloadScenario

DATA_DIR = Path(__file__).resolve().parent / "data"


def calibration_names() -> list[str]:
    return sorted(p.stem for p in (DATA_DIR / "calibration").glob("*.json"))


def scenario_names() -> list[str]:
    return sorted(p.stem for p in (DATA_DIR / "scenarios").glob("*.json"))


def _resolve(name_or_path, folder: str, what: str) -> Path:
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return p
    shipped = DATA_DIR / folder / f"{name_or_path}.json"
    if shipped.exists():
        return shipped
    raise ScenarioError(f"no {what} named {name_or_path!r}")


def load_calibration(name_or_path) -> Task:
    return load_task(_resolve(name_or_path, "calibration", "calibration"))


def load_preset(name_or_path) -> dict:
    path = _resolve(name_or_path, "scenarios", "scenario preset")
    return json.loads(path.read_text())


def load_scenario(name_or_path) -> WorkloadScenario:
    return WorkloadScenario.from_dict(load_preset(name_or_path))


def preset_constraints(doc: dict) -> NodeConstraints:
    c = doc.get("constraints")
    if not c:
        raise ScenarioError("preset has no constraints section")
    return NodeConstraints(float(c["memory_budget_bytes"]), float(c["deadline_ms"]),
                           float(c.get("t_lc_ms", 0.0)))


def preset_policy(doc: dict) -> LcPolicy:
    fields = doc.get("policy") or {}
    unknown = set(fields) - set(LcPolicy.__dataclass_fields__)
    if unknown:
        raise ScenarioError(f"unknown policy fields {sorted(unknown)}")
    return LcPolicy(**fields)


class Setup(NamedTuple):
    task: Task
    scenario: WorkloadScenario
    constraints: NodeConstraints
    policy: LcPolicy


def load_setup(name_or_path) -> Setup:
    """Calibration, scenario, node constraints and LC policy of one preset."""
    doc = load_preset(name_or_path)
    if "calibration" not in doc:
        raise ScenarioError("preset names no calibration")
    return Setup(load_calibration(doc["calibration"]), WorkloadScenario.from_dict(doc),
                 preset_constraints(doc), preset_policy(doc))
