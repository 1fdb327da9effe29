"""Event-log records and the wire form of node/GC messages.

Every LC action, telemetry message and SP deployment is one row of the event
log, with columns::

    inference, source, action, sp_id, detail, ema

``inference`` counts completed inferences, ``source`` is LC, NODE or GC,
``ema`` is the per-class EMA joined by ';'. Telemetry keeps its remaining
fields as JSON in ``detail``, so the same schema doubles as the message
format between a node and the global controller.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable

EVENT_FIELDS = ("inference", "source", "action", "sp_id", "detail", "ema")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Event:
    index: int
    source: str
    action: str
    sp_id: str = ""
    detail: str = ""
    ema: tuple[float, ...] = ()

    def to_row(self) -> dict:
        return {
            "inference": self.index,
            "source": self.source,
            "action": self.action,
            "sp_id": self.sp_id,
            "detail": self.detail,
            "ema": ";".join(_fmt(v) for v in self.ema),
        }

    @classmethod
    def from_row(cls, row: dict) -> "Event":
        ema = tuple(float(v) for v in row["ema"].split(";")) if row.get("ema") else ()
        return cls(int(row["inference"]), row["source"], row["action"], row.get("sp_id", ""),
                   row.get("detail", ""), ema)


def telemetry_to_event(t) -> Event:
    detail = json.dumps({
        "enabled_sps": list(t.enabled_sps),
        "stored_sps": list(t.stored_sps),
        "battery_level": t.battery_level,
        "temperature_c": t.temperature_c,
        "deadline_misses": t.deadline_misses,
        "cpu_scale": t.cpu_scale,
    }, sort_keys=True)
    return Event(t.index, "NODE", "TELEMETRY", "", detail, tuple(t.ema))


def telemetry_from_event(ev: Event):
    from .scheduler import NodeTelemetry

    d = json.loads(ev.detail)
    return NodeTelemetry(
        index=ev.index,
        ema=ev.ema,
        enabled_sps=tuple(d["enabled_sps"]),
        stored_sps=tuple(d["stored_sps"]),
        battery_level=d["battery_level"],
        temperature_c=d["temperature_c"],
        deadline_misses=d["deadline_misses"],
        cpu_scale=d["cpu_scale"],
    )


def deployment_to_event(dep, ema=()) -> Event:
    return Event(dep.index, "GC", "DEPLOY", dep.sp_id, "", tuple(ema))


def deployment_from_event(ev: Event):
    from .scheduler import SpDeployment

    if ev.action != "DEPLOY":
        raise ValueError(f"not a deployment message: {ev.action}")
    return SpDeployment(ev.sp_id, ev.index)


def write_events(path, events: Iterable[Event]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVENT_FIELDS, lineterminator="\n")
        w.writeheader()
        for ev in events:
            w.writerow(ev.to_row())


def read_events(path) -> list[Event]:
    with open(path, newline="") as fh:
        return [Event.from_row(r) for r in csv.DictReader(fh)]
