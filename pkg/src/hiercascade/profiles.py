"""Predictor profiles: calibrated stand-ins for trained models.

A profile carries the cost of one invocation (MACs, memory, latency, energy)
and a binned histogram of the confidence the model produces, conditioned on
the true class of the input. Specialized predictors (SPs) report the
probability of their target class; the fallback (FB) reports its top-1
probability and predicts a label through a per-class confusion row.

Calibration files are JSON::

    {
      "task": "scd-like",
      "num_classes": 7,
      "thresholds": {"thr_minus": 0.1, "thr_plus": 0.9},
      "bins": 20,                      # or an explicit list of edges
      "validation": {"class_distribution": [...], "fb_balanced_accuracy": 0.905},
      "test": {"size": 510},           # optional
      "fallback": {"id": "FB", "macs": ..., "memory_bytes": ..., "latency_ms": ...,
                   "energy_mj": ..., "confidence": [[...], ...], "confusion": [[...], ...]},
      "specialized": [{"id": "SP0", "target": 0, ..., "confidence": [[...], ...]}, ...]
    }

``confidence`` holds one row of bin masses per true class (a list indexed by
class, or an object keyed by the class index).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CalibrationError, ThresholdError

DEFAULT_BINS = 20
MASS_TOL = 1e-9


def uniform_edges(n_bins: int = DEFAULT_BINS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins + 1)


def check_thresholds(thr_minus: float, thr_plus: float) -> None:
    if not (0.0 <= thr_minus <= thr_plus <= 1.0):
        raise ThresholdError(
            f"need 0 <= thr_minus <= thr_plus <= 1, got ({thr_minus}, {thr_plus})"
        )


@dataclass(frozen=True, eq=False)
class ConfidenceProfile:
    """Piecewise-uniform confidence distribution per true class."""

    edges: np.ndarray
    mass: np.ndarray  # shape (num_classes, num_bins)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        mass = np.atleast_2d(np.asarray(self.mass, dtype=float))
        if edges.ndim != 1 or len(edges) < 2:
            raise CalibrationError("bins: need at least two edges")
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise CalibrationError("bins: edges must increase strictly from 0 to 1")
        if mass.shape[1] != len(edges) - 1:
            raise CalibrationError(
                f"bins: {mass.shape[1]} masses per row for {len(edges) - 1} bins"
            )
        if np.any(mass < 0):
            raise CalibrationError("distribution: negative bin mass")
        if np.any(np.abs(mass.sum(axis=1) - 1.0) > MASS_TOL):
            raise CalibrationError("distribution: confidence masses must sum to 1")
        edges.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "_cum", np.cumsum(mass, axis=1))

    @property
    def num_classes(self) -> int:
        return self.mass.shape[0]

    @property
    def num_bins(self) -> int:
        return self.mass.shape[1]

    def cdf(self, true_class: int, x: float) -> float:
        """P(confidence < x) for inputs of ``true_class``."""
        lo, hi = self.edges[:-1], self.edges[1:]
        frac = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        return float(np.dot(self.mass[true_class], frac))

    def quantile(self, true_class: int, u: np.ndarray) -> np.ndarray:
        """Inverse CDF: pick the bin holding ``u`` then place it uniformly inside."""
        cum = self._cum[true_class]
        u = np.asarray(u, dtype=float)
        b = np.minimum(np.searchsorted(cum, u, side="right"), self.num_bins - 1)
        # float round-off can leave u above the last cumulative value
        b = np.where(self.mass[true_class][b] > 0, b, _last_nonzero(self.mass[true_class]))
        start = np.where(b > 0, cum[b - 1], 0.0)
        within = np.clip((u - start) / self.mass[true_class][b], 0.0, 1.0)
        return self.edges[b] + within * (self.edges[b + 1] - self.edges[b])

    @classmethod
    def from_rows(cls, rows, num_classes: int, edges=None) -> "ConfidenceProfile":
        if isinstance(rows, Mapping):
            missing = [c for c in range(num_classes) if str(c) not in rows and c not in rows]
            if missing:
                raise CalibrationError(f"distribution: no confidence row for classes {missing}")
            rows = [rows[str(c)] if str(c) in rows else rows[c] for c in range(num_classes)]
        if len(rows) != num_classes:
            raise CalibrationError(
                f"distribution: {len(rows)} confidence rows for {num_classes} classes"
            )
        if edges is None:
            edges = uniform_edges(len(rows[0]))
        return cls(np.asarray(edges, dtype=float), np.asarray(rows, dtype=float))


def _last_nonzero(row: np.ndarray) -> int:
    return int(np.flatnonzero(row > 0)[-1])


@dataclass(frozen=True, eq=False)
class PredictorProfile:
    """One SP (``target`` set) or the fallback (``confusion`` set)."""

    id: str
    macs: float
    memory_bytes: float
    latency_ms: float
    energy_mj: float
    confidence: ConfidenceProfile
    target: int | None = None
    confusion: np.ndarray | None = None
    params: float | None = None

    def __post_init__(self):
        if self.macs <= 0 or self.latency_ms <= 0 or self.memory_bytes <= 0:
            raise CalibrationError(f"{self.id}: macs, latency and memory must be positive")
        if self.energy_mj < 0:
            raise CalibrationError(f"{self.id}: negative energy")
        if (self.target is None) == (self.confusion is None):
            raise CalibrationError(f"{self.id}: a profile is either an SP or a fallback")
        if self.confusion is not None:
            conf = np.asarray(self.confusion, dtype=float)
            n = self.confidence.num_classes
            if conf.shape != (n, n):
                raise CalibrationError(f"{self.id}: confusion must be {n}x{n}")
            if np.any(conf < 0) or np.any(np.abs(conf.sum(axis=1) - 1.0) > MASS_TOL):
                raise CalibrationError(f"distribution: {self.id} confusion rows must sum to 1")
            conf.setflags(write=False)
            object.__setattr__(self, "confusion", conf)
            object.__setattr__(self, "_confusion_cum", np.cumsum(conf, axis=1))
        elif not 0 <= self.target < self.confidence.num_classes:
            raise CalibrationError(f"{self.id}: target {self.target} out of range")

    @property
    def is_fallback(self) -> bool:
        return self.confusion is not None

    def predict_label(self, true_class: int, u: float) -> int:
        """Map a uniform draw to a label through the confusion row."""
        cum = self._confusion_cum[true_class]
        k = int(np.searchsorted(cum, u, side="right"))
        return k if k < len(cum) else _last_nonzero(self.confusion[true_class])

    def __repr__(self):
        kind = "FB" if self.is_fallback else f"SP(target={self.target})"
        return f"PredictorProfile({self.id!r}, {kind}, macs={self.macs:g})"


@dataclass(frozen=True)
class ValidationStats:
    class_distribution: tuple[float, ...]
    fb_balanced_accuracy: float

    def __post_init__(self):
        dist = tuple(float(x) for x in self.class_distribution)
        if any(x < 0 for x in dist) or abs(sum(dist) - 1.0) > MASS_TOL:
            raise CalibrationError("distribution: class frequencies must be >= 0 and sum to 1")
        if not 0.0 <= self.fb_balanced_accuracy <= 1.0:
            raise CalibrationError("fb accuracy must lie in [0, 1]")
        object.__setattr__(self, "class_distribution", dist)


@dataclass(frozen=True, eq=False)
class Task:
    """Everything a calibration file declares about one ML task."""

    name: str
    num_classes: int
    fallback: PredictorProfile
    sps: tuple[PredictorProfile, ...]
    stats: ValidationStats
    thr_minus: float = 0.1
    thr_plus: float = 0.9
    test_size: int | None = None
    profiles: dict = field(init=False, repr=False)

    def __post_init__(self):
        check_thresholds(self.thr_minus, self.thr_plus)
        if not self.sps:
            raise CalibrationError("no specialized predictors")
        targets = [sp.target for sp in self.sps]
        if len(set(targets)) != len(targets):
            raise CalibrationError("duplicate target")
        ids = [p.id for p in (self.fallback, *self.sps)]
        if len(set(ids)) != len(ids):
            raise CalibrationError("duplicate predictor id")
        if len(self.stats.class_distribution) != self.num_classes:
            raise CalibrationError("distribution: length differs from num_classes")
        for p in (self.fallback, *self.sps):
            if p.confidence.num_classes != self.num_classes:
                raise CalibrationError(f"{p.id}: confidence rows differ from num_classes")
        for sp in self.sps:
            if sp.macs >= self.fallback.macs or sp.memory_bytes >= self.fallback.memory_bytes:
                warnings.warn(f"{sp.id} is not cheaper than the fallback", stacklevel=2)
        object.__setattr__(self, "profiles", {p.id: p for p in (self.fallback, *self.sps)})

    def __getitem__(self, pid: str) -> PredictorProfile:
        return self.profiles[pid]

    def sp_for_class(self, c: int) -> PredictorProfile | None:
        for sp in self.sps:
            if sp.target == c:
                return sp
        return None

    @property
    def sp_ids(self) -> tuple[str, ...]:
        return tuple(sp.id for sp in self.sps)


def sample_confidence(profile: PredictorProfile, true_class: int,
                      rng: np.random.Generator) -> float:
    """Draw one confidence value for an input of ``true_class``."""
    return float(profile.confidence.quantile(true_class, rng.random()))


def exit_probabilities(profile: PredictorProfile, true_class: int,
                       thr_minus: float, thr_plus: float) -> tuple[float, float, float]:
    """Exact (accept, reject, undecided) probabilities for one SP decision.

    Accept is confidence above ``thr_plus``, reject is strictly below
    ``thr_minus``, undecided is the closed band in between.
    """
    check_thresholds(thr_minus, thr_plus)
    below_minus = profile.confidence.cdf(true_class, thr_minus)
    below_plus = profile.confidence.cdf(true_class, thr_plus)
    p_accept = 1.0 - below_plus
    p_reject = below_minus
    p_undecided = below_plus - below_minus
    return max(p_accept, 0.0), max(p_reject, 0.0), max(p_undecided, 0.0)


def _profile_from_json(block: dict, num_classes: int, edges, *, fallback: bool) -> PredictorProfile:
    try:
        confidence = ConfidenceProfile.from_rows(block["confidence"], num_classes, edges)
        return PredictorProfile(
            id=str(block["id"]),
            macs=float(block["macs"]),
            memory_bytes=float(block["memory_bytes"]),
            latency_ms=float(block["latency_ms"]),
            energy_mj=float(block["energy_mj"]),
            confidence=confidence,
            target=None if fallback else int(block["target"]),
            confusion=np.asarray(block["confusion"], dtype=float) if fallback else None,
            params=block.get("params"),
        )
    except KeyError as exc:
        raise CalibrationError(f"missing field {exc.args[0]!r} in predictor block") from None


def load_task(path) -> Task:
    """Parse and validate a calibration file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CalibrationError(f"cannot read calibration file {path}: {exc}") from exc
    return task_from_dict(doc)


def task_from_dict(doc: dict) -> Task:
    n = int(doc["num_classes"])
    bins = doc.get("bins", DEFAULT_BINS)
    edges = uniform_edges(bins) if isinstance(bins, int) else np.asarray(bins, dtype=float)
    if not doc.get("fallback"):
        raise CalibrationError("no fallback")
    fb = _profile_from_json(doc["fallback"], n, edges, fallback=True)
    sps = tuple(_profile_from_json(b, n, edges, fallback=False) for b in doc.get("specialized", []))

    val = doc.get("validation", {})
    derived = float(np.mean(np.diag(fb.confusion)))
    declared = val.get("fb_balanced_accuracy")
    if declared is not None and abs(float(declared) - derived) > 1e-6:
        raise CalibrationError(
            f"fb accuracy: declared {declared} but confusion diagonal gives {derived:.6f}"
        )
    stats = ValidationStats(tuple(val.get("class_distribution", [])), derived)
    thr = doc.get("thresholds", {})
    return Task(
        name=str(doc.get("task", "task")),
        num_classes=n,
        fallback=fb,
        sps=sps,
        stats=stats,
        thr_minus=float(thr.get("thr_minus", 0.1)),
        thr_plus=float(thr.get("thr_plus", 0.9)),
        test_size=doc.get("test", {}).get("size"),
    )


def load_task_profiles(path) -> tuple[list[PredictorProfile], ValidationStats]:
    task = load_task(path)
    return [task.fallback, *task.sps], task.stats


def task_to_dict(task: Task) -> dict:
    """Inverse of :func:`task_from_dict` (explicit edges, list rows)."""

    def block(p: PredictorProfile) -> dict:
        out = {
            "id": p.id,
            "macs": p.macs,
            "memory_bytes": p.memory_bytes,
            "latency_ms": p.latency_ms,
            "energy_mj": p.energy_mj,
        }
        if p.params is not None:
            out["params"] = p.params
        if p.is_fallback:
            out["confusion"] = p.confusion.tolist()
        else:
            out["target"] = p.target
        out["confidence"] = p.confidence.mass.tolist()
        return out

    doc = {
        "task": task.name,
        "num_classes": task.num_classes,
        "thresholds": {"thr_minus": task.thr_minus, "thr_plus": task.thr_plus},
        "bins": task.fallback.confidence.edges.tolist(),
        "validation": {
            "class_distribution": list(task.stats.class_distribution),
            "fb_balanced_accuracy": task.stats.fb_balanced_accuracy,
        },
        "fallback": block(task.fallback),
        "specialized": [block(sp) for sp in task.sps],
    }
    if task.test_size is not None:
        doc["test"] = {"size": task.test_size}
    return doc


def region_row(accept: float, undecided: float, reject: float, *,
               thr_minus: float = 0.1, thr_plus: float = 0.9,
               edges: Sequence[float] | None = None) -> list[float]:
    """Bin masses that put the given probability in each threshold region.

    Mass inside a region is spread evenly over the bins that lie fully inside
    it, so the row reproduces the three region probabilities exactly as long as
    both thresholds sit on bin edges.
    """
    edges = uniform_edges() if edges is None else np.asarray(edges, dtype=float)
    total = accept + undecided + reject
    if abs(total - 1.0) > 1e-9:
        raise CalibrationError("distribution: region probabilities must sum to 1")
    lo, hi = edges[:-1], edges[1:]
    regions = [(hi <= thr_minus + 1e-12, reject),
               ((lo >= thr_minus - 1e-12) & (hi <= thr_plus + 1e-12), undecided),
               (lo >= thr_plus - 1e-12, accept)]
    row = np.zeros(len(lo))
    for sel, p in regions:
        if p > 0:
            if not sel.any():
                raise CalibrationError("thresholds do not align with bin edges")
            row[sel] = p / sel.sum()
    row /= row.sum()
    return [float(x) for x in row]
