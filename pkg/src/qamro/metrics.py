"""System-level MOS evaluation: per-system averaging, then MSE/LCC/SRCC/KTAU."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import stats

METRIC_NAMES = ("mse", "lcc", "srcc", "ktau")
REPORT_COLUMNS = ("dimension", "metric", "value", "n_systems")


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is requested for a constant vector."""


@dataclass(frozen=True)
class SystemAggregate:
    system_id: str
    mean_pred: float
    mean_true: float
    clip_count: int


@dataclass
class MetricsReport:
    per_dimension: dict[str, dict[str, float]] = field(default_factory=dict)
    n_systems: int = 0

    def rows(self):
        for dim in sorted(self.per_dimension):
            for name in METRIC_NAMES:
                yield dim, name, self.per_dimension[dim][name], self.n_systems

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for dim, name, value, n in self.rows():
            w.writerow([dim, name, repr(float(value)), n])
        return buf.getvalue()


def aggregate_by_system(samples: Iterable[tuple]) -> list[SystemAggregate]:
    """Average ``(system_id, y_true, y_pred)`` triples per system.

    Output is sorted by system id; sums are taken in sorted value order so the
    result does not depend on the order clips arrive in.
    """
    groups: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for system_id, y_true, y_pred in samples:
        groups[system_id].append((float(y_true), float(y_pred)))
    if not groups:
        raise ValueError("cannot aggregate an empty sample list")
    out = []
    for sid in sorted(groups):
        vals = sorted(groups[sid])
        t = np.array([v[0] for v in vals])
        p = np.sort(np.array([v[1] for v in vals]))
        out.append(SystemAggregate(sid, float(p.mean()), float(t.mean()), len(vals)))
    return out


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} values, got {a.shape[0]}")
    return a, b


def _check_not_constant(a, b):
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def lcc(a, b) -> float:
    """Pearson correlation."""
    a, b = _pair(a, b, 2)
    _check_not_constant(a, b)
    da, db = a - a.mean(), b - b.mean()
    r = float(np.dot(da, db) / np.sqrt(np.dot(da, da) * np.dot(db, db)))
    return max(-1.0, min(1.0, r))


def srcc(a, b) -> float:
    """Spearman correlation with average ranks for ties."""
    a, b = _pair(a, b, 2)
    _check_not_constant(a, b)
    return lcc(stats.rankdata(a), stats.rankdata(b))


def ktau(a, b) -> float:
    """Kendall tau-b."""
    a, b = _pair(a, b, 2)
    _check_not_constant(a, b)
    tau = stats.kendalltau(a, b, variant="b").statistic
    return max(-1.0, min(1.0, float(tau)))


def compute_metrics(y_true, y_pred) -> dict[str, float]:
    return {"mse": mse(y_true, y_pred), "lcc": lcc(y_true, y_pred),
            "srcc": srcc(y_true, y_pred), "ktau": ktau(y_true, y_pred)}


def system_level_report(system_ids, y_true: dict, y_pred: dict, *, clip_level: bool = False) -> MetricsReport:
    """Build a report over every dimension of ``y_true``/``y_pred``.

    ``y_true`` and ``y_pred`` map a dimension name to per-clip score arrays
    aligned with ``system_ids``. ``clip_level=True`` skips aggregation and is
    only meant for debugging.
    """
    report = MetricsReport()
    for dim in sorted(y_true):
        if clip_level:
            t, p = np.asarray(y_true[dim]), np.asarray(y_pred[dim])
            report.n_systems = len(t)
        else:
            aggs = aggregate_by_system(zip(system_ids, y_true[dim], y_pred[dim]))
            t = np.array([g.mean_true for g in aggs])
            p = np.array([g.mean_pred for g in aggs])
            report.n_systems = len(aggs)
        report.per_dimension[dim] = compute_metrics(t, p)
    return report
