"""Aggregated metric reports and pairwise tournament ranking.

Each method gets one point per (metric, opponent) it beats; exact ties earn
nothing. Summed points form the accumulated performance index (API), and
methods rank by descending API. A method that beats every opponent on every
metric therefore ranks first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import math

DIRECTIONS = ("higher", "lower")

# Directions for the metrics this package computes.
METRIC_DIRECTIONS = {
    "psnr": "higher",
    "ssim": "higher",
    "vif_p": "higher",
    "lpips": "lower",
    "dists": "higher",
    "piqe": "lower",
}


@dataclass(frozen=True)
class MetricValue:
    value: float
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"metric value must be finite, got {self.value}")


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metric values for one method, with per-image values retained."""

    method: str
    metrics: dict[str, MetricValue]
    per_image: tuple[dict[str, float], ...] = ()
    notes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.method:
            raise ValueError("method name must be non-empty")
        object.__setattr__(self, "per_image", tuple(dict(d) for d in self.per_image))
        for image_values in self.per_image:
            for name, v in image_values.items():
                if not math.isfinite(v):
                    raise ValueError(f"non-finite per-image value for {name!r}")

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "metrics": {
                name: {"value": mv.value, "direction": mv.direction}
                for name, mv in self.metrics.items()
            },
            "per_image": list(self.per_image),
        }
        if self.notes:
            payload["notes"] = dict(self.notes)
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        payload = json.loads(text)
        metrics = {
            name: MetricValue(value=float(m["value"]), direction=m["direction"])
            for name, m in payload["metrics"].items()
        }
        return cls(
            method=payload["method"],
            metrics=metrics,
            per_image=tuple(payload.get("per_image", ())),
            notes=dict(payload.get("notes", {})),
        )


def aggregate_report(
    method: str,
    per_image: list[dict[str, float]],
    directions: dict[str, str] | None = None,
    notes: dict[str, str] | None = None,
) -> MetricReport:
    """Mean-aggregate per-image metric values into a report."""
    if not per_image:
        raise ValueError("need at least one image's metrics to aggregate")
    directions = dict(METRIC_DIRECTIONS if directions is None else directions)
    names = set(per_image[0])
    for values in per_image:
        if set(values) != names:
            raise ValueError("per-image metric sets are inconsistent")
    metrics = {}
    for name in sorted(names):
        if name not in directions:
            raise ValueError(f"no direction declared for metric {name!r}")
        mean = sum(v[name] for v in per_image) / len(per_image)
        metrics[name] = MetricValue(value=mean, direction=directions[name])
    return MetricReport(method=method, metrics=metrics, per_image=tuple(per_image), notes=dict(notes or {}))


@dataclass(frozen=True)
class RankEntry:
    method: str
    api: int
    rank: int


@dataclass(frozen=True)
class RankTable:
    entries: tuple[RankEntry, ...]

    def __post_init__(self):
        ranks = sorted(e.rank for e in self.entries)
        if ranks != list(range(1, len(self.entries) + 1)):
            raise ValueError("ranks must be a permutation of 1..n_methods")

    def to_json(self) -> str:
        return json.dumps(
            {"ranking": [{"method": e.method, "api": e.api, "rank": e.rank} for e in self.entries]},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "RankTable":
        payload = json.loads(text)
        return cls(
            entries=tuple(
                RankEntry(method=e["method"], api=int(e["api"]), rank=int(e["rank"]))
                for e in payload["ranking"]
            )
        )


def api_rank(reports: list[MetricReport]) -> RankTable:
    """Rank methods by pairwise wins across all shared metrics.

    Ties on a metric score no points for either side; ties in total API
    break lexicographically by method name.
    """
    if len(reports) < 2:
        raise ValueError(f"need at least 2 methods to rank, got {len(reports)}")
    names = [r.method for r in reports]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    metric_set = set(reports[0].metrics)
    for r in reports[1:]:
        if set(r.metrics) != metric_set:
            raise ValueError(f"method {r.method!r} reports a different metric set")
        for m in metric_set:
            if r.metrics[m].direction != reports[0].metrics[m].direction:
                raise ValueError(f"direction of {m!r} disagrees between methods")

    points = {name: 0 for name in names}
    for metric in sorted(metric_set):
        direction = reports[0].metrics[metric].direction
        sign = 1.0 if direction == "higher" else -1.0
        for i in range(len(reports)):
            for j in range(i + 1, len(reports)):
                a = sign * reports[i].metrics[metric].value
                b = sign * reports[j].metrics[metric].value
                if a > b:
                    points[reports[i].method] += 1
                elif b > a:
                    points[reports[j].method] += 1

    ordered = sorted(names, key=lambda n: (-points[n], n))
    entries = tuple(
        RankEntry(method=n, api=points[n], rank=i + 1) for i, n in enumerate(ordered)
    )
    return RankTable(entries=entries)


def save_report(report: MetricReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json())


def load_report(path: str | Path) -> MetricReport:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no report at {path}")
    return MetricReport.from_json(path.read_text())
