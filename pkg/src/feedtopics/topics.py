"""Topic objects, corpus statistics, silhouette diagnostics, and trends.

A topic is one non-noise cluster: its members, a representative (the
member with the highest membership probability), and optional
human-assigned name and theme. Trends bucket member timestamps into
equal-width trailing windows and fit a least-squares slope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import NOISE_LABEL, ClusterAssignment

DIRECTION_RISING = "rising"
DIRECTION_FALLING = "falling"
DIRECTION_FLAT = "flat"

DEFAULT_TREND_WINDOW = timedelta(days=7)
DEFAULT_TREND_HORIZON = 8
DEFAULT_TREND_THRESHOLD = 0.5


class SilhouetteUndefinedError(ValueError):
    """Fewer than two clusters: the coefficient is undefined."""


@dataclass
class Topic:
    topic_id: int
    member_ids: list[str]
    size: int
    representative_id: str
    name: str | None = None
    theme: str | None = None

    def __post_init__(self) -> None:
        if self.size != len(self.member_ids):
            raise ValueError("size must equal the member count")
        if self.representative_id not in self.member_ids:
            raise ValueError("representative must be a member")


@dataclass(frozen=True)
class TopicStats:
    n_topics: int
    coverage: float
    mean_size: float
    sd_size: float
    total_assigned: int
    corpus_size: int


@dataclass(frozen=True)
class TrendSeries:
    topic_id: int
    buckets: tuple[tuple[datetime, int], ...]
    slope: float
    direction: str


@dataclass(frozen=True)
class SilhouetteReport:
    coefficient: float
    n_points_scored: int
    n_noise_excluded: int
    space: str


def build_topics(assignments: Sequence[ClusterAssignment]) -> list[Topic]:
    """One topic per non-noise label; the representative is the member with
    maximal probability, ties broken by the smallest doc id."""
    members: dict[int, list[ClusterAssignment]] = {}
    for a in assignments:
        if a.label != NOISE_LABEL:
            members.setdefault(a.label, []).append(a)

    topics = []
    for label in sorted(members):
        group = members[label]
        representative = min(group, key=lambda a: (-a.probability, a.doc_id))
        topics.append(
            Topic(
                topic_id=label,
                member_ids=[a.doc_id for a in group],
                size=len(group),
                representative_id=representative.doc_id,
            )
        )
    return topics


def corpus_stats(topics: Sequence[Topic], corpus_size: int) -> TopicStats:
    """Coverage and size moments over the topic model. ``corpus_size``
    counts every ingested document, including noise and excluded ones."""
    if corpus_size <= 0:
        raise ValueError("corpus_size must be positive")
    sizes = [t.size for t in topics]
    total = sum(sizes)
    if total > corpus_size:
        raise ValueError(f"assigned documents ({total}) exceed corpus_size ({corpus_size})")
    n = len(sizes)
    mean = total / n if n else 0.0
    variance = sum((s - mean) ** 2 for s in sizes) / n if n else 0.0
    return TopicStats(
        n_topics=n,
        coverage=total / corpus_size,
        mean_size=mean,
        sd_size=math.sqrt(variance),
        total_assigned=total,
        corpus_size=corpus_size,
    )


def silhouette(
    vectors: np.ndarray,
    labels: Sequence[int],
    space: str = "embedding",
) -> SilhouetteReport:
    """Mean silhouette over non-noise points: (b - a) / max(a, b) with a
    the mean intra-cluster distance and b the smallest mean distance to
    another cluster. Euclidean metric; singleton-cluster points score 0.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(list(labels), dtype=np.int64)
    if vectors.shape[0] != labels.shape[0]:
        raise ValueError("vectors and labels must align")

    keep = labels != NOISE_LABEL
    n_noise = int((~keep).sum())
    points = vectors[keep]
    kept_labels = labels[keep]
    cluster_ids = sorted(set(kept_labels.tolist()))
    if len(cluster_ids) < 2:
        raise SilhouetteUndefinedError(
            f"silhouette is undefined for {len(cluster_ids)} cluster(s); need at least 2"
        )

    # O(n^2) pairwise distances computed directly from differences; small
    # scored sets are the norm here and this stays bit-compatible with the
    # brute-force reference.
    diffs = points[:, None, :] - points[None, :, :]
    distances = np.sqrt((diffs**2).sum(axis=-1))

    scores = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        own = kept_labels[i]
        same = (kept_labels == own) & (np.arange(points.shape[0]) != i)
        if not same.any():
            scores[i] = 0.0
            continue
        a = distances[i][same].mean()
        b = min(distances[i][kept_labels == other].mean() for other in cluster_ids if other != own)
        scores[i] = (b - a) / max(a, b)

    return SilhouetteReport(
        coefficient=float(scores.mean()),
        n_points_scored=int(points.shape[0]),
        n_noise_excluded=n_noise,
        space=space,
    )


def least_squares_slope(counts: Sequence[float]) -> float:
    """Slope of the ordinary least-squares line through (index, count).

    Sums use fsum so the result is order-independent: reversing the
    sequence negates the slope exactly.
    """
    n = len(counts)
    if n < 2:
        raise ValueError("need at least two buckets")
    mean_x = (n - 1) / 2
    mean_y = math.fsum(counts) / n
    sxy = math.fsum((i - mean_x) * (y - mean_y) for i, y in enumerate(counts))
    sxx = math.fsum((i - mean_x) ** 2 for i in range(n))
    return sxy / sxx


def compute_trends(
    topics: Sequence[Topic],
    timestamps: Mapping[str, datetime],
    window: timedelta = DEFAULT_TREND_WINDOW,
    horizon: int = DEFAULT_TREND_HORIZON,
    threshold: float = DEFAULT_TREND_THRESHOLD,
    now: datetime | None = None,
) -> list[TrendSeries]:
    """Bucket member timestamps per topic into ``horizon`` trailing windows
    ending at ``now`` (default: the newest member timestamp) and classify
    the least-squares slope against ``threshold`` docs/window."""
    if horizon < 2:
        raise ValueError("horizon must be at least 2 windows")
    if window <= timedelta(0):
        raise ValueError("window must be positive")
    for topic in topics:
        for doc_id in topic.member_ids:
            if doc_id not in timestamps:
                raise ValueError(f"missing timestamp for document {doc_id}")

    if now is None:
        member_times = [timestamps[d] for t in topics for d in t.member_ids]
        if not member_times:
            return []
        now = max(member_times)
    start = now - window * horizon

    series = []
    for topic in topics:
        counts = [0] * horizon
        for doc_id in topic.member_ids:
            ts = timestamps[doc_id]
            if ts < start or ts > now:
                continue
            index = int((ts - start) / window)
            counts[min(index, horizon - 1)] += 1
        slope = least_squares_slope(counts)
        if slope > threshold:
            direction = DIRECTION_RISING
        elif slope < -threshold:
            direction = DIRECTION_FALLING
        else:
            direction = DIRECTION_FLAT
        buckets = tuple((start + i * window, counts[i]) for i in range(horizon))
        series.append(TrendSeries(topic_id=topic.topic_id, buckets=buckets, slope=slope, direction=direction))
    return series


def topic_to_record(topic: Topic) -> dict:
    return {
        "topic_id": topic.topic_id,
        "member_ids": topic.member_ids,
        "size": topic.size,
        "representative_id": topic.representative_id,
        "name": topic.name,
        "theme": topic.theme,
    }


def topic_from_record(record: dict) -> Topic:
    return Topic(
        topic_id=int(record["topic_id"]),
        member_ids=list(record["member_ids"]),
        size=int(record["size"]),
        representative_id=record["representative_id"],
        name=record.get("name"),
        theme=record.get("theme"),
    )


def save_topics(topics: Sequence[Topic], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([topic_to_record(t) for t in topics], sort_keys=True), encoding="utf-8")
    return path


def load_topics(path: str | Path) -> list[Topic]:
    return [topic_from_record(r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]


def trend_to_record(series: TrendSeries) -> dict:
    return {
        "topic_id": series.topic_id,
        "buckets": [[start.isoformat(), count] for start, count in series.buckets],
        "slope": series.slope,
        "direction": series.direction,
    }


def trend_from_record(record: dict) -> TrendSeries:
    buckets = tuple((datetime.fromisoformat(start), int(count)) for start, count in record["buckets"])
    return TrendSeries(
        topic_id=int(record["topic_id"]),
        buckets=buckets,
        slope=float(record["slope"]),
        direction=record["direction"],
    )


def save_trends(series: Sequence[TrendSeries], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([trend_to_record(s) for s in series], sort_keys=True), encoding="utf-8")
    return path


def load_trends(path: str | Path) -> list[TrendSeries]:
    return [trend_from_record(r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]
