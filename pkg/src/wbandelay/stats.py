"""Delay statistics at global (GS) and per-node (NS) scope.

Samples are stored per ``(metric, node)``. A global series is never stored
separately; it is the time-ordered merge of every node series of that
metric, so it is reconstructible from its node constituents by construction.

Metric names are ``<layer>.<kind>``, e.g. ``zigbee.medium-access-delay`` or
``path.end-to-end-delay``.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .kernel import TICKS_PER_SECOND, to_seconds
from .traffic import Packet

END_TO_END = "end-to-end-delay"
MEDIUM_ACCESS = "medium-access-delay"
PACKET_DELAY = "packet-delay"
ACCESS_DELAY = "access-delay"
KINDS = (END_TO_END, MEDIUM_ACCESS, PACKET_DELAY, ACCESS_DELAY, "link1-delay", "link2-delay", "link3-delay")


@dataclass
class StatSeries:
    metric: str
    scope: str  # "global" or "node"
    node_id: str | None
    samples: list[tuple[int, float]]

    def __post_init__(self):
        if self.scope not in ("global", "node"):
            raise ValueError(f"bad scope {self.scope!r}")

    @property
    def times(self) -> list[float]:
        return [to_seconds(t) for t, _ in self.samples]

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.samples]

    def mean(self) -> float:
        if not self.samples:
            return math.nan
        return math.fsum(v for _, v in self.samples) / len(self.samples)


@dataclass
class Tally:
    time: float
    generated: int
    delivered: int
    dropped: int
    failed: int
    in_flight: int

    @property
    def balanced(self) -> bool:
        return self.generated == self.delivered + self.dropped + self.failed + self.in_flight


@dataclass
class MetricSummary:
    count: int
    mean: float
    max: float


@dataclass
class RunSummary:
    metrics: dict[str, MetricSummary]
    drops: dict[str, int]
    failures: dict[str, int]
    tally: Tally
    flushes: list[Tally] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        return self.tally.balanced and all(t.balanced for t in self.flushes)


class StatsCollector:
    def __init__(self):
        self._series: dict[str, dict[str, list[tuple[int, float]]]] = defaultdict(dict)
        self.generated = 0
        self.delivered = 0
        self.drops: Counter[str] = Counter()
        self.failures: Counter[str] = Counter()
        self.archive: list[tuple[int, int, int, int, int]] = []  # (packet id, d1, d2, d3, total) ticks
        self.flushes: list[Tally] = []
        self._in_flight: Callable[[], int] | None = None

    # -- packet lifecycle -------------------------------------------------

    def packet_generated(self, packet: Packet) -> None:
        self.generated += 1

    def packet_dropped(self, packet: Packet, cause: str) -> None:
        self.drops[cause] += 1

    def packet_failed(self, packet: Packet, cause: str) -> None:
        self.failures[cause] += 1

    # -- samples ------------------------------------------------------------

    def record(self, metric: str, node: str, t: int, value: float) -> None:
        if value < 0:
            raise ValueError(f"negative delay {value} for {metric} at {node}")
        self._series[metric].setdefault(node, []).append((t, value))

    def record_mad(self, layer: str, node: str, queued_at: int, first_phy_send: int) -> None:
        """Queue insertion to first hand-off to the physical layer."""
        if first_phy_send < queued_at:
            raise ValueError(f"{node}: first send {first_phy_send} precedes queueing {queued_at}")
        self.record(f"{layer}.{MEDIUM_ACCESS}", node, first_phy_send,
                    (first_phy_send - queued_at) / TICKS_PER_SECOND)

    def record_hop(self, layer: str, node: str, arrival: int, departure: int,
                   kind: str = END_TO_END) -> None:
        self.record(f"{layer}.{kind}", node, departure, (departure - arrival) / TICKS_PER_SECOND)

    def record_e2e(self, packet: Packet) -> tuple[int, int, int, int]:
        """Archive a server-delivered packet; returns ``(d1, d2, d3, total)`` in ticks."""
        if packet.delivered_at is None:
            raise ValueError(f"packet {packet.id} not delivered")
        d1, d2, d3 = link_delays(packet)
        total = packet.delivered_at - packet.created_at
        self.delivered += 1
        self.archive.append((packet.id, d1, d2, d3, total))
        t = packet.delivered_at
        self.record(f"path.{END_TO_END}", packet.source, t, total / TICKS_PER_SECOND)
        self.record("path.link1-delay", packet.source, t, d1 / TICKS_PER_SECOND)
        self.record("path.link2-delay", packet.source, t, d2 / TICKS_PER_SECOND)
        self.record("path.link3-delay", packet.source, t, d3 / TICKS_PER_SECOND)
        return d1, d2, d3, total

    # -- queries ------------------------------------------------------------

    def metrics(self) -> list[str]:
        return sorted(self._series)

    def nodes(self, metric: str) -> list[str]:
        return sorted(self._series.get(metric, {}))

    def node_series(self, metric: str, node: str) -> StatSeries:
        return StatSeries(metric, "node", node, list(self._series.get(metric, {}).get(node, [])))

    def global_series(self, metric: str) -> StatSeries:
        per_node = self._series.get(metric, {})
        merged = heapq.merge(*(per_node[n] for n in sorted(per_node)), key=lambda s: s[0])
        return StatSeries(metric, "global", None, list(merged))

    def all_series(self) -> Iterable[StatSeries]:
        for metric in self.metrics():
            yield self.global_series(metric)
            for node in self.nodes(metric):
                yield self.node_series(metric, node)

    # -- conservation -------------------------------------------------------

    def track_in_flight(self, fn: Callable[[], int]) -> None:
        self._in_flight = fn

    def tally(self, t: int) -> Tally:
        in_flight = self._in_flight() if self._in_flight else 0
        return Tally(to_seconds(t), self.generated, self.delivered,
                     sum(self.drops.values()), sum(self.failures.values()), in_flight)

    def flush(self, t: int) -> None:
        self.flushes.append(self.tally(t))

    def summary(self, t: int) -> RunSummary:
        metrics = {}
        for m in self.metrics():
            s = self.global_series(m)
            vals = s.values
            metrics[m] = MetricSummary(len(vals), s.mean(), max(vals))
        return RunSummary(metrics, dict(sorted(self.drops.items())), dict(sorted(self.failures.items())),
                          self.tally(t), list(self.flushes))


def link_delays(packet: Packet) -> tuple[int, int, int]:
    """Link delays in ticks: sensor to ZigBee router, router to cloud entry, cloud to server."""
    t0 = packet.created_at
    t1 = packet.arrival_at("zr")
    t2 = packet.arrival_at("cloud")
    t3 = packet.arrival_at("server")
    return t1 - t0, t2 - t1, t3 - t2


def export_series(series: StatSeries, bucket: float) -> list[tuple[float, float, str]]:
    """Bucket a series into plot rows ``(bucket_end_s, value_s, aggregation)``.

    Each bucket that has been reached yields a ``cumulative-mean`` row (mean of
    every sample up to the bucket end); buckets holding samples also yield a
    ``bucket-mean`` row. Buckets are half-open ``(k*b, (k+1)*b]`` except the
    first, which includes ``0``.
    """
    if not bucket > 0:
        raise ValueError("bucket must be > 0")
    if not series.samples:
        return []
    b = round(bucket * TICKS_PER_SECOND)
    rows = []
    total = 0.0
    count = 0
    samples = series.samples
    i = 0
    first = max(1, -(-samples[0][0] // b))
    last = max(1, -(-samples[-1][0] // b))
    for k in range(first, last + 1):
        end = k * b
        bsum = []
        while i < len(samples) and samples[i][0] <= end:
            bsum.append(samples[i][1])
            i += 1
        if bsum:
            part = math.fsum(bsum)
            total += part
            count += len(bsum)
        rows.append((to_seconds(end), total / count, "cumulative-mean"))
        if bsum:
            rows.append((to_seconds(end), part / len(bsum), "bucket-mean"))
    return rows
