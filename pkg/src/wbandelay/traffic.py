"""Sensor traffic: packets with per-hop timestamps and constant-rate generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .kernel import Kernel, to_seconds, to_ticks


@dataclass(frozen=True)
class TrafficConfig:
    packet_interarrival_time: float = 0.04
    packet_size: int = 1024
    start_time_min: float = 20.0
    start_time_max: float = 21.0
    stop_time: float | None = None
    sensor_count: int = 3

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if not self.packet_interarrival_time > 0:
            errs.append(("packet_interarrival_time", "must be > 0"))
        if not self.packet_size > 0:
            errs.append(("packet_size", "must be > 0"))
        if self.start_time_min < 0:
            errs.append(("start_time_min", "must be >= 0"))
        if self.start_time_min > self.start_time_max:
            errs.append(("start_time_min", f"must be <= start_time_max ({self.start_time_max})"))
            errs.append(("start_time_max", f"must be >= start_time_min ({self.start_time_min})"))
        if self.stop_time is not None and self.stop_time < 0:
            errs.append(("stop_time", "must be >= 0 or null"))
        if self.sensor_count < 1:
            errs.append(("sensor_count", "must be >= 1"))
        return errs


@dataclass(slots=True)
class Hop:
    name: str
    arrival: int
    departure: int | None = None


@dataclass(slots=True, eq=False)
class Packet:
    """A unit of medical data. Times are integer ticks."""

    id: int
    source: str
    seq: int
    created_at: int
    size: int
    hops: list[Hop] = field(default_factory=list)
    delivered_at: int | None = None

    @property
    def bits(self) -> int:
        return self.size * 8

    def arrive(self, hop: str, t: int) -> None:
        if self.hops:
            last = self.hops[-1]
            if last.departure is None or t < last.departure:
                raise RuntimeError(f"packet {self.id}: arrival at {hop} before leaving {last.name}")
        elif t < self.created_at:
            raise RuntimeError(f"packet {self.id}: arrival before creation")
        self.hops.append(Hop(hop, t))

    def depart(self, t: int) -> None:
        last = self.hops[-1]
        if last.departure is not None:
            raise RuntimeError(f"packet {self.id}: already left {last.name}")
        if t < last.arrival:
            raise RuntimeError(f"packet {self.id}: departure before arrival at {last.name}")
        last.departure = t

    def arrival_at(self, hop: str) -> int:
        for h in self.hops:
            if h.name == hop:
                return h.arrival
        raise KeyError(hop)

    def hop_names(self) -> list[str]:
        return [h.name for h in self.hops]


class PacketIds:
    """Run-wide packet id counter."""

    def __init__(self):
        self._next = 0

    def take(self) -> int:
        i = self._next
        self._next += 1
        return i


class SensorGenerator:
    """Emits one packet every ``packet_interarrival_time`` from a uniform start.

    Emission ``k`` happens at exactly ``start + k * interarrival`` ticks.
    """

    def __init__(self, kernel: Kernel, config: TrafficConfig, sensor: str,
                 sink: Callable[[Packet], None], ids: PacketIds,
                 on_generate: Callable[[Packet], None] | None = None):
        self.kernel = kernel
        self.config = config
        self.sensor = sensor
        self.sink = sink
        self.ids = ids
        self.on_generate = on_generate
        self.rng = kernel.stream(f"{sensor}/traffic")
        self.interarrival = to_ticks(config.packet_interarrival_time)
        self.stop = None if config.stop_time is None else to_ticks(config.stop_time)
        self.start_at: int | None = None
        self.emitted = 0
        self.active = False

    def start(self) -> None:
        cfg = self.config
        self.start_at = to_ticks(self.rng.uniform(cfg.start_time_min, cfg.start_time_max))
        self.active = True
        self._schedule(self.start_at)

    def _schedule(self, t: int) -> None:
        if self.stop is not None and t >= self.stop:
            self.active = False
            return
        self.kernel.schedule_at(t, self.sensor, "packet-arrival", self._emit)

    def _emit(self) -> None:
        pkt = self.next_packet()
        if self.on_generate is not None:
            self.on_generate(pkt)
        self.sink(pkt)
        self._schedule(self.start_at + self.emitted * self.interarrival)

    def next_packet(self) -> Packet:
        now = self.kernel.now_ticks
        if not self.active or (self.stop is not None and now >= self.stop):
            raise RuntimeError(f"{self.sensor}: emission at {to_seconds(now)} s after stop")
        pkt = Packet(self.ids.take(), self.sensor, self.emitted, now, self.config.packet_size)
        self.emitted += 1
        return pkt


def start_generators(kernel: Kernel, config: TrafficConfig,
                     sinks: dict[str, Callable[[Packet], None]],
                     ids: PacketIds | None = None,
                     on_generate: Callable[[Packet], None] | None = None) -> list[SensorGenerator]:
    """Create and start one generator per sensor in ``sinks``."""
    ids = ids or PacketIds()
    gens = []
    for sensor, sink in sinks.items():
        g = SensorGenerator(kernel, config, sensor, sink, ids, on_generate)
        g.start()
        gens.append(g)
    return gens
