"""Run a scenario end to end."""

from __future__ import annotations

from dataclasses import dataclass

from .kernel import Kernel
from .scenario import Scenario, Topology, build_topology
from .stats import RunSummary, StatsCollector


@dataclass
class SimulationResult:
    scenario: Scenario
    kernel: Kernel
    topology: Topology
    stats: StatsCollector
    summary: RunSummary
    events: int


def run_scenario(scenario: Scenario, duration: float | None = None, seed: int | None = None,
                 trace: bool = False, keep_packets: bool = False) -> SimulationResult:
    duration = scenario.duration if duration is None else duration
    seed = scenario.seed if seed is None else seed
    if duration < 0:
        raise ValueError("duration must be >= 0")
    kernel = Kernel(seed=seed, flush_interval=scenario.stat_flush_events, trace=trace)
    stats = StatsCollector()
    kernel.on_flush(stats.flush)
    topo = build_topology(scenario, kernel, stats)
    topo.server.keep_packets = keep_packets
    events = kernel.run_until(duration)
    return SimulationResult(scenario, kernel, topo, stats, stats.summary(kernel.now_ticks), events)
