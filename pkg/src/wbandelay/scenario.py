"""Scenario documents: parsing, validation, provenance and topology wiring.

A scenario is a YAML mapping. Every key is optional except ``path`` (which
may also be supplied by the caller); anything left out takes the default
from the reference parameter set. Unknown keys and invalid values are
reported with their dotted field path.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Union

import yaml

from .analytic import UmtsDelayComponents
from .kernel import Kernel
from .mac_zigbee import Channel, ZigbeeConfig, ZigbeeMac, ZigbeeNodeConfig, ZigbeeRouter, check_roles
from .segments import (
    CloudLink,
    CloudLinkConfig,
    Server,
    UmtsConfig,
    UmtsSegment,
    WimaxConfig,
    WimaxSegment,
    WlanConfig,
    WlanSegment,
)
from .stats import StatsCollector
from .traffic import PacketIds, SensorGenerator, TrafficConfig, start_generators

PATHS = {"path1": "wlan", "path2": "wimax", "path3": "umts"}
SEGMENT_TYPES = {"wlan": WlanConfig, "wimax": WimaxConfig, "umts": UmtsConfig}
MAX_SEED = 2**64 - 1


class ScenarioError(ValueError):
    """Invalid scenario document. ``problems`` holds ``(field_path, message)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


@dataclass(frozen=True)
class Scenario:
    path: str
    segment: WlanConfig | WimaxConfig | UmtsConfig
    zigbee: ZigbeeConfig = field(default_factory=ZigbeeConfig)
    cloud: CloudLinkConfig = field(default_factory=CloudLinkConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    duration: float = 3600.0
    seed: int = 1
    stat_flush_events: int = 5000
    provenance: dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    @property
    def segment_key(self) -> str:
        return PATHS[self.path]

    def with_overrides(self, **changes: Any) -> "Scenario":
        return dataclasses.replace(self, **changes)


# -- parsing -----------------------------------------------------------------

def _coerce(value: Any, tp: Any, where: str, problems: list, prov: dict, prefix: str) -> Any:
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where, problems, prov, prefix)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            problems.append((prefix + where, "expected a mapping"))
            return tp()
        return _build(tp, value, problems, prov, prefix + where + ".")
    if origin is tuple:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            problems.append((prefix + where, "expected a list of names"))
            return None
        return tuple(value)
    if tp is bool:
        if not isinstance(value, bool):
            problems.append((prefix + where, "expected true/false"))
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append((prefix + where, "expected an integer"))
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append((prefix + where, "expected a number"))
            return value
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            problems.append((prefix + where, "expected a string"))
        return value
    raise TypeError(f"unsupported field type {tp!r}")


def _build(cls: type, doc: dict, problems: list, prov: dict, prefix: str) -> Any:
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    for key in doc:
        if key not in names:
            problems.append((prefix + str(key), "unknown key"))
    kwargs = {}
    default = cls()
    for name in names:
        tp = hints[name]
        if name in doc:
            n_before = len(problems)
            kwargs[name] = _coerce(doc[name], tp, name, problems, prov, prefix)
            if len(problems) > n_before:
                kwargs.pop(name)
            if not dataclasses.is_dataclass(tp):
                prov[prefix + name] = "document"
        else:
            _mark_default(getattr(default, name), prefix + name, prov)
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append((prefix.rstrip("."), str(exc)))
        return default
    errors = getattr(obj, "errors", None)
    if errors is not None:
        problems.extend((prefix + f, m) for f, m in errors())
    return obj


def _mark_default(value: Any, where: str, prov: dict) -> None:
    if dataclasses.is_dataclass(value):
        for f in dataclasses.fields(value):
            _mark_default(getattr(value, f.name), f"{where}.{f.name}", prov)
    else:
        prov[where] = "default"


def load_scenario(source: str | dict | None, path: str | None = None) -> Scenario:
    """Parse and validate a scenario document (YAML text or an already-parsed mapping).

    ``path`` overrides the document's ``path`` key.
    """
    if source is None or isinstance(source, dict):
        doc = dict(source or {})
    else:
        try:
            doc = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise ScenarioError([("<document>", f"not valid YAML: {exc}")]) from exc
        doc = {} if doc is None else doc
        if not isinstance(doc, dict):
            raise ScenarioError([("<document>", "top level must be a mapping")])
    problems: list[tuple[str, str]] = []
    prov: dict[str, str] = {}

    if path is not None:
        doc["path"] = path
        prov["path"] = "argument"
    chosen = doc.get("path")
    if chosen not in PATHS:
        raise ScenarioError([("path", f"must be one of {sorted(PATHS)}, got {chosen!r}")])
    prov.setdefault("path", "document")
    seg_key = PATHS[chosen]

    allowed = {"path", "seed", "duration", "stat_flush_events", "zigbee", "cloud", "traffic", seg_key}
    for key in doc:
        if key in SEGMENT_TYPES and key != seg_key:
            problems.append((key, f"segment does not match {chosen} (expects '{seg_key}')"))
        elif key not in allowed:
            problems.append((str(key), "unknown key"))

    def section(key: str, cls: type) -> Any:
        if key in doc:
            if not isinstance(doc[key], dict):
                problems.append((key, "expected a mapping"))
                return cls()
            return _build(cls, doc[key], problems, prov, key + ".")
        _mark_default(cls(), key, prov)
        return cls()

    zigbee = section("zigbee", ZigbeeConfig)
    segment = section(seg_key, SEGMENT_TYPES[seg_key])
    cloud = section("cloud", CloudLinkConfig)
    traffic = section("traffic", TrafficConfig)

    top = {}
    for key, tp, check in (
        ("seed", int, lambda v: 0 <= v <= MAX_SEED or "must be a 64-bit unsigned integer"),
        ("duration", float, lambda v: v >= 0 or "must be >= 0"),
        ("stat_flush_events", int, lambda v: v >= 1 or "must be >= 1"),
    ):
        if key in doc:
            n_before = len(problems)
            v = _coerce(doc[key], tp, key, problems, prov, "")
            if len(problems) == n_before:
                ok = check(v)
                if ok is not True:
                    problems.append((key, ok))
                else:
                    top[key] = v
            prov[key] = "document"
        else:
            prov[key] = "default"
    if problems:
        raise ScenarioError(problems)
    return Scenario(path=chosen, segment=segment, zigbee=zigbee, cloud=cloud, traffic=traffic,
                    provenance=prov, **top)


def load_scenario_file(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([("<file>", f"cannot read {p}: {exc.strerror}")]) from exc
    return load_scenario(text)


def _plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "path": scenario.path,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "stat_flush_events": scenario.stat_flush_events,
        "zigbee": _plain(scenario.zigbee),
        scenario.segment_key: _plain(scenario.segment),
        "cloud": _plain(scenario.cloud),
        "traffic": _plain(scenario.traffic),
    }


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)


# -- presets -----------------------------------------------------------------

def preset_names() -> list[str]:
    root = resources.files("wbandelay") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    root = resources.files("wbandelay") / "presets"
    res = root / f"{name}.yaml"
    if not res.is_file():
        raise ScenarioError([("<preset>", f"unknown preset {name!r}; available: {preset_names()}")])
    return res.read_text(encoding="utf-8")


def load_preset(name: str) -> Scenario:
    return load_scenario(preset_text(name))


def resolve(ref: str) -> Scenario:
    """Load ``ref`` as a file path if it exists, otherwise as a preset name."""
    if Path(ref).is_file():
        return load_scenario_file(ref)
    return load_preset(ref)


# -- topology ----------------------------------------------------------------

@dataclass
class Topology:
    kernel: Kernel
    stats: StatsCollector
    sensors: list[ZigbeeMac]
    end_device: ZigbeeMac
    coordinator: ZigbeeMac
    router: ZigbeeRouter
    segment: WlanSegment | WimaxSegment | UmtsSegment
    cloud: CloudLink
    server: Server
    channel: Channel
    generators: list[SensorGenerator]
    zigbee_nodes: list[ZigbeeNodeConfig]

    @property
    def segment_stages(self) -> list[str]:
        if isinstance(self.segment, UmtsSegment):
            return [s.name for s in self.segment.stages]
        return [self.segment.name]

    @property
    def node_names(self) -> list[str]:
        return ([s.name for s in self.sensors]
                + [self.end_device.name, self.coordinator.name, self.router.name]
                + self.segment_stages + [self.cloud.name, self.server.name])

    @property
    def hop_sequence(self) -> list[str]:
        return (["<sensor>", self.end_device.name, self.coordinator.name, self.router.name]
                + self.segment_stages + [self.cloud.name, self.server.name])

    @property
    def macs(self) -> list[ZigbeeMac]:
        return [*self.sensors, self.end_device, self.coordinator]

    def in_flight(self) -> int:
        return (sum(m.resident for m in self.macs) + self.router.resident
                + self.segment.resident + self.cloud.resident + self.server.resident)


def build_topology(scenario: Scenario, kernel: Kernel, stats: StatsCollector,
                   start: bool = True) -> Topology:
    """Wire sensors, the three ZigBee roles, the access segment, cloud and server."""
    server = Server(kernel, stats)
    cloud = CloudLink(kernel, scenario.cloud, server.accept)
    seg_cfg = scenario.segment
    if isinstance(seg_cfg, WlanConfig):
        segment = WlanSegment(kernel, seg_cfg, cloud.accept, stats)
    elif isinstance(seg_cfg, WimaxConfig):
        segment = WimaxSegment(kernel, seg_cfg, cloud.accept, stats)
    else:
        segment = UmtsSegment(kernel, seg_cfg, cloud.accept, stats)
    zc_cfg = scenario.zigbee
    router = ZigbeeRouter(kernel, "zr", segment.accept)
    channel = Channel()
    coordinator = ZigbeeMac(kernel, "zc", "coordinator", zc_cfg, channel, router.enqueue, stats)
    end_device = ZigbeeMac(kernel, "zed", "end-device", zc_cfg, channel, coordinator.enqueue, stats)
    sensors = [ZigbeeMac(kernel, f"sensor{i}", "sensor", zc_cfg, channel, end_device.enqueue, stats)
               for i in range(scenario.traffic.sensor_count)]
    roles = [ZigbeeNodeConfig(m.name, m.role, zc_cfg) for m in (*sensors, end_device, coordinator)]
    roles.append(ZigbeeNodeConfig(router.name, router.role, zc_cfg))
    check_roles(roles)
    topo = Topology(kernel, stats, sensors, end_device, coordinator, router, segment, cloud, server,
                    channel, [], roles)
    stats.track_in_flight(topo.in_flight)
    if start:
        topo.generators = start_generators(
            kernel, scenario.traffic, {s.name: s.enqueue for s in sensors}, PacketIds(),
            stats.packet_generated)
    return topo


__all__ = [
    "PATHS", "Scenario", "ScenarioError", "Topology", "build_topology", "dump_scenario",
    "load_preset", "load_scenario", "load_scenario_file", "preset_names", "resolve",
    "scenario_to_dict", "UmtsDelayComponents",
]
