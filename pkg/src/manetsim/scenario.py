"""Scenario files: flat ``section.key = value`` text with Table-I defaults.

Example::

    # 25 nodes, no pause, two explicit flows
    scenario.nodes = 25
    mobility.pause_s = 0
    traffic.random_flows = 0
    flow.1 = 0 7 rate_bps=65536 start_s=2
    flow.2 = 3 11 rate_bps=65536 rbw_bps=40000

Lines starting with ``#`` are comments. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import math
import os
import types
import typing
from dataclasses import dataclass, field

PROTOCOLS = ("mcba", "aodv-baseline")
FEATURES = ("link_filter", "power_control", "congestion_control", "admission_control")


class ScenarioError(ValueError):
    """A scenario file could not be parsed or failed validation."""


@dataclass
class ScenarioSection:
    id: str = "default"
    nodes: int = 50
    area_x_m: float = 1500.0
    area_y_m: float = 500.0
    sim_time_s: float = 100.0
    seed: int = 1
    protocol: str = "mcba"


@dataclass
class MobilitySection:
    model: str = "random-waypoint"
    speed_mps: float = 5.0
    pause_s: float = 10.0
    speed_min_mps: float | None = None
    speed_max_mps: float | None = None


@dataclass
class RadioSection:
    frequency_hz: float = 914e6
    wavelength_m: float | None = None
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    max_power_w: float = 0.2818
    min_power_dbm: float = 0.0
    range_m: float = 250.0
    cs_range_m: float = 550.0
    rx_threshold_dbm: float | None = None
    cs_threshold_dbm: float | None = None
    channel_rate_bps: float = 2e6


@dataclass
class EnergySection:
    initial_j: float = 4.7
    rx_w: float = 0.395
    tx_w: float = 0.660
    idle_w: float = 0.035


@dataclass
class MacSection:
    sifs_us: float = 10.0
    difs_us: float = 50.0
    slot_us: float = 20.0
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 4
    queue_limit: int = 50
    rts_bits: int = 160
    cts_bits: int = 112
    ack_bits: int = 112
    header_bits: int = 272
    control_rate_bps: float | None = None


@dataclass
class AodvSection:
    active_route_timeout_s: float = 3.0
    net_traversal_time_s: float = 2.8
    rreq_retries: int = 2
    ttl: int = 35
    buffer_limit: int = 64
    hello_interval_s: float = 1.0


@dataclass
class McbaSection:
    link_filter: bool | None = None
    power_control: bool | None = None
    congestion_control: bool | None = None
    admission_control: bool | None = None
    k: float = 1.0
    rss_margin_db: float = 10.0
    rts_at_max_power: bool = False
    window_s: float = 0.5
    t_rh_s: float | None = None
    weight: float = 2.0
    min_bw_frac: float = 0.05
    max_bw_frac: float = 0.4
    hysteresis: float = 0.05
    rt_min_bps: float = 8192.0
    fbw_mode: str = "total"
    probe_timeout_s: float | None = None


@dataclass
class TrafficSection:
    random_flows: int = 10
    rate_bps: float = 32768.0
    rbw_bps: float | None = None
    packet_bytes: int = 512
    start_min_s: float = 1.0
    start_max_s: float = 10.0


@dataclass
class MetricsSection:
    count_hello: bool = True
    sample_interval_s: float = 0.0


@dataclass
class FlowSpec:
    source: int
    destination: int
    rate_bps: float
    rbw_bps: float | None = None
    packet_bytes: int = 512
    start_s: float = 1.0
    stop_s: float | None = None


SECTIONS = {
    "scenario": ScenarioSection,
    "mobility": MobilitySection,
    "radio": RadioSection,
    "energy": EnergySection,
    "mac": MacSection,
    "aodv": AodvSection,
    "mcba": McbaSection,
    "traffic": TrafficSection,
    "metrics": MetricsSection,
}


@dataclass
class ScenarioConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    mobility: MobilitySection = field(default_factory=MobilitySection)
    radio: RadioSection = field(default_factory=RadioSection)
    energy: EnergySection = field(default_factory=EnergySection)
    mac: MacSection = field(default_factory=MacSection)
    aodv: AodvSection = field(default_factory=AodvSection)
    mcba: McbaSection = field(default_factory=McbaSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    flows: list[FlowSpec] = field(default_factory=list)
    positions: list[tuple[float, float]] | None = None

    def features(self) -> dict[str, bool]:
        """Cross-layer toggles: protocol default, overridden by explicit mcba.* keys."""
        on = self.scenario.protocol == "mcba"
        return {name: on if getattr(self.mcba, name) is None else bool(getattr(self.mcba, name))
                for name in FEATURES}

    def with_overrides(self, protocol: str | None = None, seed: int | None = None,
                       **section_values) -> "ScenarioConfig":
        cfg = dataclasses.replace(self)
        for name in SECTIONS:
            setattr(cfg, name, dataclasses.replace(getattr(self, name)))
        cfg.flows = list(self.flows)
        if protocol is not None:
            cfg.scenario.protocol = protocol
        if seed is not None:
            cfg.scenario.seed = seed
        for dotted, value in section_values.items():
            section, key = dotted.split("__", 1)
            setattr(getattr(cfg, section), key, value)
        validate(cfg)
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            for f in dataclasses.fields(getattr(self, name)):
                out[f"{name}.{f.name}"] = getattr(getattr(self, name), f.name)
        for i, flow in enumerate(self.flows, start=1):
            out[f"flow.{i}"] = dataclasses.asdict(flow)
        if self.positions is not None:
            out["positions"] = [list(p) for p in self.positions]
        return out


def _field_types(cls) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _parse_value(raw: str, hint, where: str):
    raw = raw.strip()
    optional = False
    args = typing.get_args(hint)
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        optional = type(None) in args
        hint = next(a for a in args if a is not type(None))
    if optional and raw.lower() in ("none", "null", ""):
        return None
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if hint is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        if hint is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        if hint is str:
            return raw.strip('"').strip("'")
    except ValueError:
        raise ScenarioError(f"{where}: malformed value {raw!r} (expected {hint.__name__})") \
            from None
    raise ScenarioError(f"{where}: unsupported field type")


def _parse_flow(raw: str, where: str) -> FlowSpec:
    tokens = raw.split()
    if len(tokens) < 2:
        raise ScenarioError(f"{where}: flow needs 'source destination [key=value ...]'")
    kwargs: dict = {}
    hints = _field_types(FlowSpec)
    for name, tok in zip(("source", "destination"), tokens[:2]):
        kwargs[name] = _parse_value(tok, int, f"{where} ({name})")
    for tok in tokens[2:]:
        if "=" not in tok:
            raise ScenarioError(f"{where}: expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        if key not in hints or key in ("source", "destination"):
            raise ScenarioError(f"{where}: unknown flow field {key!r}")
        kwargs[key] = _parse_value(value, hints[key], f"{where} ({key})")
    kwargs.setdefault("rate_bps", None)
    return FlowSpec(**kwargs)


def parse_scenario(text: str, source: str = "<scenario>",
                   extra_sections: tuple[str, ...] = ()) -> tuple[ScenarioConfig, dict]:
    """Parse scenario text. Keys of ``extra_sections`` are returned raw, by dotted name."""
    cfg = ScenarioConfig()
    extras: dict[str, tuple[str, int]] = {}
    types_by_section = {name: _field_types(cls) for name, cls in SECTIONS.items()}
    seen: dict[str, int] = {}
    flows: list[tuple[str, FlowSpec]] = []
    positions: dict[int, tuple[float, float]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        where = f"{source}:{lineno}"
        if "=" not in stripped:
            raise ScenarioError(f"{where}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in seen:
            raise ScenarioError(f"{where}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        section, _, name = key.partition(".")
        if not name:
            raise ScenarioError(f"{where}: key {key!r} must be 'section.name'")
        if section in extra_sections:
            extras[key] = (raw, lineno)
            continue
        if section == "flow":
            flows.append((name, _parse_flow(raw, f"{where} {key}")))
            continue
        if section == "position":
            try:
                idx = int(name)
                x, y = (float(v) for v in raw.replace(",", " ").split())
            except ValueError:
                raise ScenarioError(f"{where}: expected 'position.<node> = x y'") from None
            positions[idx] = (x, y)
            continue
        if section not in types_by_section:
            raise ScenarioError(f"{where}: unknown section in key {key!r}")
        hints = types_by_section[section]
        if name not in hints:
            raise ScenarioError(f"{where}: unknown key {key!r}")
        setattr(getattr(cfg, section), name, _parse_value(raw, hints[name], f"{where} {key}"))
    for name, flow in flows:
        if flow.rate_bps is None:
            flow.rate_bps = cfg.traffic.rate_bps
        cfg.flows.append(flow)
    if positions:
        n = cfg.scenario.nodes
        missing = sorted(set(range(n)) - set(positions))
        if missing or len(positions) != n:
            raise ScenarioError(f"{source}: position.* must list every node 0..{n - 1}")
        cfg.positions = [positions[i] for i in range(n)]
    validate(cfg)
    return cfg, extras


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ScenarioError(f"{key}: {message}")


def validate(cfg: ScenarioConfig) -> None:
    s = cfg.scenario
    _require(s.nodes >= 2, "scenario.nodes", "need at least 2 nodes")
    _require(s.area_x_m > 0 and s.area_y_m > 0, "scenario.area", "area must be positive")
    _require(s.sim_time_s > 0, "scenario.sim_time_s", "must be positive")
    _require(s.protocol in PROTOCOLS, "scenario.protocol", f"must be one of {PROTOCOLS}")
    m = cfg.mobility
    _require(m.model in ("random-waypoint", "static"), "mobility.model",
             "must be random-waypoint or static")
    _require(m.speed_mps > 0, "mobility.speed_mps", "must be positive")
    _require(m.pause_s >= 0, "mobility.pause_s", "must be non-negative")
    if (m.speed_min_mps is None) != (m.speed_max_mps is None):
        raise ScenarioError("mobility.speed_min_mps: set both speed bounds or neither")
    if m.speed_min_mps is not None:
        _require(0 < m.speed_min_mps <= m.speed_max_mps, "mobility.speed_min_mps",
                 "need 0 < min <= max")
    r = cfg.radio
    for key in ("frequency_hz", "tx_gain", "rx_gain", "max_power_w", "range_m", "cs_range_m",
                "channel_rate_bps"):
        _require(getattr(r, key) > 0, f"radio.{key}", "must be positive")
    if r.wavelength_m is not None:
        _require(r.wavelength_m > 0, "radio.wavelength_m", "must be positive")
    _require(r.cs_range_m >= r.range_m, "radio.cs_range_m", "must be at least radio.range_m")
    e = cfg.energy
    for key in ("initial_j", "rx_w", "tx_w", "idle_w"):
        _require(getattr(e, key) > 0, f"energy.{key}", "must be positive")
    _require(e.tx_w >= e.idle_w, "energy.tx_w", "must be at least energy.idle_w")
    mac = cfg.mac
    _require(mac.difs_us > mac.sifs_us > 0, "mac.difs_us", "need difs > sifs > 0")
    _require(mac.slot_us > 0, "mac.slot_us", "must be positive")
    _require(0 <= mac.cw_min <= mac.cw_max, "mac.cw_min", "need 0 <= cw_min <= cw_max")
    _require(mac.retry_limit >= 1, "mac.retry_limit", "must be at least 1")
    _require(mac.queue_limit >= 1, "mac.queue_limit", "must be at least 1")
    for key in ("rts_bits", "cts_bits", "ack_bits"):
        _require(getattr(mac, key) > 0, f"mac.{key}", "must be positive")
    _require(mac.header_bits >= 0, "mac.header_bits", "must be non-negative")
    a = cfg.aodv
    for key in ("active_route_timeout_s", "net_traversal_time_s", "hello_interval_s"):
        _require(getattr(a, key) > 0, f"aodv.{key}", "must be positive")
    _require(a.rreq_retries >= 0, "aodv.rreq_retries", "must be non-negative")
    _require(a.ttl >= 1, "aodv.ttl", "must be at least 1")
    c = cfg.mcba
    _require(c.k >= 1.0, "mcba.k", "must be at least 1")
    _require(c.window_s > 0, "mcba.window_s", "must be positive")
    if c.t_rh_s is not None:
        _require(c.t_rh_s > 0, "mcba.t_rh_s", "must be positive")
    _require(c.weight > 0, "mcba.weight", "must be positive")
    _require(0 <= c.min_bw_frac <= c.max_bw_frac, "mcba.min_bw_frac",
             "need 0 <= min_bw_frac <= max_bw_frac")
    _require(c.rt_min_bps > 0, "mcba.rt_min_bps", "must be positive")
    _require(c.hysteresis >= 0, "mcba.hysteresis", "must be non-negative")
    _require(c.fbw_mode in ("total", "ubw-only"), "mcba.fbw_mode", "must be total or ubw-only")
    t = cfg.traffic
    _require(t.random_flows >= 0, "traffic.random_flows", "must be non-negative")
    _require(t.rate_bps > 0, "traffic.rate_bps", "must be positive")
    _require(t.packet_bytes > 0, "traffic.packet_bytes", "must be positive")
    _require(0 <= t.start_min_s <= t.start_max_s, "traffic.start_min_s",
             "need 0 <= start_min_s <= start_max_s")
    _require(cfg.metrics.sample_interval_s >= 0, "metrics.sample_interval_s",
             "must be non-negative")
    for i, flow in enumerate(cfg.flows, start=1):
        key = f"flow.{i}"
        for end in (flow.source, flow.destination):
            _require(0 <= end < s.nodes, key, f"node {end} does not exist in a {s.nodes}-node "
                     "scenario")
        _require(flow.source != flow.destination, key, "source equals destination")
        _require(flow.rate_bps is not None and flow.rate_bps > 0, key, "rate_bps must be positive")
        _require(flow.rbw_bps is None or flow.rbw_bps > 0, key, "rbw_bps must be positive")
        _require(flow.packet_bytes > 0, key, "packet_bytes must be positive")
        _require(flow.start_s >= 0, key, "start_s must be non-negative")
    if cfg.positions is not None:
        _require(len(cfg.positions) == s.nodes, "position", "one position per node required")
        for i, (x, y) in enumerate(cfg.positions):
            _require(0 <= x <= s.area_x_m and 0 <= y <= s.area_y_m, f"position.{i}",
                     "outside the simulation area")
        if len(set(cfg.positions)) != len(cfg.positions):
            raise ScenarioError("position: co-located nodes are not allowed")


def read_text(path) -> str:
    if not os.path.exists(path):
        raise ScenarioError(f"{path}: no such file")
    with open(path) as fh:
        return fh.read()


def load_scenario(path) -> ScenarioConfig:
    cfg, _ = parse_scenario(read_text(path), os.fspath(path))
    return cfg
