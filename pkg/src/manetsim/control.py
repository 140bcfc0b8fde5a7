"""Congestion control driven by MAC overhead and Hello-based admission control."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


@dataclass
class CongestionParams:
    window: float = 0.5
    t_rh: float | None = None
    rt_min: float = 8192.0
    rt_max: float | None = None
    hysteresis: float = 0.05

    def __post_init__(self):
        if self.t_rh is None:
            self.t_rh = 0.4 * self.window
        if self.t_rh <= 0 or self.window <= 0:
            raise ValueError("t_rh and window must be positive")
        if self.rt_min <= 0 or (self.rt_max is not None and self.rt_max < self.rt_min):
            raise ValueError("need 0 < rt_min <= rt_max")


def channel_resource_delta(oh_mac: float, t_rh: float, s: float,
                           delta_max: float | None = None) -> float:
    """Signed spare channel resource in bits/s for a load ``s``.

    An idle window (no overhead at all) returns ``delta_max``, which defaults
    to ``s`` so that the rate can double.
    """
    if s < 0:
        raise ValueError("traffic load must be non-negative")
    if oh_mac == 0:
        return s if delta_max is None else delta_max
    return (t_rh - oh_mac) / oh_mac * s


def adjust_rate(rt: float, fd: float, rt_min: float, rt_max: float) -> float:
    return min(max(rt + fd, rt_min), rt_max)


class FbwMode(enum.Enum):
    TOTAL = "total"          # (CHBW - UBW) / WT
    UBW_ONLY = "ubw-only"    # CHBW - UBW / WT


@dataclass
class BandwidthBook:
    channel_bw: float = 2e6
    weight: float = 2.0
    own_measured: float = 0.0
    reserved: float = 0.0
    neighbor_consumed: float = 0.0
    mode: FbwMode = FbwMode.TOTAL
    admitted: dict = field(default_factory=dict)
    admissions_total: float = 0.0
    releases_total: float = 0.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("weight must be positive")

    @property
    def own_consumed(self) -> float:
        return max(self.own_measured, self.reserved)

    def reserve(self, flow_id: int, rbw: float) -> None:
        if flow_id in self.admitted:
            return
        self.admitted[flow_id] = rbw
        self.reserved += rbw
        self.admissions_total += rbw

    def release(self, flow_id: int) -> None:
        rbw = self.admitted.pop(flow_id, None)
        if rbw is None:
            return
        self.reserved -= rbw
        self.releases_total += rbw
        if not self.admitted:
            self.reserved = 0.0


def feasible_bandwidth(book: BandwidthBook) -> float:
    used = book.own_consumed + book.neighbor_consumed
    if book.mode is FbwMode.UBW_ONLY:
        fbw = book.channel_bw - used / book.weight
    else:
        fbw = (book.channel_bw - used) / book.weight
    return max(fbw, 0.0)


class Admission(enum.Enum):
    ADMIT = "admit"
    REJECT = "reject"
    PROBE = "probe"


@dataclass(frozen=True)
class FlowRequest:
    flow_id: int
    source: int
    destination: int
    required_bw: float

    def __post_init__(self):
        if self.required_bw <= 0:
            raise ValueError("required bandwidth must be positive")


def admit_flow(request: FlowRequest, fbw_local: float, min_bw: float,
               max_bw: float) -> Admission:
    rbw = request.required_bw
    if fbw_local < rbw:
        return Admission.REJECT
    if rbw < min_bw:
        return Admission.ADMIT
    if rbw > max_bw:
        return Admission.REJECT
    return Admission.PROBE


class Probe:
    """Admission probe that collects the smallest feasible bandwidth along a path."""

    __slots__ = ("flow_id", "source", "destination", "required_bw", "min_fbw", "returning",
                 "hops")
    bits = 224

    def __init__(self, flow_id, source, destination, required_bw, min_fbw, returning=False):
        self.flow_id = flow_id
        self.source = source
        self.destination = destination
        self.required_bw = required_bw
        self.min_fbw = min_fbw
        self.returning = returning
        self.hops = 0


def probe_decision(min_fbw: float | None, required_bw: float) -> Admission:
    """Final verdict of a probe; a lost probe (``None``) rejects."""
    if min_fbw is None or min_fbw < required_bw:
        return Admission.REJECT
    return Admission.ADMIT


class CongestionNotice:
    """Explicit rate feedback travelling from a congested node to a flow's source."""

    __slots__ = ("flow_id", "source", "destination", "delta", "origin", "hops")
    bits = 224

    def __init__(self, flow_id, reporter, source, delta):
        self.flow_id = flow_id
        self.origin = reporter
        # routed toward the flow's source
        self.source = reporter
        self.destination = source
        self.delta = delta
        self.hops = 0


def split_delta(delta_by_flow_load: dict[int, float], oh_mac: float, t_rh: float,
                rates: dict[int, float] | None = None) -> dict[int, float]:
    """Apportion the node's resource delta to flows in proportion to their window load.

    ``delta_by_flow_load`` maps flow id to the flow's load at this node in
    bits/s. Since the delta is linear in the load, each flow's share equals
    the delta computed on its own load. ``rates`` supplies the idle-window
    cap per flow.
    """
    out = {}
    for fid, load in delta_by_flow_load.items():
        cap = None if rates is None else rates.get(fid)
        out[fid] = channel_resource_delta(oh_mac, t_rh, load, cap)
    return out
