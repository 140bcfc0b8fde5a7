"""Run metrics: event counters, final report and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from dataclasses import dataclass, field, fields
from types import MappingProxyType

CSV_COLUMNS = (
    "scenario_id", "protocol", "seed", "nodes", "pause", "sent", "delivered", "dropped",
    "control_pkts", "pdr", "avg_delay_s", "throughput_pkts", "avg_energy_j", "control_overhead",
    "throughput_bps", "in_flight", "flows_admitted", "flows_rejected",
)


class ConservationError(RuntimeError):
    """Internal bookkeeping did not balance at the end of a run."""


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.9g}"
    return str(value)


@dataclass(frozen=True)
class MetricsReport:
    scenario_id: str
    protocol: str
    seed: int
    nodes: int
    pause: float
    sim_time: float
    sent: int
    delivered: int
    dropped: int
    in_flight: int
    control_pkts: int
    pdr: float
    pdr_defined: bool
    avg_delay_s: float | None
    throughput_pkts: int
    throughput_bps: float
    avg_energy_j: float
    control_overhead: float | None
    flows_admitted: int
    flows_rejected: int
    drop_causes: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    control_by_type: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    trace_digest: str = ""

    def __reduce__(self):
        # mapping proxies do not pickle; rebuild them on the other side
        state = {f.name: getattr(self, f.name) for f in fields(self)}
        state["drop_causes"] = dict(self.drop_causes)
        state["control_by_type"] = dict(self.control_by_type)
        return (_rebuild_report, (state,))

    def row(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "protocol": self.protocol,
            "seed": self.seed,
            "nodes": self.nodes,
            "pause": float(self.pause),
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "control_pkts": self.control_pkts,
            "pdr": self.pdr if self.pdr_defined else None,
            "avg_delay_s": self.avg_delay_s,
            "throughput_pkts": self.throughput_pkts,
            "avg_energy_j": self.avg_energy_j,
            "control_overhead": self.control_overhead,
            "throughput_bps": self.throughput_bps,
            "in_flight": self.in_flight,
            "flows_admitted": self.flows_admitted,
            "flows_rejected": self.flows_rejected,
        }


def _rebuild_report(state: dict) -> MetricsReport:
    state = dict(state)
    state["drop_causes"] = MappingProxyType(state["drop_causes"])
    state["control_by_type"] = MappingProxyType(state["control_by_type"])
    return MetricsReport(**state)


class MetricsCollector:
    """Counts data and control events during a run.

    Every data packet is registered on send and must end in exactly one of
    delivered or dropped, or still be live when the run stops.
    """

    def __init__(self, count_hello: bool = True):
        self.count_hello = count_hello
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.delivered_bits = 0
        self.delay_sum = 0.0
        self.delays_n = 0
        self.control = Counter()
        self.drop_causes = Counter()
        self.live: dict[int, object] = {}
        self.flows_admitted = 0
        self.flows_rejected = 0
        self.series: dict[str, list[tuple[float, float]]] = {}

    def data_sent(self, packet) -> None:
        if packet.uid in self.live:
            raise ConservationError(f"packet {packet.uid} sent twice")
        self.sent += 1
        self.live[packet.uid] = packet

    def data_delivered(self, packet, delay: float) -> None:
        if self.live.pop(packet.uid, None) is None:
            raise ConservationError(f"packet {packet.uid} delivered but not live")
        self.delivered += 1
        self.delivered_bits += packet.bits
        self.delay_sum += delay
        self.delays_n += 1

    def data_dropped(self, packet, cause: str) -> None:
        if self.live.pop(packet.uid, None) is None:
            raise ConservationError(f"packet {packet.uid} dropped but not live")
        self.dropped += 1
        self.drop_causes[cause] += 1

    def control_packet(self, kind: str) -> None:
        self.control[kind] += 1

    @property
    def control_pkts(self) -> int:
        if self.count_hello:
            return sum(self.control.values())
        return sum(v for k, v in self.control.items() if k != "hello")

    def sample(self, label: str, t: float, value: float) -> None:
        series = self.series.setdefault(label, [])
        if series and t <= series[-1][0]:
            raise ValueError(f"time series {label!r} must be strictly increasing in t")
        series.append((t, value))

    def pdr(self) -> float:
        return self.delivered / self.sent if self.sent else 0.0

    def finalize(self, *, scenario_id: str, protocol: str, seed: int, nodes: int, pause: float,
                 sim_time: float, energies: list, trace_digest: str = "",
                 extra_checks=()) -> MetricsReport:
        in_flight = len(self.live)
        if self.sent != self.delivered + self.dropped + in_flight:
            raise ConservationError(
                f"sent={self.sent} != delivered={self.delivered} + dropped={self.dropped}"
                f" + in_flight={in_flight}")
        for check in extra_checks:
            check()
        for i, e in enumerate(energies):
            if e.ledger_error() > 1e-9:
                raise ConservationError(f"energy ledger of node {i} does not balance")
            if e.residual < 0:
                raise ConservationError(f"node {i} has negative residual energy")
        pdr = self.pdr()
        if not 0.0 <= pdr <= 1.0:
            raise ConservationError(f"pdr {pdr} outside [0, 1]")
        avg_energy = sum(e.consumed for e in energies) / len(energies) if energies else 0.0
        control = self.control_pkts
        return MetricsReport(
            scenario_id=scenario_id, protocol=protocol, seed=seed, nodes=nodes, pause=pause,
            sim_time=sim_time, sent=self.sent, delivered=self.delivered, dropped=self.dropped,
            in_flight=in_flight, control_pkts=control, pdr=pdr, pdr_defined=self.sent > 0,
            avg_delay_s=self.delay_sum / self.delays_n if self.delays_n else None,
            throughput_pkts=self.delivered,
            throughput_bps=self.delivered_bits / sim_time if sim_time > 0 else 0.0,
            avg_energy_j=avg_energy,
            control_overhead=control / self.delivered if self.delivered else None,
            flows_admitted=self.flows_admitted, flows_rejected=self.flows_rejected,
            drop_causes=MappingProxyType(dict(sorted(self.drop_causes.items()))),
            control_by_type=MappingProxyType(dict(sorted(self.control.items()))),
            trace_digest=trace_digest,
        )


def render_csv(reports, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for report in reports:
        row = report.row() if isinstance(report, MetricsReport) else report
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(reports, path, columns=CSV_COLUMNS) -> str:
    text = render_csv(list(reports), columns)
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_series(series: dict[str, list[tuple[float, float]]], directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for label, samples in sorted(series.items()):
        path = os.path.join(directory, f"{label}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("t_s", "value"))
            for t, v in samples:
                writer.writerow((fmt(float(t)), fmt(float(v))))
        paths.append(path)
    return paths
