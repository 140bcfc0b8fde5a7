"""Simulation assembly: nodes with PHY, MAC, routing and cross-layer control."""

from __future__ import annotations

import itertools
import logging

from .channel import Medium, Radio
from .control import (Admission, BandwidthBook, CongestionNotice, CongestionParams, FbwMode,
                      FlowRequest, Probe, adjust_rate, admit_flow, feasible_bandwidth,
                      probe_decision, split_delta)
from .engine import Engine, EventKind, to_ns
from .mac import (BROADCAST, Dcf, HelloPayload, MacTiming, NeighborTable, Outgoing)
from .metrics import MetricsCollector, MetricsReport
from .mobility import CbrFlow, FlowState, RandomWaypoint
from .radio import SPEED_OF_LIGHT, EnergyState, RadioParams, watts_to_dbm
from .routing import Aodv, AodvParams, RouteError, RouteReply, RouteRequest
from .scenario import FlowSpec, ScenarioConfig

log = logging.getLogger(__name__)

HELLO_BASE_BITS = 256
HELLO_ENTRY_BITS = 96


class DataPacket:
    __slots__ = ("uid", "flow_id", "source", "destination", "bits", "created_ns", "holder", "hops")

    def __init__(self, uid, flow_id, source, destination, bits, created_ns):
        self.uid = uid
        self.flow_id = flow_id
        self.source = source
        self.destination = destination
        self.bits = bits
        self.created_ns = created_ns
        self.holder = source
        self.hops = 0


def control_kind(payload) -> str:
    if isinstance(payload, HelloPayload):
        return "hello"
    if isinstance(payload, RouteRequest):
        return "rreq"
    if isinstance(payload, RouteReply):
        return "rrep"
    if isinstance(payload, RouteError):
        return "rerr"
    if isinstance(payload, Probe):
        return "probe"
    if isinstance(payload, CongestionNotice):
        return "notice"
    raise TypeError(f"not a control packet: {payload!r}")


class Node:
    def __init__(self, sim: "Simulation", node_id: int):
        self.sim = sim
        self.node_id = node_id
        self.engine = sim.engine
        cfg = sim.cfg
        feats = sim.features
        self.features = feats
        self.energy = EnergyState(cfg.energy.initial_j, cfg.energy.rx_w, cfg.energy.idle_w,
                                  cfg.energy.tx_w, cfg.radio.max_power_w)
        self.radio = Radio(node_id, sim.radio_params, self.energy, sim.engine)
        self.radio.on_death = self.die
        self.mac: Dcf | None = None
        rp = sim.radio_params
        rss = rp.rx_threshold_dbm + cfg.mcba.rss_margin_db if feats["link_filter"] else None
        self.routing = Aodv(self, sim.aodv_params, rp.rx_threshold_dbm, cfg.mcba.k, rss,
                            feats["power_control"], rp.min_power_dbm, rp.max_power_dbm)
        self.neighbors = NeighborTable(node_id, 2 * cfg.aodv.hello_interval_s)
        mode = FbwMode(cfg.mcba.fbw_mode)
        self.book = BandwidthBook(cfg.radio.channel_rate_bps, cfg.mcba.weight, mode=mode)
        self.flows: dict[int, CbrFlow] = {}
        self.window_load: dict[int, int] = {}
        self.window_sources: dict[int, int] = {}
        self.last_tx_bits = 0
        self.probes: dict[int, object] = {}
        self.dead = False

    # MAC-facing ----------------------------------------------------------

    def unicast(self, payload, next_hop: int, bits: int, p_tmin, control: bool) -> bool:
        if self.dead:
            if not control:
                self.drop_packet(payload, "node-dead")
            return False
        ok = self.mac.enqueue(Outgoing(payload, next_hop, bits, p_tmin, control))
        if not ok:
            if not control:
                self.drop_packet(payload, "queue-full")
            return False
        if control:
            self.sim.metrics.control_packet(control_kind(payload))
        else:
            self.window_load[payload.flow_id] = self.window_load.get(payload.flow_id, 0) + bits
            self.window_sources[payload.flow_id] = payload.source
        return True

    def broadcast(self, payload, bits: int) -> bool:
        if self.dead:
            return False
        ok = self.mac.enqueue(Outgoing(payload, BROADCAST, bits, None, True))
        if ok:
            self.sim.metrics.control_packet(control_kind(payload))
        return ok

    def on_mac_receive(self, payload, src: int, p_rx: float, frame) -> None:
        if self.dead:
            return
        if isinstance(payload, HelloPayload):
            self.neighbors.process_hello(payload)
        elif isinstance(payload, (RouteRequest, RouteReply, RouteError)):
            self.routing.on_control(payload, src, p_rx, frame.tx_power_dbm)
        elif isinstance(payload, DataPacket):
            payload.holder = self.node_id
            self.routing.on_routed(payload, src, False)
        else:
            self.routing.on_routed(payload, src, True)

    def on_mac_success(self, out: Outgoing) -> None:
        pass

    def on_mac_failure(self, out: Outgoing) -> None:
        if self.dead:
            return
        next_hop = out.dst
        self.sim.link_breaks += 1
        self.routing.handle_link_break(next_hop)
        stranded = [out] + self.mac.remove_where(lambda o: o.dst == next_hop)
        for item in stranded:
            self._salvage(item.payload)

    def _salvage(self, payload) -> None:
        if isinstance(payload, DataPacket):
            if payload.holder != self.node_id:
                return
            if payload.source == self.node_id:
                self.routing.send(payload)
            else:
                self.drop_packet(payload, "link-break")
        elif isinstance(payload, (Probe, CongestionNotice)) and payload.source == self.node_id:
            self.routing.send(payload, control=True)

    # routing-facing -----------------------------------------------------

    def deliver_local(self, packet) -> None:
        now_ns = self.engine.now_ns
        if isinstance(packet, DataPacket):
            self.sim.metrics.data_delivered(packet, (now_ns - packet.created_ns) / 1e9)
        elif isinstance(packet, Probe):
            self._probe_arrived(packet)
        elif isinstance(packet, CongestionNotice):
            flow = self.flows.get(packet.flow_id)
            if flow is not None:
                self._apply_feedback(flow, packet.delta)

    def drop_packet(self, packet, cause: str) -> None:
        if isinstance(packet, DataPacket):
            self.sim.metrics.data_dropped(packet, cause)

    def forwarding_hook(self, packet) -> None:
        if isinstance(packet, Probe) and not packet.returning:
            packet.min_fbw = min(packet.min_fbw, self.feasible_bw())

    # energy -------------------------------------------------------------

    def die(self) -> None:
        if self.dead:
            return
        self.dead = True
        self.sim.deaths += 1
        stranded = [o.payload for o in self.mac.drain()] if self.mac else []
        stranded += self.routing.drain()
        for payload in stranded:
            if isinstance(payload, DataPacket) and payload.holder == self.node_id:
                self.drop_packet(payload, "node-dead")
        for flow in self.flows.values():
            if flow.state is FlowState.ACTIVE:
                flow.state = FlowState.DONE
                self.book.release(flow.flow_id)

    # hello / bandwidth --------------------------------------------------

    def hello(self) -> None:
        if self.dead or not self.radio.check_energy():
            return
        interval = self.sim.cfg.aodv.hello_interval_s
        now = self.engine.now
        sent = self.radio.tx_bits - self.last_tx_bits
        self.last_tx_bits = self.radio.tx_bits
        self.book.own_measured = sent / interval
        payload = self.neighbors.build_hello(self.book.own_consumed, now,
                                             self.features["admission_control"])
        self.broadcast(payload, payload.size_bits(HELLO_BASE_BITS, HELLO_ENTRY_BITS))
        jitter = self.sim.hello_rng.uniform(-0.05, 0.05) * interval
        self.engine.after_ns(to_ns(interval + jitter), EventKind.HELLO_DUE, self.hello)

    def feasible_bw(self) -> float:
        self.book.neighbor_consumed = self.neighbors.consumed_by_others(self.engine.now)
        return feasible_bandwidth(self.book)

    # traffic ------------------------------------------------------------

    def start_flow(self, flow: CbrFlow) -> None:
        if self.dead:
            flow.state = FlowState.DONE
            return
        if not self.features["admission_control"]:
            self._activate(flow)
            return
        mcba = self.sim.cfg.mcba
        chbw = self.sim.cfg.radio.channel_rate_bps
        request = FlowRequest(flow.flow_id, flow.source, flow.destination, flow.required_bw)
        decision = admit_flow(request, self.feasible_bw(), mcba.min_bw_frac * chbw,
                              mcba.max_bw_frac * chbw)
        self.sim.admission_log.append((flow.flow_id, decision.value))
        if decision is Admission.ADMIT:
            self._activate(flow)
        elif decision is Admission.REJECT:
            self._reject(flow)
        else:
            self._send_probe(flow)

    def _activate(self, flow: CbrFlow) -> None:
        flow.state = FlowState.ACTIVE
        self.book.reserve(flow.flow_id, flow.required_bw)
        self.sim.metrics.flows_admitted += 1
        self.emit_cbr(flow)

    def _reject(self, flow: CbrFlow) -> None:
        flow.state = FlowState.REJECTED
        self.sim.metrics.flows_rejected += 1

    def _send_probe(self, flow: CbrFlow) -> None:
        probe = Probe(flow.flow_id, self.node_id, flow.destination, flow.required_bw,
                      self.feasible_bw())
        timeout = self.sim.probe_timeout
        timer = self.engine.after_ns(to_ns(timeout), EventKind.TIMER_EXPIRY,
                                     self._probe_timeout, flow)
        self.probes[flow.flow_id] = timer
        self.routing.send(probe, control=True)

    def _probe_timeout(self, flow: CbrFlow) -> None:
        if self.probes.pop(flow.flow_id, None) is None:
            return
        self.sim.probe_results.append((flow.flow_id, None))
        self._reject(flow)

    def _probe_arrived(self, probe: Probe) -> None:
        if not probe.returning:
            bottleneck = min(probe.min_fbw, self.feasible_bw())
            reply = Probe(probe.flow_id, self.node_id, probe.source, probe.required_bw,
                          bottleneck, returning=True)
            self.routing.send(reply, control=True)
            return
        timer = self.probes.pop(probe.flow_id, None)
        if timer is None:
            return
        timer.cancel()
        flow = self.flows[probe.flow_id]
        self.sim.probe_results.append((flow.flow_id, probe.min_fbw))
        if probe_decision(probe.min_fbw, flow.required_bw) is Admission.ADMIT:
            self._activate(flow)
        else:
            self._reject(flow)

    def emit_cbr(self, flow: CbrFlow) -> None:
        if flow.state is not FlowState.ACTIVE:
            return
        now_ns = self.engine.now_ns
        if self.dead or (flow.stop is not None and now_ns >= to_ns(flow.stop)):
            if flow.state is FlowState.ACTIVE:
                flow.state = FlowState.DONE
                self.book.release(flow.flow_id)
            return
        packet = DataPacket(next(self.sim.uids), flow.flow_id, self.node_id, flow.destination,
                            flow.packet_bits, now_ns)
        flow.packets_sent += 1
        self.sim.metrics.data_sent(packet)
        self.routing.send(packet)
        self.engine.after_ns(to_ns(flow.interval), EventKind.TRAFFIC_SEND, self.emit_cbr, flow)

    # congestion control -------------------------------------------------

    def close_window(self) -> None:
        if self.dead:
            return
        params = self.sim.congestion
        now = self.engine.now
        oh = self.mac.measure_window(now)
        loads = {fid: bits / params.window for fid, bits in self.window_load.items()}
        sources = self.window_sources
        self.window_load = {}
        self.window_sources = {}
        rates = {fid: self.flows[fid].rate for fid in loads if fid in self.flows}
        deltas = split_delta(loads, oh, params.t_rh, rates)
        for fid in sorted(deltas):
            delta = deltas[fid]
            if fid in self.flows:
                self._apply_feedback(self.flows[fid], delta)
            elif delta < 0 and abs(delta) >= params.hysteresis * loads[fid]:
                notice = CongestionNotice(fid, self.node_id, sources[fid], delta)
                self.sim.notices_sent += 1
                self.routing.send(notice, control=True)
        self.engine.after_ns(to_ns(params.window), EventKind.TIMER_EXPIRY, self.close_window)

    def _apply_feedback(self, flow: CbrFlow, delta: float) -> None:
        params = self.sim.congestion
        if flow.state is not FlowState.ACTIVE:
            return
        if abs(delta) < params.hysteresis * flow.rate:
            return
        flow.set_rate(adjust_rate(flow.rate, delta, flow.rt_min, flow.rt_max), self.engine.now)


class Simulation:
    """One independent simulation instance built from a scenario."""

    def __init__(self, cfg: ScenarioConfig, trace: bool = True):
        self.cfg = cfg
        self.features = cfg.features()
        self.engine = Engine(cfg.scenario.seed, trace=trace)
        r = cfg.radio
        wavelength = r.wavelength_m if r.wavelength_m is not None else SPEED_OF_LIGHT / r.frequency_hz
        self.radio_params = RadioParams(
            wavelength=wavelength, tx_gain=r.tx_gain, rx_gain=r.rx_gain,
            max_power_dbm=watts_to_dbm(r.max_power_w), min_power_dbm=r.min_power_dbm,
            channel_rate=r.channel_rate_bps, range_m=r.range_m, cs_range_m=r.cs_range_m,
            rx_threshold_dbm=r.rx_threshold_dbm, cs_threshold_dbm=r.cs_threshold_dbm)
        m = cfg.mac
        self.timing = MacTiming(
            t_sifs=m.sifs_us * 1e-6, t_difs=m.difs_us * 1e-6, slot=m.slot_us * 1e-6,
            cw_min=m.cw_min, cw_max=m.cw_max,
            control_rate=m.control_rate_bps or r.channel_rate_bps, rts_bits=m.rts_bits,
            cts_bits=m.cts_bits, ack_bits=m.ack_bits, header_bits=m.header_bits,
            retry_limit=m.retry_limit, queue_limit=m.queue_limit)
        a = cfg.aodv
        self.aodv_params = AodvParams(a.active_route_timeout_s, a.net_traversal_time_s,
                                      a.rreq_retries, a.ttl, a.buffer_limit)
        c = cfg.mcba
        self.congestion = CongestionParams(c.window_s, c.t_rh_s, c.rt_min_bps, None, c.hysteresis)
        self.probe_timeout = c.probe_timeout_s or 2 * a.net_traversal_time_s
        self.metrics = MetricsCollector(cfg.metrics.count_hello)
        self.uids = itertools.count(1)
        self.hello_rng = self.engine.stream("routing")
        self.link_breaks = 0
        self.deaths = 0
        self.notices_sent = 0
        self.admission_log: list = []
        self.probe_results: list = []

        n = cfg.scenario.nodes
        area = (cfg.scenario.area_x_m, cfg.scenario.area_y_m)
        topo = self.engine.stream("topology")
        positions = cfg.positions or [(topo.uniform(0, area[0]), topo.uniform(0, area[1]))
                                      for _ in range(n)]
        mob = cfg.mobility
        speed_range = None
        if mob.speed_min_mps is not None:
            speed_range = (mob.speed_min_mps, mob.speed_max_mps)
        self.mobility = RandomWaypoint(n, area, mob.speed_mps, mob.pause_s,
                                       self.engine.stream("mobility"), positions, speed_range)
        self.nodes = [Node(self, i) for i in range(n)]
        self.medium = Medium(self.engine, self.radio_params, self.mobility,
                             [node.radio for node in self.nodes])
        backoff = self.engine.stream("mac-backoff")
        for node in self.nodes:
            node.mac = Dcf(node.node_id, self.engine, self.medium, node.radio, self.timing,
                           backoff, self.radio_params.max_power_dbm,
                           self.features["power_control"], c.rts_at_max_power, owner=node)
        self.flows = self._build_flows()
        self._started = False
        self.report: MetricsReport | None = None

    def _build_flows(self) -> list[CbrFlow]:
        cfg = self.cfg
        traffic = self.engine.stream("traffic")
        specs = list(cfg.flows)
        flows = []
        t = cfg.traffic
        for _ in range(t.random_flows):
            src = traffic.randrange(cfg.scenario.nodes)
            dst = traffic.randrange(cfg.scenario.nodes - 1)
            if dst >= src:
                dst += 1
            start = traffic.uniform(t.start_min_s, t.start_max_s)
            specs.append(FlowSpec(src, dst, t.rate_bps, t.rbw_bps, t.packet_bytes, start))
        for fid, spec in enumerate(specs, start=1):
            rbw = spec.rbw_bps if spec.rbw_bps is not None else spec.rate_bps
            flow = CbrFlow(fid, spec.source, spec.destination, spec.packet_bytes * 8,
                           spec.rate_bps, rbw, spec.start_s, spec.stop_s,
                           rt_min=cfg.mcba.rt_min_bps)
            flows.append(flow)
            self.nodes[spec.source].flows[fid] = flow
        return flows

    def _start(self) -> None:
        engine = self.engine
        cfg = self.cfg
        if cfg.mobility.model == "random-waypoint":
            for i in range(len(self.nodes)):
                self._next_leg(i)
        interval = cfg.aodv.hello_interval_s
        for node in self.nodes:
            engine.schedule(self.hello_rng.uniform(0, interval), EventKind.HELLO_DUE, node.hello)
        if self.features["congestion_control"]:
            for node in self.nodes:
                engine.schedule(self.congestion.window, EventKind.TIMER_EXPIRY, node.close_window)
        for flow in self.flows:
            engine.schedule(flow.start, EventKind.TRAFFIC_SEND, self.nodes[flow.source].start_flow,
                            flow)
        if cfg.metrics.sample_interval_s > 0:
            engine.schedule(cfg.metrics.sample_interval_s, EventKind.METRIC_SAMPLE, self._sample)
        self._started = True

    def _next_leg(self, i: int) -> None:
        now = self.engine.now
        state = self.mobility.next_waypoint(i, now)
        self.engine.schedule(state.pause_until, EventKind.WAYPOINT_REACHED, self._next_leg, i)

    def _sample(self) -> None:
        m = self.metrics
        t = self.engine.now
        m.sample("pdr", t, m.pdr())
        m.sample("delivered", t, m.delivered)
        m.sample("dropped", t, m.dropped)
        m.sample("control_pkts", t, m.control_pkts)
        energies = [n.energy for n in self.nodes]
        for node in self.nodes:
            node.radio.check_energy()
        m.sample("avg_energy_j", t, sum(e.consumed for e in energies) / len(energies))
        self.engine.after_ns(to_ns(self.cfg.metrics.sample_interval_s), EventKind.METRIC_SAMPLE,
                             self._sample)

    def advance(self, until: float) -> None:
        """Run up to `until` seconds without finalising; lets callers inject events mid-run."""
        if not self._started:
            self._start()
        self.engine.run_until(min(until, self.cfg.scenario.sim_time_s))

    def run(self) -> MetricsReport:
        if self.report is not None:
            return self.report
        if not self._started:
            self._start()
        end = self.cfg.scenario.sim_time_s
        self.engine.run_until(end)
        for node in self.nodes:
            node.radio.check_energy()
        self.report = self.finalize()
        return self.report

    def _check_positions(self) -> None:
        self.mobility.assert_in_bounds(self.engine.now)

    def finalize(self) -> MetricsReport:
        s = self.cfg.scenario
        return self.metrics.finalize(
            scenario_id=s.id, protocol=s.protocol, seed=s.seed, nodes=s.nodes,
            pause=self.cfg.mobility.pause_s, sim_time=s.sim_time_s,
            energies=[n.energy for n in self.nodes], trace_digest=self.engine.trace_digest(),
            extra_checks=(self._check_positions,))


def simulate(cfg: ScenarioConfig, trace: bool = True) -> MetricsReport:
    return Simulation(cfg, trace).run()
