"""On-demand distance-vector routing with signal-strength link filtering and
per-next-hop minimum transmit power caching."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .engine import EventKind, to_ns
from .mac import BROADCAST

# absorbs float rounding so a closed loop lands at, not just below, the threshold
_ROUNDING_GUARD_DB = 1e-9


class LinkDecision(enum.Enum):
    ACCEPT = "accept"
    DISCARD = "discard"


def link_quality_filter(p_rx: float, rss_accept_threshold: float | None) -> LinkDecision:
    if rss_accept_threshold is None or p_rx >= rss_accept_threshold:
        return LinkDecision.ACCEPT
    return LinkDecision.DISCARD


class PathLossAnomalies:
    count = 0


def path_loss(p_tx: float, p_rx: float) -> float:
    """Link loss in dB from the advertised transmit power and the measured arrival power."""
    loss = p_tx - p_rx
    if loss < 0:
        PathLossAnomalies.count += 1
        return 0.0
    return loss


def min_tx_power(path_loss_db: float, r_th: float, k: float = 1.0,
                 min_power: float = float("-inf"), max_power: float = float("inf")) -> float:
    if path_loss_db < 0:
        raise ValueError("path loss must be non-negative")
    if k < 1:
        raise ValueError("k must be at least 1")
    p = k * (path_loss_db + r_th) + _ROUNDING_GUARD_DB
    return min(max(p, min_power), max_power)


@dataclass
class AodvParams:
    active_route_timeout: float = 3.0
    net_traversal_time: float = 2.8
    rreq_retries: int = 2
    ttl: int = 35
    buffer_limit: int = 64
    rreq_jitter: float = 0.01
    buffer_timeout: float = 30.0


@dataclass
class RouteEntry:
    destination: int
    next_hop: int
    hop_count: int
    dest_seq_no: int
    expiry: float
    p_tmin: float | None = None
    valid: bool = True
    precursors: set = field(default_factory=set)


@dataclass
class RreqRecord:
    origin: int
    rreq_id: int
    first_seen: float


# packet payloads --------------------------------------------------------

class RouteRequest:
    __slots__ = ("origin", "rreq_id", "destination", "origin_seq", "dest_seq", "hop_count", "ttl")
    bits = 352

    def __init__(self, origin, rreq_id, destination, origin_seq, dest_seq, hop_count, ttl):
        self.origin = origin
        self.rreq_id = rreq_id
        self.destination = destination
        self.origin_seq = origin_seq
        self.dest_seq = dest_seq
        self.hop_count = hop_count
        self.ttl = ttl


class RouteReply:
    __slots__ = ("origin", "destination", "dest_seq", "hop_count")
    bits = 320

    def __init__(self, origin, destination, dest_seq, hop_count):
        self.origin = origin
        self.destination = destination
        self.dest_seq = dest_seq
        self.hop_count = hop_count


class RouteError:
    __slots__ = ("unreachable",)

    def __init__(self, unreachable):
        self.unreachable = unreachable

    @property
    def bits(self):
        return 256 + 64 * len(self.unreachable)


class _Discovery:
    __slots__ = ("destination", "attempts", "timer")

    def __init__(self, destination):
        self.destination = destination
        self.attempts = 0
        self.timer = None


class Aodv:
    """Routing agent of one node.

    ``node`` supplies the cross-layer hooks: ``mac`` (a Dcf), ``send_control``
    bookkeeping through ``node.count_control``, data-plane callbacks
    ``deliver_local``/``drop_packet``/``forwarding_hook`` and the feature flags.
    """

    def __init__(self, node, params: AodvParams, rx_threshold: float, k: float = 1.0,
                 rss_accept_threshold: float | None = None, power_control: bool = False,
                 min_power: float = float("-inf"), max_power: float = float("inf")):
        self.node = node
        self.me = node.node_id
        self.engine = node.engine
        self.params = params
        self.rx_threshold = rx_threshold
        self.k = k
        self.rss_accept_threshold = rss_accept_threshold
        self.power_control = power_control
        self.min_power = min_power
        self.max_power = max_power
        self.rng = node.engine.stream("routing")
        self.table: dict[int, RouteEntry] = {}
        self.seq_no = 0
        self.rreq_id = 0
        self.seen: dict[tuple[int, int], RreqRecord] = {}
        self.buffer: dict[int, list] = {}
        self.discoveries: dict[int, _Discovery] = {}
        self.filtered = 0
        self.rrep_dropped = 0
        self.rerr_sent = 0

    # route table ---------------------------------------------------------

    def now(self) -> float:
        return self.engine.now_ns / 1e9

    def lookup(self, destination: int) -> RouteEntry | None:
        entry = self.table.get(destination)
        if entry is None or not entry.valid:
            return None
        if entry.expiry < self.now():
            entry.valid = False
            return None
        return entry

    def _refresh(self, entry: RouteEntry) -> None:
        entry.expiry = max(entry.expiry, self.now() + self.params.active_route_timeout)

    def _update_route(self, destination, next_hop, hop_count, seq, p_tmin=None,
                      lifetime=None) -> RouteEntry:
        lifetime = self.params.active_route_timeout if lifetime is None else lifetime
        expiry = self.now() + lifetime
        entry = self.table.get(destination)
        if entry is None:
            entry = RouteEntry(destination, next_hop, hop_count, seq, expiry, p_tmin)
            self.table[destination] = entry
            return entry
        fresher = seq > entry.dest_seq_no
        better = seq == entry.dest_seq_no and (hop_count < entry.hop_count or not entry.valid)
        if fresher or better or not entry.valid:
            if entry.next_hop != next_hop:
                entry.precursors = set()
            entry.next_hop = next_hop
            entry.hop_count = hop_count
            entry.dest_seq_no = max(seq, entry.dest_seq_no)
            entry.expiry = expiry
            entry.valid = True
            entry.p_tmin = p_tmin
        elif entry.next_hop == next_hop:
            entry.expiry = max(entry.expiry, expiry)
            if p_tmin is not None:
                entry.p_tmin = p_tmin
        return entry

    # link budget ---------------------------------------------------------

    def accepts(self, p_rx: float) -> bool:
        return link_quality_filter(p_rx, self.rss_accept_threshold) is LinkDecision.ACCEPT

    def p_tmin_for(self, tx_power_field: float, p_rx: float) -> float:
        return min_tx_power(path_loss(tx_power_field, p_rx), self.rx_threshold, self.k,
                            self.min_power, self.max_power)

    # sending -------------------------------------------------------------

    def send(self, packet, control: bool = False) -> None:
        """Route a unicast packet (data or routed control) originated here."""
        entry = self.lookup(packet.destination)
        if entry is not None:
            self._forward_via(packet, entry, control)
            return
        self._buffer(packet, control)

    def _buffer(self, packet, control: bool) -> None:
        queue = self.buffer.setdefault(packet.destination, [])
        if len(queue) >= self.params.buffer_limit:
            self.node.drop_packet(packet, "buffer-full")
        else:
            queue.append((packet, control, self.now()))
        self._discover(packet.destination)

    def _forward_via(self, packet, entry: RouteEntry, control: bool) -> None:
        self._refresh(entry)
        nh = self.table.get(entry.next_hop)
        if nh is not None and nh.valid:
            self._refresh(nh)
        self.node.unicast(packet, entry.next_hop, packet.bits, entry.p_tmin, control)

    def _discover(self, destination: int) -> None:
        if destination in self.discoveries:
            return
        disc = _Discovery(destination)
        self.discoveries[destination] = disc
        self._flood(disc)

    def _flood(self, disc: _Discovery) -> None:
        disc.attempts += 1
        self.rreq_id += 1
        self.seq_no += 1
        known = self.table.get(disc.destination)
        req = RouteRequest(self.me, self.rreq_id, disc.destination, self.seq_no,
                           known.dest_seq_no if known else 0, 0, self.params.ttl)
        self.seen[(self.me, self.rreq_id)] = RreqRecord(self.me, self.rreq_id, self.now())
        self.node.broadcast(req, req.bits)
        wait = self.params.net_traversal_time * (2 ** (disc.attempts - 1))
        disc.timer = self.engine.after_ns(to_ns(wait), EventKind.TIMER_EXPIRY,
                                          self._discovery_timeout, disc)

    def _discovery_timeout(self, disc: _Discovery) -> None:
        if self.discoveries.get(disc.destination) is not disc:
            return
        if self.lookup(disc.destination) is not None:
            self._route_found(disc.destination)
            return
        if disc.attempts <= self.params.rreq_retries:
            self._flood(disc)
            return
        del self.discoveries[disc.destination]
        for packet, control, _ in self.buffer.pop(disc.destination, []):
            self.node.drop_packet(packet, "no-route")

    def _route_found(self, destination: int) -> None:
        disc = self.discoveries.pop(destination, None)
        if disc is not None and disc.timer is not None:
            disc.timer.cancel()
        pending = self.buffer.pop(destination, [])
        entry = self.lookup(destination)
        for packet, control, _ in pending:
            if entry is None:
                self.node.drop_packet(packet, "no-route")
            else:
                self._forward_via(packet, entry, control)

    # receiving -----------------------------------------------------------

    def on_control(self, payload, sender: int, p_rx: float, tx_power: float) -> None:
        if isinstance(payload, RouteRequest):
            if not self.accepts(p_rx):
                self.filtered += 1
                return
            self._on_rreq(payload, sender)
        elif isinstance(payload, RouteReply):
            if not self.accepts(p_rx):
                self.filtered += 1
                return
            self._on_rrep(payload, sender, p_rx, tx_power)
        elif isinstance(payload, RouteError):
            self._on_rerr(payload, sender)

    def _on_rreq(self, req: RouteRequest, sender: int) -> None:
        key = (req.origin, req.rreq_id)
        if key in self.seen or req.origin == self.me:
            return
        now = self.now()
        self.seen[key] = RreqRecord(req.origin, req.rreq_id, now)
        if len(self.seen) > 4096:
            horizon = now - 2 * self.params.net_traversal_time
            self.seen = {k: r for k, r in self.seen.items() if r.first_seen >= horizon}
        hops = req.hop_count + 1
        self._update_route(req.origin, sender, hops, req.origin_seq)
        if sender != req.origin:
            self._update_route(sender, sender, 1, self.table[sender].dest_seq_no
                               if sender in self.table else 0)
        if req.destination == self.me:
            self.seq_no = max(self.seq_no, req.dest_seq) + 1
            rep = RouteReply(req.origin, self.me, self.seq_no, 0)
            self._send_rrep(rep)
            return
        if req.ttl <= 1:
            return
        fwd = RouteRequest(req.origin, req.rreq_id, req.destination, req.origin_seq,
                           req.dest_seq, hops, req.ttl - 1)
        delay = to_ns(self.rng.uniform(0.0, self.params.rreq_jitter))
        self.engine.after_ns(delay, EventKind.TIMER_EXPIRY, self.node.broadcast, fwd, fwd.bits)

    def _send_rrep(self, rep: RouteReply) -> None:
        back = self.lookup(rep.origin)
        if back is None:
            self.rrep_dropped += 1
            return
        self._refresh(back)
        self.node.unicast(rep, back.next_hop, rep.bits, back.p_tmin, True)

    def _on_rrep(self, rep: RouteReply, sender: int, p_rx: float, tx_power: float) -> None:
        hops = rep.hop_count + 1
        p_tmin = self.p_tmin_for(tx_power, p_rx) if self.power_control else None
        self._update_route(rep.destination, sender, hops, rep.dest_seq, p_tmin)
        if sender != rep.destination:
            link = self.table.get(sender)
            self._update_route(sender, sender, 1, link.dest_seq_no if link else 0, p_tmin)
        if rep.origin == self.me:
            self._route_found(rep.destination)
            return
        fwd = RouteReply(rep.origin, rep.destination, rep.dest_seq, hops)
        back = self.lookup(rep.origin)
        entry = self.table[rep.destination]
        if back is not None:
            entry.precursors.add(back.next_hop)
        self._send_rrep(fwd)

    def _on_rerr(self, err: RouteError, sender: int) -> None:
        lost = []
        for dest, seq in err.unreachable:
            entry = self.table.get(dest)
            if entry is not None and entry.valid and entry.next_hop == sender:
                entry.valid = False
                entry.dest_seq_no = max(entry.dest_seq_no, seq)
                if entry.precursors:
                    lost.append((dest, entry.dest_seq_no))
        if lost:
            self._emit_rerr(lost)

    def _emit_rerr(self, lost) -> None:
        self.rerr_sent += 1
        err = RouteError(lost)
        self.node.broadcast(err, err.bits)

    # data plane ----------------------------------------------------------

    def on_routed(self, packet, prev_hop: int, control: bool) -> None:
        """A unicast routed packet arrived from ``prev_hop``."""
        back = self.table.get(packet.source)
        if back is not None and back.valid and back.next_hop == prev_hop:
            self._refresh(back)
        link = self.table.get(prev_hop)
        if link is not None and link.valid:
            self._refresh(link)
        if packet.destination == self.me:
            self.node.deliver_local(packet)
            return
        packet.hops += 1
        if packet.hops >= self.params.ttl:
            self.node.drop_packet(packet, "ttl")
            return
        self.node.forwarding_hook(packet)
        entry = self.lookup(packet.destination)
        if entry is None:
            self.node.drop_packet(packet, "no-route")
            self._emit_rerr([(packet.destination, self.table[packet.destination].dest_seq_no
                              if packet.destination in self.table else 0)])
            return
        entry.precursors.add(prev_hop)
        self._forward_via(packet, entry, control)

    def handle_link_break(self, next_hop: int) -> list[int]:
        """Invalidate routes through ``next_hop``; returns destinations that became unreachable."""
        broken = []
        lost = []
        for dest, entry in self.table.items():
            if entry.valid and entry.next_hop == next_hop:
                entry.valid = False
                entry.dest_seq_no += 1
                broken.append(dest)
                if entry.precursors:
                    lost.append((dest, entry.dest_seq_no))
        if lost:
            self._emit_rerr(lost)
        return broken

    def pending_packets(self):
        for queue in self.buffer.values():
            for packet, control, _ in queue:
                yield packet

    def drain(self):
        out = [p for p in self.pending_packets()]
        self.buffer.clear()
        for disc in self.discoveries.values():
            if disc.timer is not None:
                disc.timer.cancel()
        self.discoveries.clear()
        return out


class RoutingLoop(RuntimeError):
    pass


def walk_route(tables: dict[int, dict[int, RouteEntry]], source: int, destination: int,
               now: float) -> list[int] | None:
    """Follow valid next hops from ``source``. Returns the path, or None where it breaks off.

    Raises RoutingLoop if the chain revisits a node.
    """
    path = [source]
    node = source
    seen = {source}
    while node != destination:
        entry = tables[node].get(destination)
        if entry is None or not entry.valid or entry.expiry < now:
            return None
        node = entry.next_hop
        if node in seen:
            raise RoutingLoop(f"loop toward {destination}: {path + [node]}")
        seen.add(node)
        path.append(node)
    return path
