"""Simplified IEEE 802.11 DCF with RTS/CTS/DATA/ACK, contention-overhead
measurement, transmit-power piggybacking and bandwidth-carrying Hellos."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .engine import Engine, EventKind, to_ns

BROADCAST = -1


@dataclass(frozen=True)
class MacTiming:
    t_sifs: float = 10e-6
    t_difs: float = 50e-6
    slot: float = 20e-6
    cw_min: int = 31
    cw_max: int = 1023
    control_rate: float = 2e6
    rts_bits: int = 160
    cts_bits: int = 112
    ack_bits: int = 112
    header_bits: int = 272
    retry_limit: int = 4
    queue_limit: int = 50

    def __post_init__(self):
        if not (self.t_difs > self.t_sifs > 0):
            raise ValueError("timing requires t_difs > t_sifs > 0")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be at least 1")

    @property
    def t_rts(self) -> float:
        return self.rts_bits / self.control_rate

    @property
    def t_cts(self) -> float:
        return self.cts_bits / self.control_rate


def channel_occupation(timing: MacTiming) -> float:
    """Channel time taken by one RTS/CTS exchange plus its three SIFS gaps."""
    return timing.rts_bits / timing.control_rate + timing.cts_bits / timing.control_rate \
        + 3 * timing.t_sifs


@dataclass
class ContentionWindowStats:
    window_start: float = 0.0
    t_acc_total: float = 0.0
    handshake_count: int = 0
    c_occ: float = 0.0
    oh_mac: float = 0.0


def measure_overhead(window: ContentionWindowStats, now: float | None = None,
                     window_length: float | None = None) -> float:
    """Close a measurement window and return its MAC overhead in seconds.

    Counters are reset and the next window starts at ``now`` (or at the end
    of the closed window).
    """
    if now is not None and window_length is not None and now < window.window_start + window_length:
        raise ValueError("measurement window is still open")
    oh = window.handshake_count * window.c_occ + window.t_acc_total
    window.oh_mac = oh
    window.handshake_count = 0
    window.t_acc_total = 0.0
    if now is not None:
        window.window_start = now
    elif window_length is not None:
        window.window_start += window_length
    return oh


@dataclass
class NeighborRecord:
    node: int
    consumed_bw: float
    timestamp: float
    via: int | None = None


@dataclass
class HelloPayload:
    origin: int
    own_consumed_bw: float
    own_timestamp: float
    neighbor_entries: list[tuple[int, float, float]] = field(default_factory=list)

    def size_bits(self, base_bits: int = 160, entry_bits: int = 96) -> int:
        return base_bits + entry_bits * len(self.neighbor_entries)


class NeighborTable:
    """One- and two-hop neighbour bandwidth state learnt from Hellos.

    An entry is only overwritten by information carrying a strictly newer
    timestamp. Entries whose timestamp is older than ``expiry`` seconds are
    ignored and left out of emitted Hellos.
    """

    def __init__(self, owner: int, expiry: float):
        self.owner = owner
        self.expiry = expiry
        self.one_hop: dict[int, NeighborRecord] = {}
        self.two_hop: dict[int, NeighborRecord] = {}

    def _fresh(self, rec: NeighborRecord, now: float) -> bool:
        return now - rec.timestamp <= self.expiry

    def process_hello(self, payload: HelloPayload) -> None:
        origin = payload.origin
        cur = self.one_hop.get(origin)
        if cur is None or payload.own_timestamp > cur.timestamp:
            self.one_hop[origin] = NeighborRecord(origin, payload.own_consumed_bw,
                                                  payload.own_timestamp)
        for nid, bw, ts in payload.neighbor_entries:
            if nid == self.owner:
                continue
            cur = self.two_hop.get(nid)
            if cur is None or ts > cur.timestamp:
                self.two_hop[nid] = NeighborRecord(nid, bw, ts, via=origin)

    def neighbors(self, now: float) -> list[NeighborRecord]:
        return sorted((r for r in self.one_hop.values() if self._fresh(r, now)),
                      key=lambda r: r.node)

    def build_hello(self, own_bw: float, now: float, with_bandwidth: bool = True) -> HelloPayload:
        entries = []
        if with_bandwidth:
            entries = [(r.node, r.consumed_bw, r.timestamp) for r in self.neighbors(now)]
        return HelloPayload(self.owner, own_bw, now, entries)

    def consumed_by_others(self, now: float) -> float:
        """Bandwidth consumed by fresh one- and two-hop neighbours, each counted once."""
        seen: dict[int, NeighborRecord] = {}
        for table in (self.one_hop, self.two_hop):
            for nid, rec in table.items():
                if nid == self.owner or not self._fresh(rec, now):
                    continue
                prev = seen.get(nid)
                if prev is None or rec.timestamp > prev.timestamp:
                    seen[nid] = rec
        return sum(r.consumed_bw for r in seen.values())


class FrameKind(enum.IntEnum):
    RTS = 0
    CTS = 1
    DATA = 2
    ACK = 3
    BCAST = 4


class Frame:
    __slots__ = ("kind", "src", "dst", "bits", "tx_power_dbm", "payload", "duration_ns", "seq",
                 "p_tmin_request")

    def __init__(self, kind, src, dst, bits, tx_power_dbm, payload=None, duration_ns=0, seq=0,
                 p_tmin_request=None):
        self.kind = kind
        self.src = src
        self.dst = dst
        self.bits = bits
        self.tx_power_dbm = tx_power_dbm
        self.payload = payload
        self.duration_ns = duration_ns
        self.seq = seq
        self.p_tmin_request = p_tmin_request

    def __repr__(self):
        return f"Frame({self.kind.name} {self.src}->{self.dst} {self.bits}b @{self.tx_power_dbm:.2f}dBm)"


class Outgoing:
    """A network-layer packet waiting at the MAC."""

    __slots__ = ("payload", "dst", "bits", "p_tmin", "control", "enqueued_ns")

    def __init__(self, payload, dst, bits, p_tmin=None, control=False, enqueued_ns=0):
        self.payload = payload
        self.dst = dst
        self.bits = bits
        self.p_tmin = p_tmin
        self.control = control
        self.enqueued_ns = enqueued_ns


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    COLLIDED = "collided"
    RETRIES_EXHAUSTED = "retries-exhausted"
    NO_CTS = "no-cts"


class _State(enum.IntEnum):
    IDLE = 0
    CONTEND = 1
    TX_RTS = 2
    WAIT_CTS = 3
    TX_DATA = 4
    WAIT_ACK = 5
    TX_BCAST = 6


class Dcf:
    """Per-node DCF state machine.

    The owning node must provide ``on_mac_receive(payload, src, p_rx, frame)``,
    ``on_mac_failure(outgoing)`` and ``on_mac_success(outgoing)``.
    """

    def __init__(self, node_id: int, engine: Engine, medium, radio, timing: MacTiming,
                 rng, max_power_dbm: float, power_control: bool = False,
                 rts_at_max_power: bool = False, owner=None):
        self.node_id = node_id
        self.engine = engine
        self.medium = medium
        self.radio = radio
        self.timing = timing
        self.rng = rng
        self.max_power = max_power_dbm
        self.power_control = power_control
        self.rts_at_max_power = rts_at_max_power
        self.owner = owner
        radio.mac = self

        self.sifs_ns = to_ns(timing.t_sifs)
        self.difs_ns = to_ns(timing.t_difs)
        self.slot_ns = to_ns(timing.slot)
        self.cts_ns = medium.airtime_ns(timing.cts_bits)
        self.ack_ns = medium.airtime_ns(timing.ack_bits)

        self.ctrl_q: deque[Outgoing] = deque()
        self.data_q: deque[Outgoing] = deque()
        self.hol: Outgoing | None = None
        self.state = _State.IDLE
        self.cw = timing.cw_min
        self.backoff: int | None = None
        self.attempts = 0
        self.attempt_start_ns = 0
        self.countdown_start_ns = 0
        self.access_event = None
        self.timeout_event = None
        self.response_event = None
        self.nav_until_ns = 0
        self.nav_event = None
        self.seq = 0
        self.last_seq: dict[int, int] = {}
        self.tx_power = max_power_dbm
        self.stats = ContentionWindowStats(c_occ=channel_occupation(timing))
        self.outcomes: list[Outcome] = []
        self.access_delays: list[float] = []
        self.keep_outcomes = False

    def measure_window(self, now: float) -> float:
        return measure_overhead(self.stats, now)

    # queue management -------------------------------------------------

    def __len__(self):
        return len(self.ctrl_q) + len(self.data_q) + (self.hol is not None)

    def enqueue(self, out: Outgoing) -> bool:
        if not self.radio.alive:
            return False
        if len(self.ctrl_q) + len(self.data_q) >= self.timing.queue_limit:
            return False
        out.enqueued_ns = self.engine.now_ns
        (self.ctrl_q if out.control else self.data_q).append(out)
        if self.hol is None:
            self._next()
        return True

    def remove_where(self, predicate) -> list[Outgoing]:
        """Pull queued (not head-of-line) packets matching ``predicate``."""
        removed = []
        for q in (self.ctrl_q, self.data_q):
            keep = deque()
            for out in q:
                (removed if predicate(out) else keep).append(out)
            q.clear()
            q.extend(keep)
        return removed

    def drain(self) -> list[Outgoing]:
        """Empty every queue including the head of line (used when the node dies)."""
        out = list(self.ctrl_q) + list(self.data_q)
        if self.hol is not None:
            out.insert(0, self.hol)
        self.ctrl_q.clear()
        self.data_q.clear()
        self.hol = None
        self.state = _State.IDLE
        for ev in (self.access_event, self.timeout_event, self.response_event, self.nav_event):
            if ev is not None:
                ev.cancel()
        self.access_event = self.timeout_event = self.response_event = self.nav_event = None
        return out

    def _next(self) -> None:
        if self.hol is not None or not self.radio.alive:
            return
        if self.ctrl_q:
            self.hol = self.ctrl_q.popleft()
        elif self.data_q:
            self.hol = self.data_q.popleft()
        else:
            self.state = _State.IDLE
            return
        self.attempts = 0
        self.cw = self.timing.cw_min
        self.seq += 1
        self._begin_attempt()

    def _begin_attempt(self) -> None:
        self.state = _State.CONTEND
        self.backoff = None
        self.attempt_start_ns = self.engine.now_ns
        self._try_access()

    # carrier sense and backoff -----------------------------------------

    def busy(self) -> bool:
        r = self.radio
        return r.transmitting or r.busy > 0 or self.nav_until_ns > self.engine.now_ns

    def _sensed_busy(self) -> bool:
        """Carrier state as seen at a slot boundary: energy that started this instant is
        not yet detectable."""
        r = self.radio
        now = self.engine.now_ns
        busy = r.busy - (r.fresh if r.fresh_ns == now else 0)
        return r.transmitting or busy > 0 or self.nav_until_ns > now

    def _try_access(self) -> None:
        if self.state != _State.CONTEND or self.access_event is not None:
            return
        if self.busy():
            return
        if self.backoff is None:
            self.backoff = self.rng.randint(0, self.cw)
        now = self.engine.now_ns
        self.countdown_start_ns = now
        fire = now + self.difs_ns + self.backoff * self.slot_ns
        self.access_event = self.engine.schedule_ns(fire, EventKind.TIMER_EXPIRY, self._access)

    def on_medium(self) -> None:
        """Physical or virtual carrier state may have changed."""
        if self.state != _State.CONTEND:
            return
        if self.busy():
            ev = self.access_event
            if ev is not None:
                if ev.fire_ns == self.engine.now_ns:
                    return  # this slot's decision is already taken
                ev.cancel()
                self.access_event = None
                elapsed = self.engine.now_ns - self.countdown_start_ns - self.difs_ns
                if elapsed > 0:
                    self.backoff -= min(self.backoff, elapsed // self.slot_ns)
        elif self.access_event is None:
            self._try_access()

    def set_nav(self, until_ns: int) -> None:
        if until_ns <= self.nav_until_ns:
            return
        self.nav_until_ns = until_ns
        if self.nav_event is not None:
            self.nav_event.cancel()
        self.nav_event = self.engine.schedule_ns(until_ns, EventKind.TIMER_EXPIRY,
                                                 self._nav_expired)
        self.on_medium()

    def _nav_expired(self) -> None:
        self.nav_event = None
        self.on_medium()

    # transmit path -----------------------------------------------------

    def _exchange_power(self, out: Outgoing) -> float:
        if self.power_control and out.p_tmin is not None:
            return out.p_tmin
        return self.max_power

    def _access(self) -> None:
        self.access_event = None
        if self.state != _State.CONTEND or self.hol is None or not self.radio.alive:
            return
        if self._sensed_busy():
            self._try_access()
            return
        self.backoff = None
        out = self.hol
        now = self.engine.now_ns
        if out.dst == BROADCAST:
            self.state = _State.TX_BCAST
            frame = Frame(FrameKind.BCAST, self.node_id, BROADCAST, out.bits, self.max_power,
                          out.payload)
            self.medium.transmit(self.node_id, frame, self.max_power)
            return
        t_acc_ns = now - self.attempt_start_ns
        self.stats.t_acc_total += t_acc_ns / 1e9
        self.stats.handshake_count += 1
        self.access_delays.append(t_acc_ns / 1e9)
        power = self._exchange_power(out)
        rts_power = self.max_power if self.rts_at_max_power else power
        data_ns = self.medium.airtime_ns(out.bits + self.timing.header_bits)
        nav = 3 * self.sifs_ns + self.cts_ns + data_ns + self.ack_ns
        request = power if (self.power_control and out.p_tmin is not None) else None
        self.tx_power = power
        self.state = _State.TX_RTS
        frame = Frame(FrameKind.RTS, self.node_id, out.dst, self.timing.rts_bits, rts_power,
                      duration_ns=nav, p_tmin_request=request)
        self.medium.transmit(self.node_id, frame, rts_power)

    def on_tx_done(self, frame: Frame) -> None:
        kind = frame.kind
        now = self.engine.now_ns
        if kind == FrameKind.BCAST:
            if self.state == _State.TX_BCAST:
                self._finish(Outcome.DELIVERED)
        elif kind == FrameKind.RTS:
            self.state = _State.WAIT_CTS
            self.timeout_event = self.engine.schedule_ns(
                now + self.sifs_ns + self.cts_ns + self.slot_ns, EventKind.TIMER_EXPIRY,
                self._timeout, Outcome.NO_CTS)
        elif kind == FrameKind.DATA:
            self.state = _State.WAIT_ACK
            self.timeout_event = self.engine.schedule_ns(
                now + self.sifs_ns + self.ack_ns + self.slot_ns, EventKind.TIMER_EXPIRY,
                self._timeout, Outcome.COLLIDED)

    def _send_data(self) -> None:
        self.response_event = None
        out = self.hol
        if out is None or self.state != _State.TX_DATA or not self.radio.alive:
            return
        if self.radio.transmitting:
            self._timeout(Outcome.COLLIDED)
            return
        frame = Frame(FrameKind.DATA, self.node_id, out.dst, out.bits + self.timing.header_bits,
                      self.tx_power, out.payload, duration_ns=self.sifs_ns + self.ack_ns,
                      seq=self.seq, p_tmin_request=self.tx_power)
        self.medium.transmit(self.node_id, frame, self.tx_power)

    def _timeout(self, outcome: Outcome) -> None:
        self.timeout_event = None
        if self.hol is None:
            return
        self.attempts += 1
        if self.keep_outcomes:
            self.outcomes.append(outcome)
        if self.attempts >= self.timing.retry_limit:
            self._finish(Outcome.RETRIES_EXHAUSTED)
            return
        self.cw = min(2 * self.cw + 1, self.timing.cw_max)
        self._begin_attempt()

    def _finish(self, outcome: Outcome) -> None:
        out = self.hol
        self.hol = None
        self.state = _State.IDLE
        self.cw = self.timing.cw_min
        if self.keep_outcomes:
            self.outcomes.append(outcome)
        if self.owner is not None and out is not None:
            if outcome == Outcome.DELIVERED:
                self.owner.on_mac_success(out)
            else:
                self.owner.on_mac_failure(out)
        self._next()

    # receive path ------------------------------------------------------

    def _respond(self, frame: Frame) -> None:
        self.response_event = None
        if not self.radio.alive or self.radio.transmitting:
            return
        self.medium.transmit(self.node_id, frame, frame.tx_power_dbm)

    def _response_power(self, request) -> float:
        if self.power_control and request is not None:
            return request
        return self.max_power

    def on_receive(self, frame: Frame, p_rx: float) -> None:
        kind = frame.kind
        me = self.node_id
        now = self.engine.now_ns
        if kind == FrameKind.BCAST:
            if self.owner is not None:
                self.owner.on_mac_receive(frame.payload, frame.src, p_rx, frame)
            return
        if frame.dst != me:
            if frame.duration_ns:
                self.set_nav(now + frame.duration_ns)
            return
        if kind == FrameKind.RTS:
            if self.state not in (_State.IDLE, _State.CONTEND) or self.response_event is not None:
                return
            if self.nav_until_ns > now or self.radio.transmitting:
                return
            power = self._response_power(frame.p_tmin_request)
            cts = Frame(FrameKind.CTS, me, frame.src, self.timing.cts_bits, power,
                        duration_ns=frame.duration_ns - self.sifs_ns - self.cts_ns,
                        p_tmin_request=frame.p_tmin_request)
            self.response_event = self.engine.schedule_ns(now + self.sifs_ns,
                                                          EventKind.TIMER_EXPIRY, self._respond,
                                                          cts)
        elif kind == FrameKind.CTS:
            if self.state == _State.WAIT_CTS and self.hol is not None and frame.src == self.hol.dst:
                self.timeout_event.cancel()
                self.timeout_event = None
                self.state = _State.TX_DATA
                self.response_event = self.engine.schedule_ns(now + self.sifs_ns,
                                                              EventKind.TIMER_EXPIRY,
                                                              self._send_data)
        elif kind == FrameKind.DATA:
            if self.response_event is None and not self.radio.transmitting:
                power = self._response_power(frame.p_tmin_request)
                ack = Frame(FrameKind.ACK, me, frame.src, self.timing.ack_bits, power)
                self.response_event = self.engine.schedule_ns(now + self.sifs_ns,
                                                              EventKind.TIMER_EXPIRY,
                                                              self._respond, ack)
            if self.last_seq.get(frame.src) == frame.seq:
                return
            self.last_seq[frame.src] = frame.seq
            if self.owner is not None:
                self.owner.on_mac_receive(frame.payload, frame.src, p_rx, frame)
        elif kind == FrameKind.ACK:
            if self.state == _State.WAIT_ACK and self.hol is not None and frame.src == self.hol.dst:
                self.timeout_event.cancel()
                self.timeout_event = None
                self._finish(Outcome.DELIVERED)
