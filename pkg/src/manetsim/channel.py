"""Shared wireless medium: per-node reception state, collisions and carrier sense."""

from __future__ import annotations

import math

import numpy as np

from .engine import Engine, EventKind
from .radio import EnergyState, RadioParams, RadioState, account_energy


class Transmission:
    __slots__ = ("sender", "frame", "power_dbm", "start_ns", "end_ns", "receivers")

    def __init__(self, sender, frame, power_dbm, start_ns, end_ns):
        self.sender = sender
        self.frame = frame
        self.power_dbm = power_dbm
        self.start_ns = start_ns
        self.end_ns = end_ns
        self.receivers = []


class Radio:
    """Physical-layer state of one node.

    ``busy`` counts arrivals currently above the carrier-sense threshold. A
    frame is decoded only if it arrived above the receive threshold while
    nothing else was on the air at this node and nothing else overlapped it.
    """

    def __init__(self, node_id: int, params: RadioParams, energy: EnergyState, engine: Engine):
        self.node_id = node_id
        self.params = params
        self.rx_threshold = params.rx_threshold_dbm
        self.energy = energy
        self.engine = engine
        self.busy = 0
        self.transmitting = False
        self.locked: Transmission | None = None
        self.locked_power = 0.0
        self.corrupted = False
        self.tx_bits = 0
        self._tx_power = 0.0
        self.dead = False
        self.mac = None
        self.on_death = None
        self.collisions = 0
        # arrivals that began at instant fresh_ns; a station deciding to transmit in that
        # same instant cannot have sensed them yet
        self.fresh_ns = -1
        self.fresh = 0

    @property
    def alive(self) -> bool:
        return not self.dead

    def _set_energy_state(self) -> None:
        e = self.energy
        now = self.engine.now_ns / 1e9
        if self.transmitting:
            account_energy(e, RadioState.TX, now, self._tx_power)
        elif self.locked is not None:
            account_energy(e, RadioState.RX, now)
        else:
            account_energy(e, RadioState.IDLE, now)
        if e.state == RadioState.DEAD:
            self._die()

    def check_energy(self) -> bool:
        """Settle the battery up to now; returns liveness."""
        if self.dead:
            return False
        if not self.energy.settle(self.engine.now_ns / 1e9):
            self._die()
            return False
        return True

    def _die(self) -> None:
        if self.dead:
            return
        self.dead = True
        self.locked = None
        self.transmitting = False
        if self.on_death is not None:
            self.on_death()

    def arrival_start(self, tx: Transmission, p_rx: float) -> None:
        self.busy += 1
        now = self.engine.now_ns
        if now == self.fresh_ns:
            self.fresh += 1
        else:
            self.fresh_ns = now
            self.fresh = 1
        if self.transmitting:
            return
        if self.locked is not None:
            self.corrupted = True
            self.collisions += 1
        elif self.busy == 1:
            if p_rx >= self.rx_threshold:
                self.locked = tx
                self.locked_power = p_rx
                self.corrupted = False
                self._set_energy_state()
                if self.dead:
                    return
            mac = self.mac
            if mac is not None and mac.state == 1:
                mac.on_medium()

    def arrival_end(self, tx: Transmission) -> None:
        self.busy -= 1
        if self.locked is tx:
            self.locked = None
            ok = not self.corrupted
            self._set_energy_state()
            if self.dead:
                return
            if ok and self.mac is not None:
                self.mac.on_receive(tx.frame, self.locked_power)
        if self.busy == 0 and not self.transmitting and not self.dead:
            mac = self.mac
            if mac is not None and mac.state == 1:
                mac.on_medium()

    def start_tx(self, power_dbm: float, bits: int) -> None:
        if self.locked is not None:
            # our own transmission wipes out the frame being decoded
            self.locked = None
        self.transmitting = True
        self._tx_power = power_dbm
        self.tx_bits += bits
        self._set_energy_state()

    def end_tx(self) -> None:
        self.transmitting = False
        self._set_energy_state()


class Medium:
    def __init__(self, engine: Engine, params: RadioParams, mobility, radios: list[Radio]):
        self.engine = engine
        self.params = params
        self.mobility = mobility
        self.radios = radios
        self._gain_db = 20.0 * math.log10(params.wavelength / (4.0 * math.pi)) + 10.0 * math.log10(
            params.tx_gain * params.rx_gain)
        self.transmissions = 0
        self.observer = None

    def airtime_ns(self, bits: int) -> int:
        return int(round(bits * 1e9 / self.params.channel_rate))

    def received_dbm(self, p_tx: float, d2: float) -> float:
        # coincident nodes are treated as 1 cm apart
        return p_tx + self._gain_db - 10.0 * math.log10(max(d2, 1e-4))

    def transmit(self, sender: int, frame, power_dbm: float) -> Transmission | None:
        radio = self.radios[sender]
        if not radio.alive:
            return None
        engine = self.engine
        now_ns = engine.now_ns
        end_ns = now_ns + self.airtime_ns(frame.bits)
        tx = Transmission(sender, frame, power_dbm, now_ns, end_ns)
        self.transmissions += 1
        radio.start_tx(power_dbm, frame.bits)
        if not radio.alive:
            return None
        if radio.mac is not None:
            radio.mac.on_medium()
        pos = self.mobility.positions(now_ns / 1e9)
        d2 = ((pos - pos[sender]) ** 2).sum(axis=1)
        cs = self.params.cs_threshold_dbm
        # d^2 at which the arrival drops to the carrier-sense threshold
        limit = 10.0 ** ((power_dbm + self._gain_db - cs) / 10.0)
        idx = np.flatnonzero(d2 <= limit)
        if idx.size:
            p_rx = power_dbm + self._gain_db - 10.0 * np.log10(np.maximum(d2[idx], 1e-4))
            radios = self.radios
            receivers = tx.receivers
            for j, p in zip(idx.tolist(), p_rx.tolist()):
                if j == sender or p < cs:
                    continue
                other = radios[j]
                if other.dead:
                    continue
                receivers.append(other)
                other.arrival_start(tx, p)
        if self.observer is not None:
            self.observer(tx)
        engine.schedule_ns(end_ns, EventKind.FRAME_ARRIVAL, self._finish, tx)
        return tx

    def _finish(self, tx: Transmission) -> None:
        for other in tx.receivers:
            if not other.dead:
                other.arrival_end(tx)
        sender = self.radios[tx.sender]
        if sender.alive:
            sender.end_tx()
            if sender.alive and sender.mac is not None:
                sender.mac.on_tx_done(tx.frame)
                sender.mac.on_medium()
