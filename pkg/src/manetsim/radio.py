"""Free-space propagation, reception decisions and per-node energy accounting.

All path-loss arithmetic happens in dBm/dB; watts only appear in the energy
model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1000.0)


def friis_gain_db(wavelength: float, distance: float, tx_gain: float = 1.0,
                  rx_gain: float = 1.0) -> float:
    """Free-space gain (negative path loss) in dB between two antennas."""
    if distance <= 0:
        raise ValueError("distance must be positive; co-located nodes are not allowed")
    return 20.0 * math.log10(wavelength / (4.0 * math.pi * distance)) + 10.0 * math.log10(
        tx_gain * rx_gain)


def range_for_threshold(p_tx_dbm: float, threshold_dbm: float, wavelength: float,
                        tx_gain: float = 1.0, rx_gain: float = 1.0) -> float:
    """Distance at which a transmission at ``p_tx_dbm`` arrives exactly at ``threshold_dbm``."""
    margin_db = p_tx_dbm - threshold_dbm + 10.0 * math.log10(tx_gain * rx_gain)
    return wavelength / (4.0 * math.pi) * 10.0 ** (margin_db / 20.0)


@dataclass
class RadioParams:
    """Radio configuration.

    When ``rx_threshold_dbm`` or ``cs_threshold_dbm`` are left as ``None``
    they are derived from ``range_m`` and ``cs_range_m`` at maximum power.
    """

    wavelength: float = SPEED_OF_LIGHT / 914e6
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    max_power_dbm: float = watts_to_dbm(0.2818)
    min_power_dbm: float = 0.0
    channel_rate: float = 2e6
    range_m: float = 250.0
    cs_range_m: float = 550.0
    rx_threshold_dbm: float | None = None
    cs_threshold_dbm: float | None = None

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.rx_threshold_dbm is None:
            self.rx_threshold_dbm = received_power(self.max_power_dbm, self.range_m, self)
        if self.cs_threshold_dbm is None:
            self.cs_threshold_dbm = received_power(self.max_power_dbm, self.cs_range_m, self)
        if self.cs_threshold_dbm > self.rx_threshold_dbm:
            raise ValueError("carrier-sense threshold must not exceed the receive threshold")
        if self.min_power_dbm > self.max_power_dbm:
            raise ValueError("min_power_dbm exceeds max_power_dbm")

    @property
    def rx_threshold(self) -> float:
        return self.rx_threshold_dbm


def received_power(p_tx: float, distance: float, params: RadioParams) -> float:
    """Received power in dBm for a free-space link of length ``distance`` metres."""
    return p_tx + friis_gain_db(params.wavelength, distance, params.tx_gain, params.rx_gain)


def can_receive(p_rx: float, params: RadioParams) -> bool:
    return p_rx >= params.rx_threshold_dbm


class RadioState:
    IDLE = "idle"
    RX = "rx"
    TX = "tx"
    DEAD = "dead"


@dataclass
class EnergyState:
    """Battery of one node.

    Transmit draw is ``draw_idle + beta * radiated_watts`` with ``beta``
    chosen so that radiating at ``max_radiated_w`` draws exactly
    ``draw_tx_max``.
    """

    initial: float = 4.7
    draw_rx: float = 0.395
    draw_idle: float = 0.035
    draw_tx_max: float = 0.660
    max_radiated_w: float = 0.2818
    residual: float = field(init=False)
    consumed_by_state: dict = field(init=False)
    state: str = field(init=False, default=RadioState.IDLE)
    tx_dbm: float = field(init=False, default=0.0)
    last_change: float = field(init=False, default=0.0)
    died_at: float | None = field(init=False, default=None)

    def __post_init__(self):
        self.residual = self.initial
        self.consumed_by_state = {RadioState.IDLE: 0.0, RadioState.RX: 0.0, RadioState.TX: 0.0}
        self.beta = (self.draw_tx_max - self.draw_idle) / self.max_radiated_w

    @property
    def alive(self) -> bool:
        return self.state != RadioState.DEAD

    @property
    def consumed(self) -> float:
        return self.initial - self.residual

    def draw(self, state: str | None = None, tx_dbm: float | None = None) -> float:
        state = self.state if state is None else state
        if state == RadioState.TX:
            p = self.tx_dbm if tx_dbm is None else tx_dbm
            return self.draw_idle + self.beta * dbm_to_watts(p)
        if state == RadioState.RX:
            return self.draw_rx
        if state == RadioState.IDLE:
            return self.draw_idle
        return 0.0

    def settle(self, at: float) -> bool:
        """Charge the current state's draw up to ``at``. Returns False if the node died."""
        if self.state == RadioState.DEAD:
            return False
        if at < self.last_change:
            raise ValueError("energy accounting went backwards in time")
        elapsed = at - self.last_change
        power = self.draw()
        cost = power * elapsed
        if cost >= self.residual:
            # battery ran out inside the interval
            used = self.residual
            self.consumed_by_state[self.state] += used
            self.residual = 0.0
            self.died_at = self.last_change + (used / power if power > 0 else elapsed)
            self.last_change = at
            self.state = RadioState.DEAD
            return False
        self.consumed_by_state[self.state] += cost
        self.residual -= cost
        self.last_change = at
        return True

    def ledger_error(self) -> float:
        """Mismatch between the per-state ledger and initial minus residual, relative to the
        initial charge (the residual is only known to that precision)."""
        booked = sum(self.consumed_by_state.values())
        spent = self.initial - self.residual
        return abs(booked - spent) / self.initial if self.initial else abs(booked - spent)


def account_energy(energy: EnergyState, new_state: str, at: float,
                   tx_dbm: float | None = None) -> EnergyState:
    """Close the interval spent in the current state and switch to ``new_state``.

    A node whose battery empties is left in the dead state.
    """
    if not energy.settle(at):
        return energy
    energy.state = new_state
    if new_state == RadioState.TX:
        if tx_dbm is None:
            raise ValueError("transmit state needs a radiated power")
        energy.tx_dbm = tx_dbm
    return energy
