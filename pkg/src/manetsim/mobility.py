"""Random waypoint mobility and constant-bit-rate traffic sources."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field

import numpy as np


@dataclass
class WaypointState:
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float
    leg_start: float
    arrival: float
    pause_until: float | None = None


class RandomWaypoint:
    """Random waypoint motion for every node, with array-backed positions.

    Each node travels in a straight line to a uniformly drawn waypoint at
    constant speed, pauses, then repeats. Positions between events are
    interpolated, so nothing is updated on a fixed tick.
    """

    def __init__(self, n_nodes: int, area: tuple[float, float], speed: float, pause: float,
                 rng: random.Random, initial: list[tuple[float, float]] | None = None,
                 speed_range: tuple[float, float] | None = None):
        if speed <= 0:
            raise ValueError("speed must be positive")
        self.area = (float(area[0]), float(area[1]))
        self.speed = speed
        self.pause = pause
        self.rng = rng
        self.speed_range = speed_range
        if initial is None:
            initial = [self.draw_point() for _ in range(n_nodes)]
        xy = np.asarray(initial, dtype=float).reshape(n_nodes, 2)
        self.origin = xy.copy()
        self.target = xy.copy()
        self.velocity = np.zeros((n_nodes, 2))
        self.leg_start = np.zeros(n_nodes)
        self.leg_length = np.zeros(n_nodes)
        self.pause_until = np.zeros(n_nodes)
        self.legs = 0

    def draw_point(self) -> tuple[float, float]:
        return (self.rng.uniform(0.0, self.area[0]), self.rng.uniform(0.0, self.area[1]))

    def next_waypoint(self, node: int, now: float) -> WaypointState:
        """Start a new leg for ``node`` from its current position at time ``now``."""
        x, y = self.position(node, now)
        wx, wy = self.draw_point()
        speed = self.speed
        if self.speed_range is not None:
            speed = self.rng.uniform(*self.speed_range)
        dist = math.hypot(wx - x, wy - y)
        duration = dist / speed
        self.origin[node] = (x, y)
        self.target[node] = (wx, wy)
        if duration > 0:
            self.velocity[node] = ((wx - x) / duration, (wy - y) / duration)
        else:
            self.velocity[node] = (0.0, 0.0)
        self.leg_start[node] = now
        self.leg_length[node] = duration
        self.pause_until[node] = now + duration + self.pause
        self.legs += 1
        self._check_bounds(wx, wy)
        return WaypointState((x, y), (wx, wy), speed, now, now + duration,
                             now + duration + self.pause)

    def _check_bounds(self, x: float, y: float) -> None:
        if not (0.0 <= x <= self.area[0] and 0.0 <= y <= self.area[1]):
            raise AssertionError(f"position ({x}, {y}) left the simulation area")

    def position(self, node: int, t: float) -> tuple[float, float]:
        elapsed = min(max(t - self.leg_start[node], 0.0), self.leg_length[node])
        ox, oy = self.origin[node]
        vx, vy = self.velocity[node]
        if elapsed >= self.leg_length[node]:
            tx, ty = self.target[node]
            return (float(tx), float(ty))
        return (float(ox + vx * elapsed), float(oy + vy * elapsed))

    def positions(self, t: float) -> np.ndarray:
        elapsed = np.clip(t - self.leg_start, 0.0, self.leg_length)
        pos = self.origin + self.velocity * elapsed[:, None]
        done = elapsed >= self.leg_length
        if done.any():
            pos[done] = self.target[done]
        return pos

    def assert_in_bounds(self, t: float) -> None:
        pos = self.positions(t)
        eps = 1e-9
        if (pos < -eps).any() or (pos[:, 0] > self.area[0] + eps).any() or (
                pos[:, 1] > self.area[1] + eps).any():
            raise AssertionError(f"node positions left the simulation area at t={t}")


class FlowState(enum.Enum):
    PENDING = "pending-admission"
    ACTIVE = "active"
    REJECTED = "rejected"
    DONE = "done"


@dataclass
class CbrFlow:
    flow_id: int
    source: int
    destination: int
    packet_bits: int
    rate: float
    required_bw: float
    start: float
    stop: float | None = None
    rt_min: float = 8192.0
    rt_max: float | None = None
    state: FlowState = FlowState.PENDING
    packets_sent: int = 0
    rate_changes: list = field(default_factory=list)

    def __post_init__(self):
        if self.rt_max is None:
            self.rt_max = self.rate
        if self.rate <= 0 or self.packet_bits <= 0:
            raise ValueError("flow rate and packet size must be positive")
        self.rt_min = min(self.rt_min, self.rt_max)

    @property
    def interval(self) -> float:
        return self.packet_bits / self.rate

    def set_rate(self, rate: float, at: float) -> None:
        rate = min(max(rate, self.rt_min), self.rt_max)
        if rate != self.rate:
            self.rate_changes.append((at, rate))
        self.rate = rate
