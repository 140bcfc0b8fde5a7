"""Small static-topology harness for PHY/MAC level tests."""

import random

from manetsim.channel import Medium, Radio
from manetsim.engine import Engine
from manetsim.mac import Dcf, MacTiming
from manetsim.mobility import RandomWaypoint
from manetsim.radio import EnergyState, RadioParams


class Recorder:
    def __init__(self):
        self.received = []
        self.successes = []
        self.failures = []

    def on_mac_receive(self, payload, src, p_rx, frame):
        self.received.append((payload, src, p_rx))

    def on_mac_success(self, out):
        self.successes.append(out)

    def on_mac_failure(self, out):
        self.failures.append(out)


class ScriptedRng:
    """Returns scripted backoff draws, then falls back to a seeded generator."""

    def __init__(self, draws, seed=0):
        self.draws = list(draws)
        self.fallback = random.Random(seed)

    def randint(self, a, b):
        if self.draws:
            return self.draws.pop(0)
        return self.fallback.randint(a, b)


class StaticNet:
    def __init__(self, positions, power_control=False, rts_at_max_power=False, rngs=None,
                 seed=1, params=None, timing=None):
        n = len(positions)
        self.engine = Engine(seed)
        self.params = params or RadioParams()
        self.timing = timing or MacTiming()
        self.mobility = RandomWaypoint(n, (5000.0, 5000.0), 5.0, 0.0, random.Random(0),
                                       initial=positions)
        self.radios = [Radio(i, self.params, EnergyState(initial=1e6), self.engine)
                       for i in range(n)]
        self.medium = Medium(self.engine, self.params, self.mobility, self.radios)
        self.frames = []
        self.medium.observer = lambda tx: self.frames.append(
            (tx.start_ns, tx.frame.kind.name, tx.frame.src, tx.frame.dst, tx.power_dbm))
        self.owners = [Recorder() for _ in range(n)]
        rngs = rngs or [random.Random(seed + i) for i in range(n)]
        self.macs = [Dcf(i, self.engine, self.medium, self.radios[i], self.timing, rngs[i],
                         self.params.max_power_dbm, power_control, rts_at_max_power,
                         owner=self.owners[i]) for i in range(n)]
        for mac in self.macs:
            mac.keep_outcomes = True

    def run(self, until=1.0):
        self.engine.run_until(until)

    def kinds(self):
        return [f[1] for f in self.frames]


def scenario_text(positions, flows=(), protocol="aodv-baseline", sim_time=10.0, area=(2000, 500),
                  extra=""):
    """Static topology scenario with explicit flows given as (src, dst, options) tuples."""
    lines = [
        "scenario.id = test",
        f"scenario.nodes = {len(positions)}",
        f"scenario.area_x_m = {area[0]}",
        f"scenario.area_y_m = {area[1]}",
        f"scenario.sim_time_s = {sim_time}",
        f"scenario.protocol = {protocol}",
        "mobility.model = static",
        "traffic.random_flows = 0",
        "energy.initial_j = 1000",
    ]
    lines += [f"position.{i} = {x} {y}" for i, (x, y) in enumerate(positions)]
    for i, (src, dst, opts) in enumerate(flows, start=1):
        lines.append(f"flow.{i} = {src} {dst} {opts}".rstrip())
    return "\n".join(lines) + "\n" + extra


def static_sim(positions, flows=(), protocol="aodv-baseline", sim_time=10.0, extra="", **kw):
    from manetsim.network import Simulation
    from manetsim.scenario import parse_scenario
    cfg, _ = parse_scenario(scenario_text(positions, flows, protocol, sim_time, extra=extra, **kw))
    return Simulation(cfg)
