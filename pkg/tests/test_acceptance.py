"""Acceptance criteria 1-7. A summary line per criterion is printed at the end of the run."""

import math
import os
import random
import statistics
import time

import pytest

from helpers import static_sim
from manetsim.cli import main
from manetsim.control import Admission, FlowRequest, admit_flow, channel_resource_delta
from manetsim.mac import channel_occupation
from manetsim.metrics import read_csv, render_csv
from manetsim.network import DataPacket, Simulation
from manetsim.radio import RadioParams, dbm_to_watts, received_power, watts_to_dbm
from manetsim.scenario import parse_scenario
from manetsim.sweep import load_sweep, run_sweep

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")


class Timing:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.1f}s (limit {self.limit}s)"


# 1: equation oracles ------------------------------------------------------

@pytest.mark.criterion(1)
def test_propagation_matches_linear_oracle():
    rng = random.Random(1)
    with Timing(1.0):
        for _ in range(1000):
            p_tx, lam, d = rng.uniform(-10, 30), rng.uniform(0.05, 2.0), rng.uniform(0.1, 5000)
            params = RadioParams(wavelength=lam, rx_threshold_dbm=-300, cs_threshold_dbm=-310)
            p_w = dbm_to_watts(p_tx) * (lam / (4 * math.pi * d)) ** 2
            assert abs(received_power(p_tx, d, params) - 10 * math.log10(p_w * 1e3)) <= 1e-9


@pytest.mark.criterion(1)
def test_occupation_matches_direct_sum():
    from types import SimpleNamespace
    rng = random.Random(2)
    with Timing(1.0):
        for _ in range(1000):
            rts, cts = rng.randint(1, 4000), rng.randint(1, 4000)
            rate, sifs = rng.uniform(1e4, 1e8), rng.uniform(1e-7, 1e-3)
            t = SimpleNamespace(rts_bits=rts, cts_bits=cts, control_rate=rate, t_sifs=sifs)
            assert channel_occupation(t) == rts / rate + cts / rate + 3 * sifs


@pytest.mark.criterion(1)
def test_resource_delta_sign_and_value():
    rng = random.Random(3)
    with Timing(1.0):
        for _ in range(10_000):
            oh, t_rh, s = rng.uniform(1e-6, 1.0), rng.uniform(1e-6, 1.0), rng.uniform(1.0, 1e7)
            if rng.random() < 0.01:
                oh = t_rh
            d = channel_resource_delta(oh, t_rh, s)
            direct = (t_rh - oh) / oh * s
            assert (d > 0) == (t_rh - oh > 0) and (d < 0) == (t_rh - oh < 0)
            assert d == pytest.approx(direct, rel=1e-12, abs=0.0)


def _admission_oracle(fbw, rbw, lo, hi):
    # written from the four-step description, not from the implementation
    verdict = "probe"
    if rbw > hi:
        verdict = "reject"
    if rbw < lo:
        verdict = "admit"
    if fbw < rbw:
        verdict = "reject"
    return verdict


@pytest.mark.criterion(1)
def test_admission_grid_matches_oracle():
    grid = range(1, 21)
    mismatches = 0
    with Timing(1.0):
        requests = {r: FlowRequest(1, 0, 1, float(r)) for r in grid}
        for fbw in grid:
            for rbw in grid:
                req = requests[rbw]
                for lo in grid:
                    for hi in grid:
                        got = admit_flow(req, fbw, lo, hi).value
                        mismatches += got != _admission_oracle(fbw, rbw, lo, hi)
    assert mismatches == 0


# 2: closed-loop power control ---------------------------------------------

def _data_powers(k):
    sim = static_sim([(0, 0), (50, 0)], [(0, 1, "rate_bps=16384 start_s=1 stop_s=2")],
                     protocol="mcba", sim_time=2.5, extra=f"mcba.k = {k}\n")
    heard = []
    dest = sim.nodes[1]
    original = dest.on_mac_receive

    def spy(payload, src, p_rx, frame):
        if isinstance(payload, DataPacket):
            heard.append((p_rx, frame.tx_power_dbm))
        original(payload, src, p_rx, frame)

    dest.on_mac_receive = spy
    sim.run()
    return sim.radio_params, heard


@pytest.mark.criterion(2)
def test_minimum_power_lands_on_threshold():
    with Timing(1.0):
        params, heard = _data_powers(1.0)
    r_th = params.rx_threshold_dbm
    assert heard
    for p_rx, p_tx in heard:
        assert p_tx < params.max_power_dbm - 1.0
        assert r_th <= p_rx <= r_th + 0.01


@pytest.mark.criterion(2)
def test_larger_k_lands_above_threshold():
    with Timing(1.0):
        params, heard = _data_powers(1.1)
    assert heard and all(p_rx > params.rx_threshold_dbm for p_rx, _ in heard)


# 3: determinism -------------------------------------------------------------

@pytest.mark.criterion(3)
def test_default_scenario_is_reproducible(tmp_path):
    empty = tmp_path / "default.txt"
    empty.write_text("")
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        with Timing(30.0):
            assert main(["run", str(empty), "--seed", "11", "--out", str(out)]) == 0
        import json
        hashes.append(json.loads((out / "manifest.json").read_text())["trace_hash"])
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert hashes[0] == hashes[1]


# 4 and 5: trend sweep ---------------------------------------------------------

@pytest.fixture(scope="module")
def trend():
    spec = load_sweep(os.path.join(SCENARIOS, "trend_sweep.txt"))
    t0 = time.perf_counter()
    results = run_sweep(spec, jobs=1)  # finalize raises on any conservation failure
    return spec, results, time.perf_counter() - t0


@pytest.mark.criterion(4)
def test_trend_sweep_conserves(trend):
    spec, results, _ = trend
    assert len(results) == 20
    for cell, r in results:
        assert r.sent == r.delivered + r.dropped + r.in_flight, cell.label()
        assert 0.0 <= r.pdr <= 1.0
        assert r.trace_digest


@pytest.mark.criterion(4)
def test_conservation_checked_at_finalize():
    from manetsim.metrics import ConservationError
    cfg, _ = parse_scenario("scenario.nodes = 5\nscenario.sim_time_s = 3\n")
    sim = Simulation(cfg)
    sim.advance(3.0)
    sim.metrics.sent += 1
    with pytest.raises(ConservationError):
        sim.run()


def _medians(results, value, protocol):
    rows = [r for c, r in results if c.value == value and c.protocol == protocol]
    return {
        "pdr": statistics.median(r.pdr for r in rows),
        "energy": statistics.median(r.avg_energy_j for r in rows),
        "drops": statistics.median(r.dropped for r in rows),
        "delay": statistics.median(r.avg_delay_s or 0.0 for r in rows),
    }


@pytest.mark.criterion(5)
@pytest.mark.parametrize("nodes", [25, 50])
def test_trend_reproduction(trend, nodes):
    spec, results, elapsed = trend
    assert elapsed < 600
    cfg = spec.base
    offered = cfg.traffic.random_flows * cfg.traffic.rate_bps + sum(f.rate_bps for f in cfg.flows)
    assert cfg.traffic.random_flows + len(cfg.flows) >= 5
    assert offered >= 0.6 * cfg.radio.channel_rate_bps
    assert cfg.scenario.sim_time_s == 50 and len(spec.seeds) == 5
    m = _medians(results, nodes, "mcba")
    b = _medians(results, nodes, "aodv-baseline")
    print(f"nodes={nodes} mcba={m} baseline={b}")
    assert m["pdr"] >= b["pdr"]
    assert m["energy"] <= b["energy"]
    assert m["drops"] <= b["drops"]
    assert m["delay"] <= 1.1 * b["delay"]


# 6: ablation ---------------------------------------------------------------

ALL_OFF = ("mcba.link_filter = false\nmcba.power_control = false\n"
           "mcba.congestion_control = false\nmcba.admission_control = false\n")


@pytest.mark.criterion(6)
def test_toggles_off_equals_baseline():
    text = "scenario.sim_time_s = 40\ntraffic.random_flows = 6\ntraffic.rate_bps = 65536\n"
    with Timing(60.0):
        off, _ = parse_scenario(text + ALL_OFF + "scenario.protocol = mcba\n")
        base, _ = parse_scenario(text + "scenario.protocol = aodv-baseline\n")
        a, b = Simulation(off).run(), Simulation(base).run()
    # the protocol label is the only column allowed to differ
    row_a, row_b = a.row(), b.row()
    row_a["protocol"] = row_b["protocol"] = "-"
    assert render_csv([row_a]) == render_csv([row_b])
    assert a.trace_digest == b.trace_digest
    assert a.sent > 0


# 7: admission ----------------------------------------------------------------

def _admission_run(rbw):
    text = ("scenario.protocol = mcba\nscenario.nodes = 20\nscenario.sim_time_s = 10\n"
            f"traffic.random_flows = 5\ntraffic.rate_bps = 32768\ntraffic.rbw_bps = {rbw}\n")
    sim = Simulation(parse_scenario(text)[0])
    return sim, sim.run()


@pytest.mark.criterion(7)
def test_oversized_flows_are_rejected():
    with Timing(10.0):
        sim, report = _admission_run(900_000)  # above the 800 kbit/s ceiling
    assert report.flows_rejected == 5 and report.flows_admitted == 0
    assert report.sent == 0
    assert all(flow.packets_sent == 0 for flow in sim.flows)


@pytest.mark.criterion(7)
def test_small_flows_are_admitted():
    with Timing(10.0):
        sim, report = _admission_run(50_000)  # below the 100 kbit/s floor
    assert report.flows_admitted == 5 and report.flows_rejected == 0
    assert {v for _, v in sim.admission_log} == {Admission.ADMIT.value}
    assert report.sent > 0
