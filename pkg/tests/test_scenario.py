import pytest

from manetsim.scenario import (ScenarioConfig, ScenarioError, load_scenario, parse_scenario,
                               read_text)


def test_empty_file_gives_reference_defaults(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    cfg = load_scenario(path)
    s = cfg.scenario
    assert (s.nodes, s.area_x_m, s.area_y_m, s.sim_time_s) == (50, 1500.0, 500.0, 100.0)
    assert (cfg.mobility.speed_mps, cfg.mobility.pause_s) == (5.0, 10.0)
    assert cfg.radio.range_m == 250.0 and cfg.radio.channel_rate_bps == 2e6
    e = cfg.energy
    assert (e.initial_j, e.rx_w, e.tx_w, e.idle_w) == (4.7, 0.395, 0.660, 0.035)
    assert cfg.traffic.packet_bytes == 512
    assert cfg.mcba.k == 1.0 and cfg.mcba.rss_margin_db == 10.0


def test_comments_and_blank_lines_ignored():
    cfg, _ = parse_scenario("# note\n\nscenario.nodes = 30   # trailing\n")
    assert cfg.scenario.nodes == 30


def test_single_node_rejected_naming_field():
    with pytest.raises(ScenarioError, match="scenario.nodes"):
        parse_scenario("scenario.nodes = 1\n")


def test_flow_to_missing_node_rejected():
    with pytest.raises(ScenarioError, match="node 99"):
        parse_scenario("flow.1 = 0 99 rate_bps=1000\n")


@pytest.mark.parametrize("text,fragment", [
    ("scenario.nodez = 3\n", "unknown key"),
    ("warp.speed = 3\n", "unknown section"),
    ("scenario.nodes = many\n", "malformed value"),
    ("scenario.nodes = 2.5\n", "malformed value"),
    ("scenario.nodes = 3\nscenario.nodes = 4\n", "duplicate key"),
    ("nodes = 3\n", "section.name"),
    ("scenario.nodes\n", "key = value"),
    ("scenario.protocol = olsr\n", "scenario.protocol"),
    ("mcba.k = 0.5\n", "mcba.k"),
    ("flow.1 = 0 1 speed=3\n", "unknown flow field"),
    ("flow.1 = 0 0\n", "source equals destination"),
    ("radio.frequency_hz = inf\n", "malformed value"),
])
def test_diagnostics(text, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        parse_scenario(text, "s.txt")


def test_diagnostic_names_line():
    with pytest.raises(ScenarioError, match=r"s\.txt:3"):
        parse_scenario("\n# c\nscenario.bogus = 1\n", "s.txt")


def test_positions_must_cover_all_nodes():
    with pytest.raises(ScenarioError, match="position"):
        parse_scenario("scenario.nodes = 3\nposition.0 = 1 1\nposition.1 = 2 2\n")


def test_positions_inside_area():
    with pytest.raises(ScenarioError, match="position.1"):
        parse_scenario("scenario.nodes = 2\nposition.0 = 1 1\nposition.1 = 2000 2\n")


def test_flow_inherits_traffic_rate():
    cfg, _ = parse_scenario("traffic.rate_bps = 5000\nflow.1 = 0 1\n")
    assert cfg.flows[0].rate_bps == 5000


def test_protocol_toggles():
    base = parse_scenario("scenario.protocol = aodv-baseline\n")[0].features()
    assert not any(base.values())
    mcba = parse_scenario("scenario.protocol = mcba\n")[0].features()
    assert all(mcba.values())
    ablate = parse_scenario("mcba.power_control = false\n")[0].features()
    assert not ablate["power_control"] and ablate["link_filter"]


def test_overrides_do_not_touch_original():
    cfg = ScenarioConfig()
    other = cfg.with_overrides(protocol="aodv-baseline", seed=9, scenario__nodes=25)
    assert (cfg.scenario.nodes, cfg.scenario.seed) == (50, 1)
    assert (other.scenario.nodes, other.scenario.seed, other.scenario.protocol) == (
        25, 9, "aodv-baseline")


def test_overrides_are_validated():
    with pytest.raises(ScenarioError):
        ScenarioConfig().with_overrides(scenario__nodes=1)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="no such file"):
        read_text(tmp_path / "nope.txt")
