"""End-to-end scenario tests with frozen reference values.

The reference numbers were produced by this implementation and verified
against independent arithmetic (traffic grids, key budgets, route
counts); they are frozen here so refactors cannot silently shift
behaviour.
"""
import dataclasses

import pytest

from keynetsim import scenario, topology


def test_scenario_letter_mapping():
    assert scenario.SCENARIOS["A"] == (topology.SEPARATELY_PROTECTED,
                                       "proactive")
    assert scenario.SCENARIOS["B"] == (topology.SEPARATELY_PROTECTED,
                                       "reactive")
    assert scenario.SCENARIOS["C"] == (topology.CM_VIA_KMS, "proactive")
    assert scenario.SCENARIOS["D"] == (topology.CM_VIA_KMS, "reactive")


def test_config_round_trip():
    cfg = scenario.ScenarioConfig(seed=7, protocol="proactive",
                                  qkd_efficiency=0.5)
    again = scenario.ScenarioConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_config_rejects_unknown_keys():
    data = scenario.ScenarioConfig().to_dict()
    data["typo_key"] = 1
    with pytest.raises(ValueError, match="typo_key"):
        scenario.ScenarioConfig.from_dict(data)


@pytest.mark.parametrize("field,value", [
    ("arch", "mesh"),
    ("protocol", "static"),
    ("duration", 0),
    ("loss", 1.0),
    ("qkd_efficiency", 0.0),
    ("cm_charge_ratio", 0),
    ("ne_keys_per_request", 0),
])
def test_config_validation_errors(field, value):
    cfg = dataclasses.replace(scenario.ScenarioConfig(), **{field: value})
    with pytest.raises(ValueError):
        cfg.validate()


def test_traffic_matrix_is_fixed_and_symmetric():
    topo = topology.generate_internet_like(
        scenario.SWEEP_NODES, scenario.TOPOLOGY_SEED, key_rate=100.0,
        delay=2_000_000)
    acc = topo.access_ids()
    assert acc == list(range(9, 20))
    flows = scenario.sweep_traffic_matrix(acc, scenario.SWEEP_PAIRS)
    # independent of everything but the matrix seed
    assert flows == scenario.sweep_traffic_matrix(acc, scenario.SWEEP_PAIRS)
    assert sum(len(v) for v in flows.values()) == 2 * scenario.SWEEP_PAIRS
    assert sorted(flows) == acc
    for a, peers in flows.items():
        assert len(peers) == len(set(peers))
        for b in peers:
            assert a in flows[b]
    with pytest.raises(ValueError):
        scenario.sweep_traffic_matrix(acc, 100)


def test_sweep_scenario_routes_every_flow():
    res = scenario.sweep_scenario(
        "A", 100.0, 42, duration=8 * scenario.SEC).run()
    assert len(res["flows"]) == 2 * scenario.SWEEP_PAIRS
    hist = {}
    for row in res["flows"]:
        hops = len(row["path"]) - 1
        hist[hops] = hist.get(hops, 0) + 1
    # fixed topology + matrix: route length distribution is invariant
    assert hist == {2: 58, 3: 14}
    assert 2.0 <= res["setup_time_s"] <= 3.5


def test_result_schema():
    res = scenario.sweep_scenario(
        "D", 100.0, 42, duration=8 * scenario.SEC).run()
    for key in ("config", "compiled_core", "events_processed", "go_time_s",
                "setup_time_s", "network", "node_means", "counts",
                "controller", "dead_letters", "flows", "links",
                "conservation", "conservation_ok"):
        assert key in res, key
    assert set(res["network"]) >= {"km_msg_latency_s", "key_round_trip_s",
                                   "ne_msg_latency_s", "km_queue_len"}
    assert res["conservation_ok"] is True
    assert res["dead_letters"] == 0


def test_overrides_reach_the_config():
    sc = scenario.padua_scenario(overrides={"qkd_efficiency": 0.5})
    assert sc.cfg.qkd_efficiency == 0.5
    with pytest.raises(TypeError):
        scenario.padua_scenario(overrides={"not_a_field": 1})
    with pytest.raises(ValueError):
        scenario.padua_scenario(overrides={"qkd_efficiency": 2.0})


def test_identical_seed_identical_result():
    a = scenario.run_sweep_point("B", 50.0, 42, duration=8 * scenario.SEC)
    b = scenario.run_sweep_point("B", 50.0, 42, duration=8 * scenario.SEC)
    assert a == b


def test_metro_reference_run():
    """Three-link metro chain, 115 s of traffic: frozen totals."""
    res = scenario.padua_scenario().run()

    tx = sum(r["tx"] for r in res["flows"])
    rx = sum(r["rx"] for r in res["flows"])
    consumed = sum(r["consumed_keys"] for r in res["flows"])
    assert tx == 179_688
    assert rx == 179_688
    assert consumed == 480

    links = {r["link"]: r for r in res["links"]}
    assert set(links) == {"1-2", "2-3", "3-6"}
    assert links["1-2"]["generated"] == 5_786
    assert links["2-3"]["generated"] == 5_812
    assert links["3-6"]["generated"] == 39_059
    for name in ("1-2", "2-3", "3-6"):
        assert links[name]["sends"] == 180_012
        assert links[name]["relayed_keys"] == 483
        assert links[name]["consumed"] == 161
        assert links[name]["discarded"] == 0

    assert res["events_processed"] == 1_081_697
    assert res["setup_time_s"] == pytest.approx(2.806143364, abs=1e-9)
    assert res["network"]["key_round_trip_s"] == pytest.approx(
        0.016108, abs=1e-9)
    assert res["network"]["km_msg_latency_s"] == pytest.approx(
        0.008054, abs=1e-9)
    assert res["network"]["ne_msg_latency_s"] == pytest.approx(
        0.006019205745514447, abs=1e-12)
    assert res["conservation_ok"] is True

    counts = res["counts"]
    assert counts["transport_delivered"] == 161
    assert counts["transport_failed"] == 0
    # two relay hops per delivered transport on the 4-node chain
    assert counts["transport_relayed"] == 2 * counts["transport_delivered"]


def test_full_duplex_override_runs_clean():
    res = scenario.sweep_scenario(
        "A", 100.0, 42, duration=8 * scenario.SEC,
        overrides={"full_duplex": True}).run()
    assert res["config"]["full_duplex"] is True
    assert res["conservation_ok"] is True
    assert res["dead_letters"] == 0
    assert len(res["flows"]) == 2 * scenario.SWEEP_PAIRS
