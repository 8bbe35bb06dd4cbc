import json
import math
import os

import pytest

import gatsim

NETWORK = os.path.join(gatsim.DATA_DIR, "nguyen_dupuis.json")


def small_config(agents=8, end=None):
    cfg = {
        "network": NETWORK,
        "population": os.path.join(gatsim.DATA_DIR, "population70.json"),
        "start_date": "2025-03-10",
        "seed": 7,
        "max_agents": agents,
    }
    if end:
        cfg["end_date"] = end
    return cfg


def exact_tail(k, n, p):
    return sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(k, n + 1))


def test_eval_stats_matches_exact_sum():
    s = gatsim.eval_stats(23, 20, 7)
    assert s["sign_test_p"] == pytest.approx(exact_tail(23, 43, 0.5), abs=1e-12)
    assert s["sign_test_p"] == pytest.approx(0.380, abs=0.005)
    assert gatsim.eval_stats(23, 20, 7, tie_handling="favor_a")["posterior_alpha"] == 31
    with pytest.raises(gatsim.AnalysisError, match="no decisive outcomes"):
        gatsim.eval_stats(0, 0, 10)


def test_memory_math():
    assert gatsim.score_keyword({"metro", "delay"}, {"metro"}) == 0.5
    assert gatsim.recency(7, 0.95) == pytest.approx(0.70, abs=0.005)
    assert gatsim.assign_lifespan("event", 0.5) == pytest.approx(19.8, abs=0.1)


def test_shortest_path():
    links, cost = gatsim.shortest_path(NETWORK, "Midtown apartment", "Factory", "drive")
    assert links and cost > 0
    with pytest.raises(ValueError):
        gatsim.shortest_path(NETWORK, "Midtown apartment", "Nowhere", "drive")


def test_simulation_round_trip(tmp_path):
    sim = gatsim.Simulation(small_config())
    state = sim.state()
    assert len(state["agents"]) == 8
    assert all(a["status"] == "at_facility" for a in state["agents"])
    sim.run_until("2025-03-10T09:00:00")
    cp = sim.checkpoint()
    restored = gatsim.Simulation.restore(cp)
    assert restored.state_hash() == sim.state_hash()
    sim.run()
    restored.run()
    assert sim.finished and restored.state_hash() == sim.state_hash()
    assert sim.clock == "2025-03-11T00:00:00"
    trips = sim.trips()
    assert trips and {"agent", "links", "mode"} <= set(trips[0])

    sim.write_logs(tmp_path)
    delay = gatsim.compare_days(str(tmp_path), "mean_arrival_delay")
    assert [d for d, _ in delay] == ["2025-03-10"]
    entries, volume = gatsim.link_flow(str(tmp_path), "Ave_2_link_2", "2025-03-10")
    assert 0 <= volume <= entries
    files = gatsim.snapshot_export(str(tmp_path), ["07:30"], form="png", out_dir=str(tmp_path / "snap"))
    assert len(files) == 1 and open(files[0], "rb").read(8) == b"\x89PNG\r\n\x1a\n"
    with pytest.raises(gatsim.AnalysisError):
        gatsim.snapshot_export(str(tmp_path), ["25:00"])


def test_config_file_and_events(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_config(4)))
    sim = gatsim.Simulation(str(path))
    sim.add_event({"kind": "capacity_change", "target": "Ave_2_link_2", "capacity": 1,
                   "date": "2025-03-10", "start": "00:00", "end": "01:00"})
    sim.step(2)
    st = sim.state()
    assert st["active_events"] == ["ev1"]
    with pytest.raises(gatsim.SimError, match="valid road links"):
        sim.add_event({"kind": "capacity_change", "target": "Nope", "capacity": 1,
                       "date": "2025-03-10", "start": "02:00", "end": "03:00"})
    agent = st["agents"][0]["id"]
    ex = sim.interview(agent, "How was your morning?")
    assert ex["answer"]
