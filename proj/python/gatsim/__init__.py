"""Python access to the gatsim simulation core."""

import json
import os

from ._core import (
    DATA_DIR,
    AnalysisError,
    NetworkError,
    RoutingError,
    SimError,
    assign_lifespan,
    binomial_upper_tail,
    compare_days,
    link_flow,
    recency,
    score_keyword,
    score_semantic,
    shortest_path,
    snapshot_export,
)
from . import _core

__all__ = [
    "DATA_DIR", "AnalysisError", "NetworkError", "RoutingError", "SimError", "Simulation", "assign_lifespan",
    "binomial_upper_tail", "compare_days", "eval_stats", "link_flow", "recency", "score_keyword",
    "score_semantic", "shortest_path", "snapshot_export",
]


def eval_stats(wins_a, wins_b, ties=0, prior_a=1.0, prior_b=1.0, tie_handling="drop", decisive_rate=2 / 3):
    return json.loads(_core.eval_stats_json(wins_a, wins_b, ties, prior_a, prior_b, tie_handling, decisive_rate))


class Simulation:
    """A simulation built from a config dict or a config file path."""

    def __init__(self, config, base_dir=None, _core_sim=None):
        if _core_sim is not None:
            self._sim = _core_sim
            return
        if isinstance(config, (str, os.PathLike)):
            path = os.fspath(config)
            with open(path, encoding="utf-8") as f:
                config = json.load(f)
            base_dir = base_dir or os.path.dirname(os.path.abspath(path))
        self._sim = _core.Simulation(json.dumps(config), base_dir or ".")

    @classmethod
    def restore(cls, checkpoint):
        return cls(None, _core_sim=_core.Simulation.restore(json.dumps(checkpoint)))

    def step(self, n=1):
        self._sim.step(n)

    def run(self):
        self._sim.run()

    def run_until(self, iso):
        self._sim.run_until(iso)

    @property
    def clock(self):
        return self._sim.clock

    @property
    def finished(self):
        return self._sim.finished

    def state(self):
        return json.loads(self._sim.state_json())

    def state_hash(self):
        return self._sim.state_hash()

    def checkpoint(self):
        return json.loads(self._sim.checkpoint_json())

    def trips(self):
        return json.loads(self._sim.trips_json())

    def write_logs(self, directory):
        self._sim.write_logs(os.fspath(directory))

    def add_event(self, event):
        self._sim.add_event_json(json.dumps(event))

    def interview(self, agent, question, persist=False):
        return json.loads(self._sim.interview_json(agent, question, persist))
