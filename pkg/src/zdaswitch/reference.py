"""The 16-agent benchmark network.

Agents 1, 2, 3 are monitored through their velocities and every coupling
weight is one. Topologies ``"1"`` and ``"2"`` make agents 4 and 5 leaves on a
common hub, so the antisymmetric twin direction ``e5 - e4`` is a Laplacian
eigenvector with eigenvalue 1 that the monitored agents cannot see; the
attack growing at rate 0.5 then needs the injection ``(0.25 + 0.5 + 1) = 1.75``
per unit deviation. Topologies ``"3"`` and ``"4"`` are paths with a monitored
end agent and pass the defense condition. ``"c1"`` and ``"c2"`` are
well-connected circulants used for consensus runs.
"""
from __future__ import annotations

import numpy as np

from .graph import Topology, circulant_graph, path_graph, twin_pair_graph
from .zda import ZdaEntry

N_AGENTS = 16
MONITORED = (1, 2, 3)
TWINS = (4, 5)
DWELL = 2.0
ETA = 0.5


def initial_positions() -> np.ndarray:
    return np.array([2.0] * 8 + [4.0] * 8)


def initial_velocities() -> np.ndarray:
    return np.array([6.0] * 8 + [8.0] * 8)


def initial_state() -> np.ndarray:
    return np.concatenate([initial_positions(), initial_velocities()])


def attackable_topologies() -> dict[str, Topology]:
    t1 = twin_pair_graph(N_AGENTS, TWINS, hub=6, id="1")
    backbone = [1, 3, 2, 10, 9, 8, 7, 6, 11, 12, 13, 14, 15, 16]
    t2 = twin_pair_graph(N_AGENTS, TWINS, hub=10, backbone=backbone, id="2")
    return {"1": t1, "2": t2}


def defended_topologies() -> dict[str, Topology]:
    t3 = path_graph(N_AGENTS, id="3")
    t4 = path_graph(N_AGENTS, order=[2, 1, 3] + list(range(4, N_AGENTS + 1)), id="4")
    return {"3": t3, "4": t4}


def consensus_topologies() -> dict[str, Topology]:
    return {"c1": circulant_graph(N_AGENTS, (1, 2), id="c1"),
            "c2": circulant_graph(N_AGENTS, (1, 3), id="c2")}


def all_topologies() -> dict[str, Topology]:
    return {**attackable_topologies(), **defended_topologies(), **consensus_topologies()}


def twin_attack_entry(topology: str = "1") -> ZdaEntry:
    """Deviation -1/+1 (positions) and -0.5/+0.5 (velocities) on agents 4/5,
    injection -1.75/+1.75, growth rate 0.5."""
    z0 = np.zeros(2 * N_AGENTS)
    z0[[3, 4]] = -1.0, 1.0
    z0[[N_AGENTS + 3, N_AGENTS + 4]] = -0.5, 0.5
    g = np.zeros(N_AGENTS)
    g[[3, 4]] = -1.75, 1.75
    return ZdaEntry(topology, ETA, z0, g)


def _topology_records(ids) -> list[dict]:
    topo = all_topologies()
    return [topo[r].to_record() for r in ids]


def _system_block(ids, sequence, periodic=True, c1=0.0, c2=1.0, n_monitored=3) -> dict:
    return {
        "n": N_AGENTS,
        "topologies": _topology_records(ids),
        "schedule": {"sequence": [[r, tau] for r, tau in sequence], "t0": 0.0,
                     "periodic": periodic},
        "monitored": list(range(1, n_monitored + 1)),
        "c1": [c1] * n_monitored,
        "c2": [c2] * n_monitored,
        "x0": initial_positions().tolist(),
        "v0": initial_velocities().tolist(),
    }


def scenario_records() -> dict[str, dict]:
    """Bundled scenario configurations keyed by name."""
    entry = twin_attack_entry()
    explicit = {"topology": "1", "eta": entry.eta, "z0": entry.z0.tolist(), "g": entry.g.tolist()}
    attack = {"mode": "intermittent-zda", "K": list(TWINS), "d": [0.0, 0.0, 0.0],
              "inference_delay": 0.05, "pause_lead": 0.0, "initial_known": True}
    sim = {"dt": 0.01, "threshold": 1e-3, "min_consecutive": 3, "seed": 0}
    out = {}
    out["stealth"] = {
        "system": _system_block(["1", "2"], [("1", DWELL), ("2", DWELL)]),
        "attack": {**attack, "T": ["1", "2"], "policy": explicit},
        "sim": {**sim, "horizon": 16.0},
    }
    out["detection"] = {
        "system": _system_block(["1", "3", "4"],
                                [("1", DWELL), ("3", DWELL), ("4", DWELL), ("3", DWELL), ("4", DWELL)],
                                periodic=False),
        "attack": {**attack, "T": ["1", "3", "4"], "policy": explicit},
        "sim": {**sim, "horizon": 10.0},
    }
    out["no-attack"] = {
        "system": _system_block(["c1", "c2"], [("c1", DWELL), ("c2", DWELL)]),
        "attack": {"mode": "none"},
        "sim": {**sim, "horizon": 50.0},
    }
    out["naive-midstart"] = {
        "system": _system_block(["1", "2"], [("1", DWELL), ("2", DWELL)], n_monitored=5),
        "attack": {"mode": "naive-midstart", "K": list(TWINS), "kappa": 1.0,
                   "policy": explicit},
        "sim": {**sim, "horizon": 2.0},
    }
    out["synthesize-twin"] = {
        "system": _system_block(["1", "2"], [("1", DWELL), ("2", DWELL)]),
        "attack": {**attack, "T": ["1", "2"]},
        "sim": {**sim, "horizon": 16.0},
    }
    out["synthesize-defended"] = {
        "system": _system_block(["3", "4"], [("3", DWELL), ("4", DWELL)]),
        "attack": {**attack, "T": ["3", "4"]},
        "sim": {**sim, "horizon": 16.0},
    }
    out["defense-complete"] = {
        "system": {"n": 3, "topologies": [{"id": "k3", "generator": "complete", "n": 3}],
                   "schedule": {"sequence": [["k3", 1.0]]}, "monitored": [1], "c1": [0.0], "c2": [1.0]},
        "attack": {"mode": "none"},
    }
    out["defense-path16"] = {
        "system": {"n": 16, "topologies": [{"id": "p", "generator": "path", "n": 16}],
                   "schedule": {"sequence": [["p", 2.0]]}, "monitored": [1], "c1": [0.0], "c2": [1.0]},
        "attack": {"mode": "none"},
    }
    out["sweep"] = {
        **out["stealth"],
        "sweep": {"inference_delay": [0.1, 0.3, 0.5], "pause_lead": [0.0, 0.2],
                  "threshold": [1e-3, 1e-2]},
    }
    return out
