"""Scenario configuration files.

A scenario is one JSON object with four blocks::

    {
      "system": {"n": 16, "topologies": [...], "schedule": {...},
                 "monitored": [1, 2, 3], "c1": [...], "c2": [...],
                 "x0": [...], "v0": [...]},
      "attack": {"mode": "intermittent-zda", "K": [4, 5], "T": ["1", "2"],
                 "d": [...], "inference_delay": 0.3, "pause_lead": 0.0,
                 "initial_known": true, "kappa": 1.0, "free_eta": 0.5,
                 "policy": {...}},
      "sim": {"horizon": 16, "dt": 0.01, "threshold": 1e-3,
              "min_consecutive": 3, "seed": 0},
      "output": {"dir": "out", "prefix": "run"}
    }

Topologies are either explicit (``{"id", "n", "edges"}``) or generated
(``{"id", "generator": "path" | "cycle" | "star" | "complete" | "circulant" |
"twin-pair" | "random", ...}``). Random topologies draw from ``sim.seed``
unless they carry their own ``seed``. Every validation error names the line
of the offending key.
"""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import graph
from .graph import Topology
from .linalg import InvalidInputError
from .sim import DEFAULT_DT, DEFAULT_MIN_CONSECUTIVE, DEFAULT_THRESHOLD
from .sysmodel import AttackerConfig, OutputConfig, SwitchedSystem, SwitchingSchedule
from .zda import (DEFAULT_FREE_ETA, MODES, AttackPlan, IntermittentSchedule, ZdaEntry,
                  ZdaPolicy, build_attack_plan, plan_intermittent, synthesize_policy)

BLOCKS = ("system", "attack", "sim", "output")
GENERATORS = ("path", "cycle", "star", "complete", "circulant", "twin-pair", "random")


class ConfigError(InvalidInputError):
    """Invalid scenario; ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0, source: str = "<config>"):
        self.line = line
        self.source = source
        self.message = message
        super().__init__(f"{source}:{line}: {message}" if line else f"{source}: {message}")


class _Locator:
    """Maps key paths such as ``("system", "schedule")`` to source lines."""

    def __init__(self, text: str):
        self.text = text

    def line(self, path) -> int:
        if not self.text:
            return 0
        pos, found = 0, 0
        for key in path:
            if isinstance(key, int):
                continue
            m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(self.text, pos)
            if m is None:
                break
            pos, found = m.start(), m.start()
        return self.text.count("\n", 0, found) + 1


@dataclass
class Scenario:
    topologies: dict[str, Topology]
    schedule: SwitchingSchedule
    outputs: OutputConfig
    attacker: AttackerConfig
    mode: str = "none"
    attacked: tuple[str, ...] = ()
    kappa: float | None = None
    free_eta: float = DEFAULT_FREE_ETA
    explicit_policy: dict[str, ZdaEntry] = field(default_factory=dict)
    x0: np.ndarray | None = None
    v0: np.ndarray | None = None
    horizon: float = 0.0
    dt: float = DEFAULT_DT
    threshold: float = DEFAULT_THRESHOLD
    min_consecutive: int = DEFAULT_MIN_CONSECUTIVE
    seed: int = 0
    out_dir: str = "out"
    prefix: str = "run"
    sweep: dict = field(default_factory=dict)
    record: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return next(iter(self.topologies.values())).n

    @cached_property
    def system(self) -> SwitchedSystem:
        used = {r: self.topologies[r] for r in self.schedule.topology_ids}
        return SwitchedSystem.build(used, self.schedule, self.outputs, self.attacker)

    @property
    def z_ref(self) -> np.ndarray:
        n = self.n
        x0 = np.zeros(n) if self.x0 is None else self.x0
        v0 = np.zeros(n) if self.v0 is None else self.v0
        return np.concatenate([x0, v0])

    def attack_policy(self) -> tuple[ZdaPolicy, dict[str, str]]:
        """Explicit entries when given, otherwise synthesized for ``T``."""
        K = self.attacker.misbehaving
        if self.explicit_policy:
            return ZdaPolicy(dict(self.explicit_policy), K), {}
        return synthesize_policy(self.system, K, self.attacked, free_eta=self.free_eta)

    def intermittent_schedule(self) -> IntermittentSchedule:
        return plan_intermittent(self.schedule, self.attacker, self.attacked, self.horizon)

    def attack_plan(self) -> AttackPlan | None:
        if self.mode == "none":
            return None
        policy, _ = self.attack_policy()
        isched = self.intermittent_schedule() if self.mode == "intermittent-zda" else None
        return build_attack_plan(self.system, policy, self.mode, self.horizon, isched,
                                 kappa=self.kappa)

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with CLI-style overrides (``dt``, ``horizon``, ``threshold``, ``seed``,
        attacker delays)."""
        rec = copy.deepcopy(self.record)
        for key in ("dt", "horizon", "threshold", "seed", "min_consecutive"):
            if kw.get(key) is not None:
                rec.setdefault("sim", {})[key] = kw[key]
        for key in ("inference_delay", "pause_lead"):
            if kw.get(key) is not None:
                rec.setdefault("attack", {})[key] = kw[key]
        return from_record(rec)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", 0, str(path)) from exc
    return loads(text, str(path))


def loads(text: str, source: str = "<config>") -> Scenario:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from exc
    return from_record(rec, text, source)


def from_record(rec: Any, text: str = "", source: str = "<config>") -> Scenario:
    return _Parser(rec, text, source).parse()


class _Parser:
    def __init__(self, rec, text: str, source: str):
        self.rec = rec
        self.loc = _Locator(text)
        self.source = source

    def fail(self, path, message: str):
        raise ConfigError(message, self.loc.line(path), self.source)

    def get(self, block: Mapping, path: tuple, key: str, kind, default=None, required=False):
        if key not in block:
            if required:
                self.fail(path, f"missing '{key}' in '{path[-1]}' block" if path else f"missing '{key}'")
            return default
        val = block[key]
        try:
            if kind is bool:
                if not isinstance(val, bool):
                    raise TypeError
                return val
            if kind is float:
                if isinstance(val, bool):
                    raise TypeError
                return float(val)
            if kind is int:
                if isinstance(val, bool) or int(val) != val:
                    raise TypeError
                return int(val)
            return kind(val)
        except (TypeError, ValueError):
            self.fail(path + (key,), f"'{key}' has an invalid value {val!r}")

    def parse(self) -> Scenario:
        rec = self.rec
        if not isinstance(rec, dict):
            self.fail((), "config must be a JSON object")
        unknown = sorted(set(rec) - set(BLOCKS) - {"sweep", "name", "description"})
        if unknown:
            self.fail((unknown[0],), f"unknown top-level block '{unknown[0]}'")
        if "system" not in rec:
            self.fail((), "missing 'system' block")
        blocks = {}
        for b in BLOCKS:
            val = rec.get(b, {})
            if not isinstance(val, dict):
                self.fail((b,), f"'{b}' must be an object")
            blocks[b] = val
        sys_b, att_b, sim_b, out_b = (blocks[b] for b in BLOCKS)
        sim = self.parse_sim(sim_b)
        topologies = self.parse_topologies(sys_b, sim["seed"])
        n = next(iter(topologies.values())).n
        schedule = self.parse_schedule(sys_b, topologies)
        outputs = self.parse_outputs(sys_b, n)
        attacker, attack = self.parse_attack(att_b, n, len(outputs.monitored), schedule, topologies)
        x0 = self.vector(sys_b, ("system",), "x0", n)
        v0 = self.vector(sys_b, ("system",), "v0", n)
        horizon = sim["horizon"]
        if horizon is None:
            horizon = schedule.period * (1 if not schedule.periodic else 4)
        if horizon <= 0:
            self.fail(("sim", "horizon"), "horizon must be positive")
        if schedule.t0 + horizon > schedule.end + 1e-12:
            self.fail(("sim", "horizon"),
                      f"horizon {horizon} runs past the end of the finite schedule")
        sweep = rec.get("sweep", {})
        if not isinstance(sweep, dict) or any(not isinstance(v, list) or not v for v in sweep.values()):
            self.fail(("sweep",), "'sweep' must map parameter names to nonempty lists")
        bad = sorted(set(sweep) - {"inference_delay", "pause_lead", "threshold", "dt"})
        if bad:
            self.fail(("sweep", bad[0]), f"cannot sweep over '{bad[0]}'")
        return Scenario(
            topologies=topologies, schedule=schedule, outputs=outputs, attacker=attacker,
            x0=x0, v0=v0, horizon=float(horizon), dt=sim["dt"], threshold=sim["threshold"],
            min_consecutive=sim["min_consecutive"], seed=sim["seed"],
            out_dir=str(out_b.get("dir", "out")), prefix=str(out_b.get("prefix", "run")),
            sweep=sweep, record=copy.deepcopy(rec), **attack)

    def parse_sim(self, b) -> dict:
        p = ("sim",)
        out = {
            "horizon": self.get(b, p, "horizon", float),
            "dt": self.get(b, p, "dt", float, DEFAULT_DT),
            "threshold": self.get(b, p, "threshold", float, DEFAULT_THRESHOLD),
            "min_consecutive": self.get(b, p, "min_consecutive", int, DEFAULT_MIN_CONSECUTIVE),
            "seed": self.get(b, p, "seed", int, 0),
        }
        if not out["dt"] > 0:
            self.fail(p + ("dt",), "dt must be positive")
        if not out["threshold"] > 0:
            self.fail(p + ("threshold",), "threshold must be positive")
        if out["min_consecutive"] < 1:
            self.fail(p + ("min_consecutive",), "min_consecutive must be at least 1")
        if out["seed"] < 0:
            self.fail(p + ("seed",), "seed must be non-negative")
        return out

    def parse_topologies(self, b, seed: int) -> dict[str, Topology]:
        p = ("system", "topologies")
        recs = b.get("topologies")
        if not isinstance(recs, list) or not recs:
            self.fail(p if "topologies" in b else ("system",),
                      "'system.topologies' must be a nonempty list")
        default_n = b.get("n")
        rng = np.random.default_rng(seed)
        out: dict[str, Topology] = {}
        for idx, t in enumerate(recs):
            if not isinstance(t, dict) or "id" not in t:
                self.fail(p, f"topology #{idx + 1} needs an 'id'")
            tid = str(t["id"])
            where = p + ("id",)
            if tid in out:
                self.fail(where, f"duplicate topology id '{tid}'")
            try:
                topo = self.build_topology(t, default_n, rng)
            except (InvalidInputError, TypeError, ValueError, KeyError) as exc:
                self.fail(where, f"topology '{tid}': {exc}")
            out[tid] = topo
        sizes = {t.n for t in out.values()}
        if len(sizes) != 1:
            self.fail(p, "all topologies must have the same number of agents")
        if default_n is not None and sizes != {int(default_n)}:
            self.fail(("system", "n"), f"system.n = {default_n} disagrees with the topologies")
        return out

    @staticmethod
    def build_topology(t: Mapping, default_n, rng) -> Topology:
        tid = str(t["id"])
        n = int(t.get("n", default_n if default_n is not None else 0))
        gen = t.get("generator")
        w = float(t.get("weight", 1.0))
        if gen is None:
            return Topology.from_record({**t, "n": n})
        if gen == "path":
            return graph.path_graph(n, t.get("order"), w, id=tid)
        if gen == "cycle":
            return graph.cycle_graph(n, w, id=tid)
        if gen == "star":
            return graph.star_graph(n, int(t.get("center", 1)), w, id=tid)
        if gen == "complete":
            return graph.complete_graph(n, w, id=tid)
        if gen == "circulant":
            return graph.circulant_graph(n, [int(o) for o in t["offsets"]], w, id=tid)
        if gen == "twin-pair":
            twins = tuple(int(x) for x in t["twins"])
            if len(twins) != 2:
                raise ValueError("'twins' must list two agents")
            return graph.twin_pair_graph(n, twins, int(t["hub"]), t.get("backbone"), w, id=tid)
        if gen == "random":
            r = np.random.default_rng(int(t["seed"])) if "seed" in t else rng
            return graph.random_connected_graph(n, r, float(t.get("extra_edge_prob", 0.3)), w, id=tid)
        raise ValueError(f"unknown generator {gen!r}; expected one of {', '.join(GENERATORS)}")

    def parse_schedule(self, b, topologies) -> SwitchingSchedule:
        p = ("system", "schedule")
        s = b.get("schedule")
        if not isinstance(s, dict):
            self.fail(p if "schedule" in b else ("system",), "'system.schedule' must be an object")
        seq = s.get("sequence")
        if not isinstance(seq, list) or not seq:
            self.fail(p + ("sequence",), "schedule needs a nonempty 'sequence' of [id, dwell] pairs")
        pairs = []
        for item in seq:
            if not (isinstance(item, (list, tuple)) and len(item) == 2):
                self.fail(p + ("sequence",), f"schedule entry {item!r} is not an [id, dwell] pair")
            r = str(item[0])
            if r not in topologies:
                self.fail(p + ("sequence",), f"schedule refers to unknown topology '{r}'")
            pairs.append((r, item[1]))
        try:
            return SwitchingSchedule(tuple(pairs), self.get(s, p, "t0", float, 0.0),
                                     self.get(s, p, "periodic", bool, True))
        except (InvalidInputError, TypeError, ValueError) as exc:
            self.fail(p, str(exc))

    def parse_outputs(self, b, n: int) -> OutputConfig:
        p = ("system",)
        mon = b.get("monitored")
        if not isinstance(mon, list) or not mon:
            self.fail(p + ("monitored",) if "monitored" in b else p,
                      "'system.monitored' must be a nonempty list")
        if any(not isinstance(i, int) or not 1 <= i <= n for i in mon):
            self.fail(p + ("monitored",), f"monitored agents must lie in 1..{n}")
        m = len(mon)
        coeffs = {}
        for key, default in (("c1", 0.0), ("c2", 1.0)):
            val = b.get(key, [default] * m)
            if isinstance(val, (int, float)) and not isinstance(val, bool):
                val = [val] * m
            if not isinstance(val, list) or len(val) != m:
                self.fail(p + (key,), f"'{key}' needs {m} coefficients, one per monitored agent")
            coeffs[key] = val
        try:
            return OutputConfig(tuple(mon), tuple(coeffs["c1"]), tuple(coeffs["c2"]))
        except (InvalidInputError, TypeError, ValueError) as exc:
            self.fail(p + ("monitored",), str(exc))

    def parse_attack(self, b, n: int, m: int, schedule, topologies):
        p = ("attack",)
        mode = self.get(b, p, "mode", str, "none")
        if mode not in MODES:
            self.fail(p + ("mode",), f"unknown attack mode '{mode}'; expected one of {', '.join(MODES)}")
        K = b.get("K", [])
        if not isinstance(K, list) or any(not isinstance(k, int) or not 1 <= k <= n for k in K):
            self.fail(p + ("K",), f"'K' must list misbehaving agents in 1..{n}")
        if len(set(K)) != len(K):
            self.fail(p + ("K",), "'K' lists an agent twice")
        T = [str(r) for r in b.get("T", schedule.topology_ids)]
        for r in T:
            if r not in topologies:
                self.fail(p + ("T",), f"attacked topology '{r}' is not defined")
        d = b.get("d", [])
        if d and (not isinstance(d, list) or len(d) != m):
            self.fail(p + ("d",), f"'d' needs {m} coefficients, one per monitored agent")
        try:
            attacker = AttackerConfig(tuple(K), tuple(d), self.get(b, p, "inference_delay", float, 0.0),
                                      self.get(b, p, "pause_lead", float, 0.0),
                                      self.get(b, p, "initial_known", bool, True))
        except (InvalidInputError, TypeError, ValueError) as exc:
            self.fail(p, str(exc))
        kappa = self.get(b, p, "kappa", float)
        if mode == "naive-midstart" and kappa is None:
            self.fail(p + ("mode",), "naive-midstart needs 'kappa'")
        if kappa is not None and kappa < schedule.t0:
            self.fail(p + ("kappa",), "kappa lies before the schedule start")
        explicit = self.parse_policy(b.get("policy"), n, set(K), topologies) if "policy" in b else {}
        if mode != "none" and not K:
            self.fail(p + ("K",) if "K" in b else p, f"attack mode '{mode}' needs misbehaving agents 'K'")
        return attacker, {"mode": mode, "attacked": tuple(T), "kappa": kappa,
                          "free_eta": self.get(b, p, "free_eta", float, DEFAULT_FREE_ETA),
                          "explicit_policy": explicit}

    def parse_policy(self, pol, n: int, K: set[int], topologies) -> dict[str, ZdaEntry]:
        p = ("attack", "policy")
        items = pol if isinstance(pol, list) else [pol]
        out = {}
        for item in items:
            if not isinstance(item, dict):
                self.fail(p, "policy entries must be objects with topology, eta, z0 and g")
            try:
                e = ZdaEntry.from_record(item)
            except (KeyError, TypeError, ValueError) as exc:
                self.fail(p, f"malformed policy entry: {exc}")
            if e.topology not in topologies:
                self.fail(p, f"policy refers to unknown topology '{e.topology}'")
            if e.z0.shape != (2 * n,) or e.g.shape != (n,):
                self.fail(p, f"policy z0 must have length {2 * n} and g length {n}")
            if not set(e.support()) <= K:
                self.fail(p, "policy injection acts on agents outside K")
            out[e.topology] = e
        return out

    def vector(self, b, p, key: str, n: int):
        if key not in b:
            return None
        val = b[key]
        if not isinstance(val, list) or len(val) != n or any(
                isinstance(x, bool) or not isinstance(x, (int, float)) for x in val):
            self.fail(p + (key,), f"'{key}' must list {n} numbers")
        return np.asarray(val, dtype=float)


def bundled_dir() -> Path:
    return Path(__file__).with_name("scenarios")


def bundled(name: str) -> Scenario:
    """Load a scenario shipped with the package by name (``stealth``, ``detection``, ...)."""
    return load(bundled_dir() / f"{name}.json")
