"""Switched state-space model of the second-order consensus network.

State ordering is ``z = [x_1..x_n, v_1..v_n]``. The attack enters through
the velocity rows only, so the full injection vector is ``[0; g]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import Topology, laplacian
from .linalg import InvalidInputError


class ScheduleRangeError(InvalidInputError):
    """Requested time lies outside a finite switching schedule."""


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant switching signal.

    ``sequence`` lists ``(topology_id, dwell_time)`` pairs. With ``periodic``
    the sequence repeats forever; otherwise the signal ends after the last
    dwell.
    """

    sequence: tuple[tuple[str, float], ...]
    t0: float = 0.0
    periodic: bool = True

    def __post_init__(self):
        seq = tuple((str(r), float(tau)) for r, tau in self.sequence)
        if not seq:
            raise InvalidInputError("switching schedule is empty")
        for r, tau in seq:
            if not (math.isfinite(tau) and tau > 0):
                raise InvalidInputError(f"dwell time for topology {r!r} must be positive")
        object.__setattr__(self, "sequence", seq)
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def period(self) -> float:
        return sum(tau for _, tau in self.sequence)

    @property
    def end(self) -> float:
        return math.inf if self.periodic else self.t0 + self.period

    @property
    def min_dwell(self) -> float:
        return min(tau for _, tau in self.sequence)

    @property
    def topology_ids(self) -> list[str]:
        return list(dict.fromkeys(r for r, _ in self.sequence))

    def intervals(self, horizon: float) -> list[tuple[str, float, float]]:
        """Active intervals ``(id, t_k, t_{k+1})`` that start before ``t0 + horizon``."""
        stop = self.t0 + horizon
        out = []
        k = 0
        L = len(self.sequence)
        while self.periodic or k < L:
            hi = self._boundary(k + 1)
            out.append((self.sequence[k % L][0], self._boundary(k), hi))
            k += 1
            if hi >= stop:
                break
        return out

    def _boundary(self, k: int) -> float:
        """Switch time ``t_k`` (``t_0`` for k = 0).

        Whole periods are added separately from the in-period offset so long
        periodic runs do not accumulate summation drift.
        """
        whole, part = divmod(k, len(self.sequence))
        offset = sum(tau for _, tau in self.sequence[:part])
        return self.t0 + whole * self.period + offset

    def switch_times(self, horizon: float) -> list[float]:
        """Switch instants strictly inside ``(t0, t0 + horizon]``."""
        return [a for _, a, _ in self.intervals(horizon)[1:] if a <= self.t0 + horizon]


def active_topology(schedule: SwitchingSchedule, t: float) -> tuple[str, tuple[float, float]]:
    """Topology active at ``t`` and its interval ``[t_k, t_{k+1})``."""
    if t < schedule.t0:
        raise ScheduleRangeError(f"t = {t} precedes schedule start {schedule.t0}")
    if t >= schedule.end:
        raise ScheduleRangeError(f"t = {t} is beyond the end of the finite schedule ({schedule.end})")
    L = len(schedule.sequence)
    rel = t - schedule.t0
    periods = int(rel // schedule.period) if schedule.periodic else 0
    k = periods * L
    while True:
        lo, hi = schedule._boundary(k), schedule._boundary(k + 1)
        if t < lo:
            k -= 1
            continue
        if t < hi:
            return schedule.sequence[k % L][0], (lo, hi)
        k += 1


@dataclass(frozen=True)
class OutputConfig:
    """Monitored agents ``1..|M|`` with position/velocity output coefficients."""

    monitored: tuple[int, ...]
    c1: tuple[float, ...]
    c2: tuple[float, ...]

    def __post_init__(self):
        mon = tuple(int(i) for i in self.monitored)
        c1 = tuple(float(c) for c in self.c1)
        c2 = tuple(float(c) for c in self.c2)
        if not mon:
            raise InvalidInputError("at least one agent must be monitored")
        if list(mon) != list(range(1, len(mon) + 1)):
            raise InvalidInputError(
                f"monitored agents must be 1..|M| in increasing order, got {list(mon)}")
        if len(c1) != len(mon) or len(c2) != len(mon):
            raise InvalidInputError("c1 and c2 need one coefficient per monitored agent")
        for a, b in zip(c1, c2):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise InvalidInputError("output coefficients must be finite")
            if a == 0 and b == 0:
                raise InvalidInputError("each monitored agent needs a nonzero coefficient")
        object.__setattr__(self, "monitored", mon)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @classmethod
    def uniform(cls, n_monitored: int, c1: float, c2: float) -> "OutputConfig":
        return cls(tuple(range(1, n_monitored + 1)), (c1,) * n_monitored, (c2,) * n_monitored)

    @property
    def case(self) -> str:
        """Coefficient pattern: velocity-only, position-only, partial-equal or partial-general."""
        if all(a == 0 and b != 0 for a, b in zip(self.c1, self.c2)):
            return "velocity-only"
        if all(a != 0 and b == 0 for a, b in zip(self.c1, self.c2)):
            return "position-only"
        if all(a != 0 and a == b for a, b in zip(self.c1, self.c2)):
            return "partial-equal"
        return "partial-general"


@dataclass(frozen=True)
class AttackerConfig:
    misbehaving: tuple[int, ...] = ()
    d: tuple[float, ...] = ()
    inference_delay: float = 0.0
    pause_lead: float = 0.0
    initial_known: bool = True

    def __post_init__(self):
        K = tuple(sorted({int(k) for k in self.misbehaving}))
        object.__setattr__(self, "misbehaving", K)
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        if self.inference_delay < 0 or self.pause_lead < 0:
            raise InvalidInputError("attacker delays must be non-negative")

    def window_budget(self) -> float:
        return self.inference_delay + self.pause_lead


def assemble_A(L) -> np.ndarray:
    """``[[0, I], [-L, -I]]`` for the Laplacian ``L``."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -L
    A[n:, n:] = -np.eye(n)
    return A


def assemble_output(cfg: OutputConfig, attacker: AttackerConfig | None, n: int):
    """Output matrix ``C`` and attack feed-through ``D``, both ``|M| x 2n``.

    Row ``i`` of ``C`` has ``c_i1`` in column ``i`` and ``c_i2`` in column
    ``n + i``. ``D`` carries ``d_i`` in column ``n + i``, so it only acts when
    monitored agent ``i`` is also misbehaving.
    """
    m = len(cfg.monitored)
    if max(cfg.monitored) > n:
        raise InvalidInputError(f"monitored agent {max(cfg.monitored)} exceeds n = {n}")
    C = np.zeros((m, 2 * n))
    D = np.zeros((m, 2 * n))
    for row, i in enumerate(cfg.monitored):
        C[row, i - 1] = cfg.c1[row]
        C[row, n + i - 1] = cfg.c2[row]
    d = attacker.d if attacker is not None else ()
    if d:
        if len(d) != m:
            raise InvalidInputError("attacker d needs one coefficient per monitored agent")
        for row, i in enumerate(cfg.monitored):
            D[row, n + i - 1] = d[row]
    return C, D


def injection_matrix(n: int, K: Sequence[int]) -> np.ndarray:
    """``2n x |K|`` matrix mapping per-agent injections into velocity rows."""
    B = np.zeros((2 * n, len(K)))
    for col, k in enumerate(K):
        if not 1 <= k <= n:
            raise InvalidInputError(f"misbehaving agent {k} outside 1..{n}")
        B[n + k - 1, col] = 1.0
    return B


@dataclass
class SwitchedSystem:
    n: int
    A: Mapping[str, np.ndarray]
    C: np.ndarray
    D: np.ndarray
    schedule: SwitchingSchedule
    topologies: Mapping[str, Topology] = field(default_factory=dict)

    @property
    def state_dim(self) -> int:
        return 2 * self.n

    def A_at(self, t: float) -> np.ndarray:
        return self.A[active_topology(self.schedule, t)[0]]

    @classmethod
    def build(cls, topologies: Sequence[Topology] | Mapping[str, Topology],
              schedule: SwitchingSchedule, outputs: OutputConfig,
              attacker: AttackerConfig | None = None) -> "SwitchedSystem":
        if not isinstance(topologies, Mapping):
            topologies = {t.id: t for t in topologies}
        sizes = {t.n for t in topologies.values()}
        if len(sizes) != 1:
            raise InvalidInputError("all topologies must have the same number of agents")
        n = sizes.pop()
        missing = [r for r in schedule.topology_ids if r not in topologies]
        if missing:
            raise InvalidInputError(f"schedule refers to unknown topologies {missing}")
        A = {r: assemble_A(laplacian(t)) for r, t in topologies.items()}
        C, D = assemble_output(outputs, attacker, n)
        return cls(n, A, C, D, schedule, dict(topologies))
