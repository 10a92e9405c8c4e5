"""Weighted undirected topologies, Laplacians and the topology-switching
defense condition.

Agents are labelled ``1..n`` everywhere in the public API; arrays are indexed
from zero internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linalg import DEFAULT_POLICY, InvalidInputError, RankPolicy

# distinct-eigenvalue gap, relative to (1 + lambda_max)
EIG_GAP_TOL = 1e-8
# entries of Q with magnitude above this count as nonzero
Q_ENTRY_TOL = 1e-8
# entries between this and Q_ENTRY_TOL make the verdict uncertain
Q_UNCERTAIN_FLOOR = 1e-10


@dataclass(frozen=True)
class Topology:
    """Undirected graph on agents ``1..n`` with positive edge weights.

    Parallel edges given more than once are rejected rather than summed.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...] = ()
    id: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("a topology needs at least one agent")
        seen = set()
        clean = []
        for e in self.edges:
            if len(e) == 2:
                i, j, w = e[0], e[1], 1.0
            else:
                i, j, w = e
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise InvalidInputError(f"self-loop on agent {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise InvalidInputError(f"edge ({i}, {j}) outside agents 1..{self.n}")
            if not (np.isfinite(w) and w > 0):
                raise InvalidInputError(f"edge ({i}, {j}) needs a positive weight, got {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidInputError(f"duplicate edge {key}")
            seen.add(key)
            clean.append((key[0], key[1], w))
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        object.__setattr__(self, "id", str(self.id))

    def adjacency(self) -> np.ndarray:
        Adj = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            Adj[i - 1, j - 1] = Adj[j - 1, i - 1] = w
        return Adj

    def neighbors(self, i: int) -> set[int]:
        out = set()
        for a, b, _ in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def is_connected(self) -> bool:
        parent = list(range(self.n + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j, _ in self.edges:
            parent[find(i)] = find(j)
        return len({find(i) for i in range(1, self.n + 1)}) == 1

    def relabel(self, perm: dict[int, int], id: str | None = None) -> "Topology":
        """Apply the agent relabelling ``old -> perm[old]`` (identity if missing)."""
        edges = [(perm.get(i, i), perm.get(j, j), w) for i, j, w in self.edges]
        return Topology(self.n, tuple(edges), self.id if id is None else id)

    def to_record(self) -> dict:
        return {"id": self.id, "n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]}

    @classmethod
    def from_record(cls, rec: dict) -> "Topology":
        try:
            n = int(rec["n"])
            edges = tuple(tuple(e) for e in rec.get("edges", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed topology record: {exc}") from exc
        return cls(n, edges, str(rec.get("id", "")))


def laplacian(topology: Topology) -> np.ndarray:
    """Degree-minus-adjacency matrix; row sums are exactly zero."""
    Adj = topology.adjacency()
    L = -Adj
    np.fill_diagonal(L, Adj.sum(axis=1))
    return L


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    Q: np.ndarray


def spectral_decomposition(L) -> SpectralData:
    """Ascending eigenvalues and an orthogonal eigenvector matrix of ``L``.

    Each eigenvector column is signed so its first entry of magnitude above
    1e-12 is positive.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidInputError("Laplacian must be square")
    if not np.all(np.isfinite(L)):
        raise InvalidInputError("Laplacian has non-finite entries")
    if np.max(np.abs(L - L.T), initial=0.0) > 1e-10 * max(1.0, np.abs(L).max(initial=0.0)):
        raise InvalidInputError("Laplacian is not symmetric")
    lam, Q = np.linalg.eigh((L + L.T) / 2)
    for k in range(Q.shape[1]):
        col = Q[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            Q[:, k] = -col
    return SpectralData(lam, Q)


@dataclass(frozen=True)
class DefenseVerdict:
    distinct_eigs: bool
    witness_agents: tuple[int, ...]
    satisfied: bool
    uncertain: bool = False
    min_gap: float = 0.0
    topology_id: str = ""

    def to_record(self) -> dict:
        return {
            "topology": self.topology_id,
            "distinct_eigs": self.distinct_eigs,
            "witness_agents": list(self.witness_agents),
            "satisfied": self.satisfied,
            "uncertain": self.uncertain,
            "min_gap": self.min_gap,
        }


def check_defense_condition(spec: SpectralData, monitored: Sequence[int],
                            policy: RankPolicy = DEFAULT_POLICY,
                            topology_id: str = "") -> DefenseVerdict:
    """Distinct Laplacian eigenvalues and a monitored agent whose eigenvector
    row has no zero entry.

    ``policy`` is accepted for interface symmetry with the other analyses; the
    thresholds used here are the module-level ``EIG_GAP_TOL`` and
    ``Q_ENTRY_TOL``.
    """
    del policy
    lam, Q = np.asarray(spec.eigenvalues), np.asarray(spec.Q)
    n = lam.size
    monitored = list(monitored)
    if not monitored:
        raise InvalidInputError("monitored set must be nonempty")
    if any(not (1 <= i <= n) for i in monitored):
        raise InvalidInputError(f"monitored agents must lie in 1..{n}")
    gaps = np.diff(lam)
    min_gap = float(gaps.min()) if gaps.size else np.inf
    distinct = bool(min_gap > EIG_GAP_TOL * (1.0 + abs(lam[-1])))
    witnesses = []
    uncertain = False
    for i in monitored:
        row = np.abs(Q[i - 1])
        if np.all(row > Q_ENTRY_TOL):
            witnesses.append(i)
        if np.any((row > Q_UNCERTAIN_FLOOR) & (row <= Q_ENTRY_TOL)):
            uncertain = True
    return DefenseVerdict(
        distinct_eigs=distinct,
        witness_agents=tuple(witnesses),
        satisfied=distinct and bool(witnesses),
        uncertain=uncertain,
        min_gap=min_gap if np.isfinite(min_gap) else 0.0,
        topology_id=topology_id,
    )


def defense_verdict(topology: Topology, monitored: Sequence[int]) -> DefenseVerdict:
    """Convenience wrapper: Laplacian, spectrum and condition in one call."""
    return check_defense_condition(spectral_decomposition(laplacian(topology)),
                                   monitored, topology_id=topology.id)


# --- generators -------------------------------------------------------------

def _chain(order: Sequence[int], w: float = 1.0) -> list[tuple[int, int, float]]:
    return [(a, b, w) for a, b in zip(order[:-1], order[1:])]


def path_graph(n: int, order: Sequence[int] | None = None, weight: float = 1.0,
               id: str = "") -> Topology:
    """Path visiting agents in ``order`` (default ``1..n``)."""
    order = list(range(1, n + 1)) if order is None else list(order)
    if sorted(order) != list(range(1, n + 1)):
        raise InvalidInputError("order must be a permutation of 1..n")
    return Topology(n, tuple(_chain(order, weight)), id or f"path{n}")


def cycle_graph(n: int, weight: float = 1.0, id: str = "") -> Topology:
    if n < 3:
        raise InvalidInputError("a cycle needs at least 3 agents")
    edges = _chain(list(range(1, n + 1)), weight) + [(n, 1, weight)]
    return Topology(n, tuple(edges), id or f"cycle{n}")


def star_graph(n: int, center: int = 1, weight: float = 1.0, id: str = "") -> Topology:
    edges = [(center, j, weight) for j in range(1, n + 1) if j != center]
    return Topology(n, tuple(edges), id or f"star{n}")


def complete_graph(n: int, weight: float = 1.0, id: str = "") -> Topology:
    edges = [(i, j, weight) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    return Topology(n, tuple(edges), id or f"complete{n}")


def circulant_graph(n: int, offsets: Sequence[int], weight: float = 1.0, id: str = "") -> Topology:
    """Agent ``i`` linked to ``i ± o (mod n)`` for every offset ``o``."""
    pairs = set()
    for i in range(n):
        for o in offsets:
            j = (i + int(o)) % n
            if j != i:
                pairs.add((min(i, j) + 1, max(i, j) + 1))
    return Topology(n, tuple((a, b, weight) for a, b in sorted(pairs)), id or f"circulant{n}")


def twin_pair_graph(n: int, twins: tuple[int, int], hub: int,
                    backbone: Sequence[int] | None = None, weight: float = 1.0,
                    id: str = "") -> Topology:
    """Connected graph in which the two ``twins`` are leaves on a common ``hub``.

    The remaining agents form a path in ``backbone`` order (default: ascending
    labels, skipping the twins), which must contain ``hub``. With unit weight
    the antisymmetric vector ``e_a - e_b`` on the twins is a Laplacian
    eigenvector with eigenvalue ``weight``.
    """
    a, b = twins
    if len({a, b, hub}) != 3:
        raise InvalidInputError("twins and hub must be three distinct agents")
    rest = [i for i in range(1, n + 1) if i not in (a, b)]
    backbone = rest if backbone is None else list(backbone)
    if sorted(backbone) != rest:
        raise InvalidInputError("backbone must list every non-twin agent exactly once")
    edges = _chain(backbone, weight) + [(hub, a, weight), (hub, b, weight)]
    return Topology(n, tuple(edges), id or f"twins{a}{b}")


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3,
                           weight: float | tuple[float, float] = 1.0, id: str = "") -> Topology:
    """Random spanning tree plus independent extra edges.

    ``weight`` is either a constant or a ``(low, high)`` range for uniform
    random weights.
    """
    order = [int(x) + 1 for x in rng.permutation(n)]
    pairs = set()
    for k in range(1, n):
        parent = order[int(rng.integers(0, k))]
        pairs.add((min(parent, order[k]), max(parent, order[k])))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if (i, j) not in pairs and rng.random() < extra_edge_prob:
                pairs.add((i, j))

    def w():
        if isinstance(weight, tuple):
            return float(rng.uniform(*weight))
        return float(weight)

    edges = tuple((i, j, w()) for i, j in sorted(pairs))
    return Topology(n, edges, id or "random")


def all_connected_graphs(n: int, weight: float = 1.0) -> Iterable[Topology]:
    """Every connected labelled graph on ``n`` agents (2^(n(n-1)/2) candidates)."""
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    for mask in range(1 << len(pairs)):
        edges = tuple((i, j, weight) for k, (i, j) in enumerate(pairs) if mask >> k & 1)
        topo = Topology(n, edges, f"g{mask}")
        if topo.is_connected():
            yield topo
