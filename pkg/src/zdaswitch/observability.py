"""Defender side: observability matrices, the unobservable subspace of a
switching sequence and detectability classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import Topology, defense_verdict, laplacian
from .linalg import (DEFAULT_POLICY, RankPolicy, Subspace, matrix_exponential,
                     nullspace_basis, subspace_distance, subspace_intersection)
from .sysmodel import (AttackerConfig, OutputConfig, SwitchingSchedule, assemble_A,
                       assemble_output)


def _powers(A, C, first: int, last: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    blocks = []
    CA = C @ np.linalg.matrix_power(A, first)
    for _ in range(first, last + 1):
        blocks.append(CA)
        CA = CA @ A
    return np.vstack(blocks)


def obs_matrix(A, C) -> np.ndarray:
    """Rows ``C A^p`` for ``p = 0 .. N-1`` where ``N = dim A``."""
    return _powers(A, C, 0, np.shape(A)[0] - 1)


def obs_matrix_paused(A, C) -> np.ndarray:
    """Rows ``C A^p`` for ``p = 1 .. N``: what a held output can still reveal."""
    return _powers(A, C, 1, np.shape(A)[0])


def _outside(A: np.ndarray, N: Subspace) -> np.ndarray:
    """``(I - P_N) A``: the part of ``A v`` that leaves ``N``."""
    return A - N.basis @ (N.basis.T @ A)


def _coefficient_kernel(M: np.ndarray, scale: float, policy: RankPolicy) -> np.ndarray:
    _, s, Vh = np.linalg.svd(M, full_matrices=True)
    s_full = np.zeros(M.shape[1])
    s_full[: s.size] = s
    return Vh[s_full <= policy.cutoff(scale)].T


def obs_kernel(A, C, policy: RankPolicy = DEFAULT_POLICY, paused: bool = False) -> Subspace:
    """``ker O`` (or ``ker O~`` with ``paused``) without forming matrix powers.

    ``ker O`` is the largest ``A``-invariant subspace inside ``ker C``,
    reached by repeatedly keeping the vectors that ``A`` maps back into the
    current subspace. ``ker O~`` is its preimage under ``A``. Every step works
    with orthonormal bases, so high powers of ``A`` never enter the rank
    decisions as they do in the stacked matrices.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    dim = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1.0)
    N = nullspace_basis(C, policy) if C.shape[0] else Subspace.full(dim)
    while N.dim:
        coeff = _coefficient_kernel(_outside(A, N) @ N.basis, scale, policy)
        if coeff.shape[1] == N.dim:
            break
        N = Subspace.from_vectors(N.basis @ coeff, dim, policy)
    if paused:
        return Subspace(dim, _coefficient_kernel(_outside(A, N), scale, policy))
    return N


def unobservable_subspace_sequence(plan: Sequence[tuple], C,
                                   policy: RankPolicy = DEFAULT_POLICY) -> Subspace:
    """States invisible over the whole sequence ``[(A_1, tau_1), ..., (A_m, tau_m)]``.

    Backward recursion: ``N_m = ker O_m`` and
    ``N_q = ker O_q ∩ e^{-A_q tau_q} N_{q+1}``; returns ``N_1``.
    """
    plan = list(plan)
    if not plan:
        raise ValueError("plan needs at least one (A, tau) pair")
    N = None
    for A, tau in reversed(plan):
        ker = obs_kernel(A, C, policy)
        if N is None:
            N = ker
        else:
            N = subspace_intersection(ker, N.map(matrix_exponential(A, -tau), policy), policy)
    return N


def closed_form_kernel(case: str, n: int) -> Subspace | None:
    """Limit unobservable subspace for the three closed-form output cases."""
    if case == "velocity-only":
        v = np.concatenate([np.ones(n), np.zeros(n)])
    elif case == "position-only":
        return Subspace.zero(2 * n)
    elif case == "partial-equal":
        v = np.concatenate([np.ones(n), -np.ones(n)])
    else:
        return None
    return Subspace.from_vectors(v)


def limit_unobservable_subspace(A: Mapping[str, np.ndarray], schedule: SwitchingSchedule, C,
                                policy: RankPolicy = DEFAULT_POLICY, max_periods: int | None = None):
    """Run the recursion over growing prefixes of the schedule until it settles.

    Periodic schedules are extended one period at a time and stop once the
    dimension has not changed for two consecutive periods. A finite schedule
    is used whole. Returns ``(subspace, periods_used)``.
    """
    seq = [(A[r], tau) for r, tau in schedule.sequence]
    if not schedule.periodic:
        return unobservable_subspace_sequence(seq, C, policy), 1
    dim_A = next(iter(A.values())).shape[0]
    max_periods = max_periods or dim_A + 3
    dims = []
    N = None
    for p in range(1, max_periods + 1):
        N = unobservable_subspace_sequence(seq * p, C, policy)
        dims.append(N.dim)
        if len(dims) >= 3 and dims[-1] == dims[-2] == dims[-3]:
            return N, p
    return N, max_periods


def _signed(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


@dataclass
class DetectabilityReport:
    case: str
    N_infinity: Subspace
    detectable: bool
    conditions_used: dict = field(default_factory=dict)
    closed_form_match: bool | None = None
    failing_topologies: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "case": self.case,
            "detectable": self.detectable,
            "N_infinity": {
                "dim": self.N_infinity.dim,
                "basis": [_signed(col).tolist() for col in self.N_infinity.basis.T],
            },
            "closed_form_match": self.closed_form_match,
            "failing_topologies": self.failing_topologies,
            "conditions": self.conditions_used,
        }


def first_resume_after_start(schedule: SwitchingSchedule, attacker: AttackerConfig) -> float:
    return schedule.t0 + (0.0 if attacker.initial_known else attacker.inference_delay)


def classify_detectability(cfg: OutputConfig, attacker: AttackerConfig,
                           topologies: Mapping[str, Topology], schedule: SwitchingSchedule,
                           policy: RankPolicy = DEFAULT_POLICY, D=None) -> DetectabilityReport:
    """Guaranteed detectability of the intermittent attack under the defense strategy.

    ``detectable`` means *guaranteed*: it is false when any scheduled topology
    violates the defense condition, in the partial-equal case when the attack
    can start at ``t0`` with a nonzero sensor channel, and for output patterns
    without a closed-form result.
    """
    ids = schedule.topology_ids
    n = topologies[ids[0]].n
    C, D_built = assemble_output(cfg, attacker, n)
    D = D_built if D is None else np.asarray(D, dtype=float)
    A = {r: assemble_A(laplacian(topologies[r])) for r in ids}

    verdicts = {r: defense_verdict(topologies[r], cfg.monitored) for r in ids}
    failing = [r for r, v in verdicts.items() if not v.satisfied]
    N_inf, periods = limit_unobservable_subspace(A, schedule, C, policy)

    case = cfg.case
    expected = closed_form_kernel(case, n)
    match = None
    if expected is not None:
        match = bool(subspace_distance(N_inf, expected) < 1e-8)

    xi0 = first_resume_after_start(schedule, attacker)
    d_zero = bool(np.all(D == 0))
    eq24 = bool(xi0 > schedule.t0 or d_zero)
    if failing:
        detectable = False
    elif case in ("velocity-only", "position-only"):
        detectable = True
    elif case == "partial-equal":
        detectable = eq24
    else:
        detectable = False
    conditions = {
        "defense": {r: v.to_record() for r, v in verdicts.items()},
        "first_resume_after_t0": bool(xi0 > schedule.t0),
        "D_zero": d_zero,
        "start_or_sensor_condition": eq24,
        "periods_used": periods,
    }
    return DetectabilityReport(case, N_inf, detectable, conditions, match, failing)
