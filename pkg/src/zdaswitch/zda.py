"""Attacker side: zero-dynamics attack synthesis and the intermittent
pause / update / resume plan.

The attacker's deviation ``d = z_attacked - z_nominal`` obeys
``d' = A_sigma d + [0; g(t)]`` independently of the nominal trajectory, so
the whole intermittent plan (including the policy updates made after each
switch) can be resolved ahead of simulation by propagating ``d`` alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linalg import (DEFAULT_POLICY, InvalidInputError, RankPolicy,
                     matrix_exponential, pencil_kernel,
                     pencil_zeros, subspace_intersection)
from .observability import obs_kernel
from .sysmodel import (AttackerConfig, SwitchedSystem, SwitchingSchedule,
                       active_topology, injection_matrix)

MODES = ("none", "zda", "intermittent-zda", "naive-midstart")

# growth rate used when every eta admits a zero (degenerate pencil)
DEFAULT_FREE_ETA = 0.5


class InfeasibleScheduleError(InvalidInputError):
    """No admissible attack window fits an interval the attacker must use."""


@dataclass(frozen=True)
class ZdaEntry:
    """One zero ``(eta, z0, g)``: ``z0`` has length ``2n``, ``g`` length ``n``."""

    topology: str
    eta: float
    z0: np.ndarray
    g: np.ndarray

    def injection(self) -> np.ndarray:
        """Full ``2n`` injection vector ``[0; g]``."""
        return np.concatenate([np.zeros_like(self.g), self.g])

    def support(self) -> tuple[int, ...]:
        return tuple(int(i) + 1 for i in np.flatnonzero(self.g))

    def to_record(self) -> dict:
        return {"topology": self.topology, "eta": float(self.eta),
                "z0": [float(x) for x in self.z0], "g": [float(x) for x in self.g]}

    @classmethod
    def from_record(cls, rec: Mapping, topology: str | None = None) -> "ZdaEntry":
        return cls(str(rec.get("topology", topology or "")), float(rec["eta"]),
                   np.asarray(rec["z0"], dtype=float), np.asarray(rec["g"], dtype=float))


@dataclass
class ZdaPolicy:
    entries: dict[str, ZdaEntry]
    support: tuple[int, ...]

    def to_record(self) -> dict:
        return {"support": list(self.support),
                "entries": {r: e.to_record() for r, e in self.entries.items()}}


def pencil_residual(A, C, D, entry: ZdaEntry) -> float:
    """``||P_r [z0; -g_full]||`` for the full-injection pencil."""
    A, C, D = (np.asarray(X, dtype=float) for X in (A, C, D))
    gfull = entry.injection()
    top = (entry.eta * np.eye(A.shape[0]) - A) @ entry.z0 - gfull
    bottom = -C @ entry.z0 - D @ gfull
    return float(np.linalg.norm(np.concatenate([top, bottom])))


def _normalize(z0: np.ndarray, g: np.ndarray):
    n = g.size
    pos = z0[:n]
    ref = pos if np.max(np.abs(pos)) > 1e-12 else z0
    scale = np.max(np.abs(ref))
    # sign: the highest-index entry of maximal magnitude is made positive
    idx = np.flatnonzero(np.abs(ref) >= scale * (1 - 1e-9))[-1]
    s = np.sign(ref[idx]) / scale
    z0, g = z0 * s, g * s
    z0[np.abs(z0) < 1e-14] = 0.0
    g[np.abs(g) < 1e-14] = 0.0
    return z0, g


def _attack_witness(A, B, C, Deff, eta: float, policy: RankPolicy):
    """Kernel vector at ``eta`` with the largest attack-input part, or None.

    Kernel directions whose input part vanishes (unobservable modes that need
    no injection) are not attacks and are never selected.
    """
    ker = pencil_kernel(A, B, C, Deff, eta, policy)
    n2 = A.shape[0]
    if ker.dim == 0 or B.shape[1] == 0:
        return None
    _, s, Vh = np.linalg.svd(ker.basis[n2:])
    if s[0] <= 1e-8:
        return None
    v = ker.basis @ Vh[0]
    z0, in_dir = v[:n2], v[n2:]
    if np.linalg.norm(z0) <= 1e-10:
        return None
    return z0, -(B @ in_dir)[n2 // 2:]


def synthesize_zda(A, C, D, K: Sequence[int], policy: RankPolicy = DEFAULT_POLICY,
                   topology: str = "", free_eta: float = DEFAULT_FREE_ETA) -> list[ZdaEntry]:
    """Real zeros usable as attacks injected through the agents in ``K``.

    Entries are ordered by decreasing ``|eta|`` then by support size. When the
    pencil is rank deficient for every ``eta`` the growth rate is a free
    choice and a single entry at ``free_eta`` is returned.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0] // 2
    K = sorted({int(k) for k in K})
    if not K:
        return []
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    B = injection_matrix(n, K)
    Deff = D @ B
    zs = pencil_zeros(A, B, C, Deff, policy)
    etas = [free_eta] if zs.degenerate else [z.eta.real for z in zs if z.eta.imag == 0.0]
    entries = []
    for eta in etas:
        w = _attack_witness(A, B, C, Deff, eta, policy)
        if w is None:
            continue
        z0, g = _normalize(*w)
        g[[i for i in range(n) if i + 1 not in K]] = 0.0
        entries.append(ZdaEntry(topology, float(eta), z0, g))
    entries.sort(key=lambda e: (-abs(e.eta), len(e.support())))
    return entries


def select_entry(entries: Sequence[ZdaEntry]) -> ZdaEntry | None:
    return entries[0] if entries else None


# --- intermittent schedule --------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Attack window ``[xi, zeta)`` inside active interval ``k``."""

    k: int
    topology: str
    t_start: float
    t_end: float
    xi: float
    zeta: float


@dataclass
class IntermittentSchedule:
    windows: list[Window] = field(default_factory=list)

    def to_record(self) -> list[dict]:
        return [{"k": w.k, "topology": w.topology, "interval": [w.t_start, w.t_end],
                 "xi": w.xi, "zeta": w.zeta} for w in self.windows]


def plan_intermittent(schedule: SwitchingSchedule, attacker: AttackerConfig,
                      attacked_topologies, horizon: float) -> IntermittentSchedule:
    """Resume ``inference_delay`` after each switch, pause ``pause_lead`` before the next.

    The first interval resumes at ``t0`` when the attacker knows the initial
    topology.
    """
    T = set(str(r) for r in attacked_topologies)
    if not T:
        return IntermittentSchedule([])
    windows = []
    for k, (r, a, b) in enumerate(schedule.intervals(horizon)):
        if r not in T:
            continue
        xi = a if (k == 0 and attacker.initial_known) else a + attacker.inference_delay
        zeta = b - attacker.pause_lead
        if not xi < zeta:
            raise InfeasibleScheduleError(
                f"interval {k} [{a}, {b}) of topology {r!r} leaves no attack window "
                f"(inference_delay={attacker.inference_delay}, pause_lead={attacker.pause_lead})")
        windows.append(Window(k, r, a, b, xi, zeta))
    return IntermittentSchedule(windows)


# --- feasibility ------------------------------------------------------------

def feasibility_check(z0, plan: Sequence[tuple], C, policy: RankPolicy = DEFAULT_POLICY,
                      tol: float = 1e-7) -> bool:
    """Whether ``z0`` lies in both recursively computed admissible subspaces.

    ``plan`` lists ``(A_q, tau_q, window_length_q)`` for the intervals in
    order; a ``None`` window length means the interval has no attack window
    and the flow runs for the full dwell. The zero vector is trivially
    admissible.
    """
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    if not plan:
        raise InvalidInputError("feasibility plan is empty")
    if np.linalg.norm(z0) == 0:
        return True
    spaces = admissible_subspaces(plan, C, policy)
    both = subspace_intersection(*spaces, policy)
    return both.contains(z0, tol)


def admissible_subspaces(plan: Sequence[tuple], C, policy: RankPolicy = DEFAULT_POLICY):
    """Backward recursion for the admissible start sets (live, paused)."""
    C = np.asarray(C, dtype=float)
    hat = tilde = None
    for A, tau, wlen in reversed(list(plan)):
        A = np.asarray(A, dtype=float)
        k_live = obs_kernel(A, C, policy)
        k_paused = obs_kernel(A, C, policy, paused=True)
        if hat is None:
            hat, tilde = k_live, k_paused
            continue
        flow = matrix_exponential(A, -(tau - (wlen or 0.0)))
        hat = subspace_intersection(k_live, hat.map(flow, policy), policy)
        tilde = subspace_intersection(k_paused, tilde.map(flow, policy), policy)
    return hat, tilde


def feasibility_plan(system: SwitchedSystem, ischedule: IntermittentSchedule,
                     horizon: float, start_k: int = 0) -> list[tuple]:
    """``(A, tau, window_length)`` triples for intervals ``start_k`` onward."""
    wins = {w.k: w for w in ischedule.windows}
    plan = []
    for k, (r, a, b) in enumerate(system.schedule.intervals(horizon)):
        if k < start_k:
            continue
        w = wins.get(k)
        plan.append((system.A[r], b - a, (w.zeta - w.xi) if w else None))
    return plan


# --- resolved attack plan ---------------------------------------------------

@dataclass(frozen=True)
class ActiveWindow:
    xi: float
    zeta: float
    topology: str
    eta: float
    g: np.ndarray
    deviation: np.ndarray
    jump: bool = False
    k: int = -1


@dataclass
class AttackPlan:
    """Fully resolved injection schedule; pure function of time via :meth:`signals`."""

    n: int
    D: np.ndarray
    mode: str
    windows: list[ActiveWindow] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    falsify_initial: np.ndarray | None = None

    def __post_init__(self):
        self._held = []
        total = np.zeros(self.D.shape[0])
        for w in self.windows:
            if math.isfinite(w.zeta):
                gz = w.g * math.exp(w.eta * (w.zeta - w.xi))
                total = total + self.D[:, self.n:] @ gz
            self._held.append(total.copy())

    @property
    def jumps(self) -> list[tuple[float, np.ndarray]]:
        return [(w.xi, w.deviation) for w in self.windows if w.jump]

    def breakpoints(self) -> list[float]:
        pts = []
        for w in self.windows:
            pts.append(w.xi)
            if math.isfinite(w.zeta):
                pts.append(w.zeta)
        return pts

    def window_at(self, t: float) -> int | None:
        for i, w in enumerate(self.windows):
            if w.xi <= t < w.zeta:
                return i
        return None

    def held_before(self, t: float) -> np.ndarray:
        """Output injection held after the last pause at or before ``t``."""
        held = np.zeros(self.D.shape[0])
        for i, w in enumerate(self.windows):
            if w.zeta <= t:
                held = self._held[i]
        return held

    def signals(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return attack_signals(t, self)

    def forcing(self, t: float):
        """``(g, eta, phase)`` so the input on the window is ``g e^{eta (s - t)} phase``."""
        i = self.window_at(t)
        if i is None:
            return None
        w = self.windows[i]
        return w.g, w.eta, math.exp(w.eta * (t - w.xi))


def attack_signals(t: float, plan: AttackPlan) -> tuple[np.ndarray, np.ndarray]:
    """Input injection (length ``n``) and output injection (length ``|M|``) at ``t``.

    Inside a window the input is ``g e^{eta (t - xi)}`` and the output
    injection adds ``D`` times it to the held history; outside windows the
    input is exactly zero and the output holds the running sum of ``D``
    times the injection at each pause instant.
    """
    held = plan.held_before(t)
    i = plan.window_at(t)
    if i is None:
        return np.zeros(plan.n), held
    w = plan.windows[i]
    g = w.g * math.exp(w.eta * (t - w.xi))
    return g, held + plan.D[:, plan.n:] @ g


def kernel_partner(dev, A, C, D, K: Sequence[int], tol: float = 1e-8):
    """Growth rate and injection that keep the current deviation a zero direction.

    Returns ``(eta, g)`` or None when ``dev`` cannot be continued as a
    zero-dynamics trajectory through agents ``K``.
    """
    dev = np.asarray(dev, dtype=float)
    n = dev.size // 2
    dx, dv = dev[:n], dev[n:]
    scale = np.linalg.norm(dev)
    if scale == 0 or np.linalg.norm(dx) <= tol * scale:
        return None
    eta = float(dx @ dv / (dx @ dx))
    if np.linalg.norm(dv - eta * dx) > tol * scale:
        return None
    gfull = (eta * np.eye(2 * n) - A) @ dev
    g = gfull[n:]
    outside = [i for i in range(n) if i + 1 not in set(K)]
    gscale = max(scale, np.linalg.norm(g))
    if outside and np.max(np.abs(g[outside])) > tol * gscale:
        return None
    if C.shape[0] and np.linalg.norm(C @ dev + D @ gfull) > tol * gscale:
        return None
    g = g.copy()
    g[outside] = 0.0
    return eta, g


def _flow(dev, system: SwitchedSystem, a: float, b: float) -> np.ndarray:
    """Propagate an unforced deviation from ``a`` to ``b`` across switches."""
    if b <= a:
        return dev
    t = a
    for r, lo, hi in system.schedule.intervals(b - system.schedule.t0):
        if hi <= t:
            continue
        seg_end = min(hi, b)
        if seg_end > t:
            dev = matrix_exponential(system.A[r], seg_end - t) @ dev
            t = seg_end
        if t >= b:
            break
    return dev


def build_attack_plan(system: SwitchedSystem, policy: ZdaPolicy, mode: str,
                      horizon: float, ischedule: IntermittentSchedule | None = None,
                      kappa: float | None = None, tol: float = 1e-8) -> AttackPlan:
    """Resolve windows, updates and jumps for ``mode``.

    * ``zda``: the classic attack, launched at ``t0`` with the initial
      topology's entry and never paused or updated.
    * ``intermittent-zda``: windows from ``ischedule``; the first window uses
      the policy entry for its topology, later windows re-derive ``(eta, g)``
      from the propagated deviation (:func:`kernel_partner`) and are skipped
      when no partner exists.
    * ``naive-midstart``: the classic attack started at ``kappa`` by forcing
      the state deviation to ``z0`` there.

    A first window that opens after ``t0`` cannot falsify the initial data and
    is realized as a state jump.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown attack mode {mode!r}")
    n = system.n
    plan = AttackPlan(n=n, D=np.asarray(system.D, dtype=float), mode=mode)
    if mode == "none":
        return plan
    t0 = system.schedule.t0
    K = policy.support
    if mode in ("zda", "naive-midstart"):
        start = t0 if mode == "zda" else float(kappa if kappa is not None else t0)
        r, _ = active_topology(system.schedule, start)
        entry = policy.entries.get(r)
        if entry is None:
            plan.skipped.append({"k": 0, "topology": r, "time": start,
                                 "reason": "no zero for the active topology"})
            return plan
        jump = start > t0
        w = ActiveWindow(start, math.inf, r, entry.eta, entry.g, entry.z0, jump=jump, k=0)
        plan = AttackPlan(n=n, D=plan.D, mode=mode, windows=[w],
                          falsify_initial=None if jump else entry.z0)
        return plan

    if ischedule is None:
        raise InvalidInputError("intermittent-zda needs an intermittent schedule")
    wins = {w.k: w for w in ischedule.windows}
    dev = np.zeros(2 * n)
    t = t0
    started = False
    active: list[ActiveWindow] = []
    skipped: list[dict] = []
    falsify = None
    for k, (r, a, b) in enumerate(system.schedule.intervals(horizon)):
        w = wins.get(k)
        if w is None:
            continue
        if w.xi >= t0 + horizon:
            break
        if not started:
            entry = policy.entries.get(r)
            if entry is None:
                skipped.append({"k": k, "topology": r, "time": w.xi,
                                "reason": "no zero for this topology"})
                continue
            eta, g = entry.eta, entry.g
            dev = entry.z0.copy()
            jump = w.xi > t0
            if not jump:
                falsify = entry.z0.copy()
            started = True
        else:
            dev = _flow(dev, system, t, w.xi)
            partner = kernel_partner(dev, system.A[r], system.C, system.D, K, tol)
            if partner is None:
                skipped.append({"k": k, "topology": r, "time": w.xi,
                                "reason": "deviation has no kernel partner"})
                t = w.xi
                continue
            eta, g = partner
            jump = False
        active.append(ActiveWindow(w.xi, w.zeta, r, eta, g, dev.copy(), jump=jump, k=k))
        dev = dev * math.exp(eta * (w.zeta - w.xi))
        t = w.zeta
    return AttackPlan(n=n, D=plan.D, mode=mode, windows=active, skipped=skipped,
                      falsify_initial=falsify)


def synthesize_policy(system: SwitchedSystem, K: Sequence[int], topologies=None,
                      policy: RankPolicy = DEFAULT_POLICY,
                      free_eta: float = DEFAULT_FREE_ETA) -> tuple[ZdaPolicy, dict[str, str]]:
    """Best entry per topology plus a reason for each topology without one."""
    ids = list(topologies) if topologies is not None else system.schedule.topology_ids
    entries, reasons = {}, {}
    for r in ids:
        found = synthesize_zda(system.A[r], system.C, system.D, K, policy,
                               topology=r, free_eta=free_eta)
        if found:
            entries[r] = found[0]
        else:
            reasons[r] = "no real zero with injection supported on K"
    return ZdaPolicy(entries, tuple(sorted({int(k) for k in K}))), reasons

