"""Piecewise-exact simulation of the switched network, twin-run residuals and
threshold detection.

Between consecutive events (switches, attack resumes and pauses, jumps) the
dynamics are linear time-invariant with at most one exponential input
``[0; g] e^{eta t}``. Appending the exponential as an extra state gives a
homogeneous system whose flow is a single matrix exponential, so every sample
is exact up to rounding, whatever the output spacing ``dt``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import InvalidInputError, matrix_exponential
from .sysmodel import SwitchedSystem, active_topology
from .zda import AttackPlan

DEFAULT_DT = 0.01
DEFAULT_THRESHOLD = 1e-3
DEFAULT_MIN_CONSECUTIVE = 3
_MERGE_TOL = 1e-9


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    events: list[tuple[float, str]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def state_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > _MERGE_TOL:
            raise KeyError(f"t = {t} is not a sample time")
        return self.states[i]

    def event_labels(self) -> list[str]:
        """One ``;``-joined label string per sample."""
        labels = [[] for _ in self.times]
        for t, name in self.events:
            i = int(np.searchsorted(self.times, t - _MERGE_TOL))
            if i < len(labels):
                labels[i].append(name)
        return [";".join(x) for x in labels]


@dataclass
class DetectionVerdict:
    detected: bool
    first_detection_time: float | None
    peak_residual: float
    threshold: float

    def to_record(self) -> dict:
        return {"detected": self.detected, "first_detection_time": self.first_detection_time,
                "peak_residual": self.peak_residual, "threshold": self.threshold}


@dataclass
class TwinRunResult:
    nominal: Trajectory
    attacked: Trajectory
    residuals: np.ndarray
    verdict: DetectionVerdict
    plan: AttackPlan | None = None

    @property
    def times(self) -> np.ndarray:
        return self.attacked.times

    @property
    def deviation(self) -> np.ndarray:
        return self.attacked.states - self.nominal.states


def sample_grid(t0: float, horizon: float, dt: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid ``t0 + k dt`` merged with every breakpoint inside the horizon.

    Uniform points closer than 1e-9 to a breakpoint are replaced by it, so
    event times appear exactly.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if horizon < 0:
        raise InvalidInputError("horizon must be non-negative")
    end = t0 + horizon
    count = int(math.floor(horizon / dt + 1e-9))
    uniform = t0 + dt * np.arange(count + 1)
    bps = sorted({float(b) for b in breakpoints if t0 <= b <= end} | {t0, end})
    keep = [u for u in uniform if all(abs(u - b) > _MERGE_TOL for b in bps)]
    return np.array(sorted(keep + bps))


def _segment_bounds(system: SwitchedSystem, plan: AttackPlan | None, t0: float, end: float,
                    extra_times: Sequence[float]) -> list[float]:
    pts = {t0, end}
    pts.update(t for t in system.schedule.switch_times(end - t0) if t0 < t < end)
    if plan is not None:
        pts.update(t for t in plan.breakpoints() if t0 < t < end)
    pts.update(t for t in extra_times if t0 < t < end)
    return sorted(pts)


def integrate(system: SwitchedSystem, attack: AttackPlan | None, z_init, horizon: float,
              dt: float = DEFAULT_DT, extra_times: Sequence[float] = ()) -> Trajectory:
    """Simulate ``z' = A_sigma z + [0; g(t)]`` from ``z_init`` at the schedule start.

    Outputs include the attack's output injection. A jump listed by the plan
    is applied at its time, and the sample at that time shows the
    post-jump state.
    """
    z = np.asarray(z_init, dtype=float).copy()
    n2 = system.state_dim
    if z.shape != (n2,):
        raise InvalidInputError(f"initial state must have length {n2}")
    t0 = system.schedule.t0
    end = t0 + horizon
    if end > system.schedule.end:
        raise InvalidInputError(
            f"horizon ends at {end}, beyond the finite schedule ({system.schedule.end})")
    bounds = _segment_bounds(system, attack, t0, end, extra_times)
    grid = sample_grid(t0, horizon, dt, bounds)
    states = np.empty((grid.size, n2))
    jumps = {round(t, 12): dz for t, dz in (attack.jumps if attack else [])}
    events: list[tuple[float, str]] = []
    flags: list[str] = []
    if attack is not None:
        for i, w in enumerate(attack.windows):
            if w.xi <= end:
                events.append((w.xi, f"resume:{w.k}" if not w.jump else f"jump:{w.k}"))
            if math.isfinite(w.zeta) and w.zeta <= end:
                events.append((w.zeta, f"pause:{w.k}"))
        for s in attack.skipped:
            if s["time"] <= end:
                events.append((s["time"], f"skip:{s['k']}"))
    for t in system.schedule.switch_times(horizon):
        if t <= end:
            events.append((t, f"switch:{active_topology(system.schedule, t)[0]}"))
    events.sort(key=lambda e: e[0])

    gi = 0
    for a, b in zip(bounds[:-1], bounds[1:]) if len(bounds) > 1 else [(t0, t0)]:
        dz = jumps.get(round(a, 12))
        if dz is not None:
            z = z + dz
        r, _ = active_topology(system.schedule, a)
        A = system.A[r]
        force = attack.forcing(a) if attack is not None else None
        if force is None:
            M, aug = A, z
        else:
            g, eta, phase = force
            M = np.zeros((n2 + 1, n2 + 1))
            M[:n2, :n2] = A
            M[n2 // 2:n2, n2] = g
            M[n2, n2] = eta
            aug = np.concatenate([z, [phase]])
            if np.min(np.abs(np.linalg.eigvals(A) - eta)) < 1e-9:
                flags.append(f"resonant-forcing@{a:g}")
        last = b >= end
        while gi < grid.size and (grid[gi] < b - _MERGE_TOL or (last and grid[gi] <= b + _MERGE_TOL)):
            states[gi] = (matrix_exponential(M, grid[gi] - a) @ aug)[:n2]
            gi += 1
        z = (matrix_exponential(M, b - a) @ aug)[:n2]

    outputs = states @ system.C.T
    if attack is not None and system.C.shape[0]:
        outputs = outputs + np.array([attack.signals(t)[1] for t in grid])
    return Trajectory(grid, states, outputs, events, flags)


def detect(times, residuals, threshold: float = DEFAULT_THRESHOLD,
           min_consecutive: int = DEFAULT_MIN_CONSECUTIVE) -> DetectionVerdict:
    """Flag the first time ``max_i |r_i|`` stays above ``threshold`` for
    ``min_consecutive`` samples; the detection time is the last of those."""
    if not threshold > 0:
        raise InvalidInputError("threshold must be positive")
    times = np.asarray(times, dtype=float)
    R = np.asarray(residuals, dtype=float)
    if R.ndim == 1:
        R = R.reshape(-1, 1)
    mags = np.max(np.abs(R), axis=1) if R.shape[1] else np.zeros(times.size)
    peak = float(mags.max()) if mags.size else 0.0
    run = 0
    for i, above in enumerate(mags > threshold):
        run = run + 1 if above else 0
        if run >= max(1, min_consecutive):
            return DetectionVerdict(True, float(times[i]), peak, threshold)
    return DetectionVerdict(False, None, peak, threshold)


def run_twin(system: SwitchedSystem, plan: AttackPlan | None, z_ref, horizon: float,
             dt: float = DEFAULT_DT, threshold: float = DEFAULT_THRESHOLD,
             min_consecutive: int = DEFAULT_MIN_CONSECUTIVE) -> TwinRunResult:
    """Defender reference from ``z_ref`` against the attacked plant.

    When the plan falsifies the initial data the plant starts from
    ``z_ref + z0``.
    """
    z_ref = np.asarray(z_ref, dtype=float)
    z_plant = z_ref.copy()
    if plan is not None and plan.falsify_initial is not None:
        z_plant = z_plant + plan.falsify_initial
    extra = plan.breakpoints() if plan is not None else []
    nominal = integrate(system, None, z_ref, horizon, dt, extra_times=extra)
    attacked = integrate(system, plan, z_plant, horizon, dt)
    if nominal.times.shape != attacked.times.shape or np.any(nominal.times != attacked.times):
        raise RuntimeError("nominal and attacked runs produced different sample grids")
    residuals = attacked.outputs - nominal.outputs
    verdict = detect(attacked.times, residuals, threshold, min_consecutive)
    return TwinRunResult(nominal, attacked, residuals, verdict, plan)


def twin_run(scenario) -> TwinRunResult:
    """Run a :class:`~zdaswitch.scenario.Scenario` end to end."""
    return run_twin(scenario.system, scenario.attack_plan(), scenario.z_ref, scenario.horizon,
                    scenario.dt, scenario.threshold, scenario.min_consecutive)


def write_csv(path, result: TwinRunResult) -> None:
    """Plant trajectory, plant outputs and residuals, one row per sample."""
    traj = result.attacked
    n = traj.states.shape[1] // 2
    m = traj.outputs.shape[1]
    header = (["t"] + [f"x_{i}" for i in range(1, n + 1)] + [f"v_{i}" for i in range(1, n + 1)]
              + [f"y_{i}" for i in range(1, m + 1)] + [f"r_{i}" for i in range(1, m + 1)] + ["event"])
    labels = traj.event_labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(traj.times):
            row = [t, *traj.states[k], *traj.outputs[k], *result.residuals[k]]
            w.writerow([format(float(x), ".17g") for x in row] + [labels[k]])
