"""Method-of-lines integration of the Yang-Mills heat flow.

Three modes share one classical RK4 stepper:

* ``direct``: dA/dt = -d*_A B (degenerate, smooth data only);
* ``zds``: dC/dt = -d*_C B_C - d_C d*C (parabolic);
* ``zds_recovered``: ``zds`` plus the gauge flow (dg/dt) g^{-1} = d*C, so that
  A = C^g solves the direct equation.

The stepper lands exactly on requested save times and stores the observables
needed by the monitors (energy, ||A'||^2, ||B'||^2, sup |B|) at every step.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import lie
from .fields import FieldSpace

__all__ = [
    "Mode",
    "StepperConfig",
    "FlowState",
    "StepFailure",
    "Trajectory",
    "ym_rhs",
    "zds_rhs",
    "rhs_for",
    "rk4_step",
    "step",
    "gauge_flow_step",
    "recover_solution",
    "epsilon_family",
    "save_schedule",
    "run",
]

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    DIRECT = "direct"
    ZDS = "zds"
    ZDS_RECOVERED = "zds_recovered"


class StepFailure(RuntimeError):
    """Time step underflow; ``diagnostics`` holds the state of the failed attempt."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class StepperConfig:
    dt_init: float | None = None
    cfl: float = 0.1
    t_end: float = 1.0
    energy_backtrack: bool = True
    reproject_every: int = 16
    max_halvings: int = 20

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.25:
            raise ValueError(f"cfl must lie in (0, 0.25], got {self.cfl}")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.dt_init is not None and self.dt_init <= 0:
            raise ValueError("dt_init must be positive")
        if self.reproject_every < 1:
            raise ValueError("reproject_every must be >= 1")

    def dt_max(self, h: float) -> float:
        cap = self.cfl * h * h
        return cap if self.dt_init is None else min(self.dt_init, cap)


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    field: np.ndarray
    mode: Mode
    g: np.ndarray | None = None
    steps: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("flow time must be non-negative")
        if Mode(self.mode) is Mode.ZDS_RECOVERED and self.g is None:
            raise ValueError("zds_recovered state needs a gauge field")


# ---------------------------------------------------------------- right-hand sides


def ym_rhs(space: FieldSpace, A: np.ndarray) -> np.ndarray:
    """-d*_A B."""
    return -space.covariant_codiff(A, space.curvature(A), 2)


def zds_rhs(space: FieldSpace, C: np.ndarray) -> np.ndarray:
    """-d*_C B_C - d_C d*C."""
    return ym_rhs(space, C) - space.covariant_d(C, space.cal.codiff(C, 1), 0)


def rhs_for(mode: Mode):
    return ym_rhs if Mode(mode) is Mode.DIRECT else zds_rhs


def rk4_step(space: FieldSpace, f, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(space, y)
    k2 = f(space, y + 0.5 * dt * k1)
    k3 = f(space, y + 0.5 * dt * k2)
    k4 = f(space, y + dt * k3)
    return space.cal.apply_mask(y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), 1)


# ---------------------------------------------------------------- gauge flow


def gauge_flow_step(space: FieldSpace, g: np.ndarray, C0: np.ndarray, C1: np.ndarray,
                    dt: float) -> np.ndarray:
    """g <- expm(dt * d*C_mid) g with d*C_mid = d*((C0 + C1)/2) (second order)."""
    xi = space.cal.codiff(0.5 * (C0 + C1), 1)[0]
    return lie.expm(space.group, dt * xi) @ g


def _reproject(space: FieldSpace, g: np.ndarray) -> np.ndarray:
    return lie.project_to_group(space.group, g)


# ---------------------------------------------------------------- stepping


def energy_of(space: FieldSpace, A: np.ndarray) -> float:
    B = space.curvature(A)
    return space.cal.inner(B, B)


def step(space: FieldSpace, state: FlowState, config: StepperConfig,
         dt: float | None = None) -> tuple[FlowState, float]:
    """One RK4 step (with energy backtracking in direct mode).

    Returns the new state and the step actually taken.
    """
    mode = Mode(state.mode)
    dt = config.dt_max(space.grid.h) if dt is None else dt
    f = rhs_for(mode)
    backtrack = config.energy_backtrack and mode is Mode.DIRECT
    e0 = energy_of(space, state.field) if backtrack else 0.0
    for attempt in range(config.max_halvings + 1):
        y = rk4_step(space, f, state.field, dt)
        if not np.all(np.isfinite(y)):
            bad = True
        elif backtrack:
            e1 = energy_of(space, y)
            bad = e1 > e0 + 1e-13 * max(e0, 1.0)
        else:
            bad = False
        if not bad:
            break
        if attempt == config.max_halvings:
            raise StepFailure(
                f"step failed at t={state.t:.6g} after {attempt} halvings",
                {"t": state.t, "dt": dt, "energy": e0, "steps": state.steps},
            )
        log.info("energy backtrack at t=%.6g: dt %.3e -> %.3e", state.t, dt, dt / 2)
        dt = dt / 2
    g = state.g
    if mode is Mode.ZDS_RECOVERED:
        g = gauge_flow_step(space, g, state.field, y, dt)
        if (state.steps + 1) % config.reproject_every == 0:
            g = _reproject(space, g)
    return replace(state, t=state.t + dt, field=y, g=g, steps=state.steps + 1), dt


# ---------------------------------------------------------------- trajectories


def save_schedule(t_end: float, t_first: float | None = None, uniform: int = 0) -> np.ndarray:
    """Geometric stamps t_first * 2^k below t_end plus ``uniform`` evenly spaced stamps."""
    stamps = {float(t_end)}
    if t_first is not None and t_first > 0:
        t = t_first
        while t < t_end:
            stamps.add(float(t))
            t *= 2.0
    if uniform > 0:
        stamps.update(float(s) for s in np.linspace(0.0, t_end, uniform + 1)[1:])
    return np.array(sorted(s for s in stamps if s > 0))


@dataclass
class Trajectory:
    """Stored states plus per-step observable series."""

    space: FieldSpace
    mode: Mode
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    gauges: list = field(default_factory=list)
    series: dict = field(default_factory=lambda: {k: [] for k in SERIES})
    final: FlowState | None = None

    def record_state(self, state: FlowState) -> None:
        self.times.append(state.t)
        self.fields.append(state.field.copy())
        self.gauges.append(None if state.g is None else state.g.copy())

    def record_series(self, t: float, A: np.ndarray) -> None:
        for k, v in observe(self.space, self.mode, A).items():
            self.series[k].append((t, v))

    def series_array(self, name: str) -> np.ndarray:
        return np.array(self.series[name], dtype=float).reshape(-1, 2)

    def at(self, t: float) -> int:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not stored")
        return i

    def recovered(self) -> list:
        return recover_solution(self.space, self.fields, self.gauges)


SERIES = ("energy", "aprime_sq", "bprime_sq", "sup_b")


def observe(space: FieldSpace, mode: Mode, A: np.ndarray) -> dict:
    """Gauge-invariant scalars of the evolving field (A' taken from the direct rhs)."""
    B = space.curvature(A)
    Ap = ym_rhs(space, A)
    Bp = space.covariant_d(A, Ap, 1)
    return {
        "energy": space.cal.inner(B, B),
        "aprime_sq": space.cal.inner(Ap, Ap),
        "bprime_sq": space.cal.inner(Bp, Bp),
        "sup_b": float(space.pointwise(B).max()),
    }


def initial_state(space: FieldSpace, field0: np.ndarray, mode: Mode | str) -> FlowState:
    mode = Mode(mode)
    g = space.identity_gauge().elems if mode is Mode.ZDS_RECOVERED else None
    return FlowState(0.0, space.cal.apply_mask(np.array(field0, dtype=float), 1), mode, g)


def run(space: FieldSpace, state: FlowState, config: StepperConfig,
        save_times=None, record_every_step: bool = True, trajectory: Trajectory | None = None,
        on_save=None, on_step=None) -> Trajectory:
    """Advance to ``config.t_end`` landing exactly on every save time.

    Series are recorded at every step when ``record_every_step`` (else at save
    times); states only at save times and at t = state.t if the trajectory is new.
    ``on_save(state, trajectory)`` is called after each save and
    ``on_step(old_state, new_state)`` after each step.
    """
    mode = Mode(state.mode)
    traj = trajectory or Trajectory(space, mode)
    saves = [s for s in (save_schedule(config.t_end) if save_times is None else save_times)
             if s > state.t + 1e-15]
    saves = sorted(set(float(s) for s in saves) | {float(config.t_end)})
    if not traj.times:
        traj.record_state(state)
        traj.record_series(state.t, _direct_field(space, state))
    dt_max = config.dt_max(space.grid.h)
    for target in saves:
        while target - state.t > 1e-14 * max(1.0, target):
            dt = min(dt_max, target - state.t)
            # avoid a sliver step just before the target
            if target - state.t - dt < 1e-3 * dt_max:
                dt = target - state.t
            old = state
            state, _ = step(space, state, config, dt)
            if abs(state.t - target) <= 1e-14 * max(1.0, target):
                state = replace(state, t=target)
            if on_step is not None:
                on_step(old, state)
            if record_every_step or state.t == target:
                traj.record_series(state.t, _direct_field(space, state))
        traj.record_state(state)
        if on_save is not None:
            on_save(state, traj)
    traj.final = state
    return traj


def _direct_field(space: FieldSpace, state: FlowState) -> np.ndarray:
    """The field whose gauge-invariant observables are reported."""
    return state.field


# ---------------------------------------------------------------- recovery


def recover_solution(space: FieldSpace, C_traj, g_traj) -> list:
    """A(t) = C(t)^{g(t)} at each stored time."""
    if len(C_traj) != len(g_traj):
        raise ValueError(f"timestamp mismatch: {len(C_traj)} fields vs {len(g_traj)} gauges")
    return [space.gauge_transform(C, g) for C, g in zip(C_traj, g_traj)]


def epsilon_family(space: FieldSpace, times, C_traj, eps: float,
                   reproject_every: int = 16) -> tuple[list, list]:
    """Gauge flow started from identity at t = eps along a stored C trajectory.

    Returns (times >= eps, A_eps(t) = C(t)^{g_eps(t)}).  Exact re-run of the in-flow
    gauge update when C was stored at every step.
    """
    times = np.asarray(times, dtype=float)
    if not times.size or eps <= 0 or eps < times[0] - 1e-15 or eps > times[-1] + 1e-15:
        raise ValueError(f"eps={eps} outside stored range")
    start = int(np.searchsorted(times, eps - 1e-14 * max(1.0, eps)))
    if abs(times[start] - eps) > 1e-12 * max(1.0, eps):
        raise ValueError(f"eps={eps} is not a stored time stamp")
    g = space.identity_gauge().elems
    out_t, out_A = [times[start]], [space.gauge_transform(C_traj[start], g)]
    for k in range(start + 1, len(times)):
        g = gauge_flow_step(space, g, C_traj[k - 1], C_traj[k], times[k] - times[k - 1])
        if (k - start) % reproject_every == 0:
            g = _reproject(space, g)
        out_t.append(times[k])
        out_A.append(space.gauge_transform(C_traj[k], g))
    return out_t, out_A
