"""Linearized flow along a stored trajectory and vertical (gauge-direction) tangents.

The variational equation of the direct flow is

    -v' = d*_A d_A v + [v -| B]

which is the exact derivative of ``ym_rhs`` at A in direction v.  When the base
trajectory is stored at every step, the RK4 stages of the base flow are rebuilt
from the stored states, so the tangent integrated here is the exact derivative
of the discrete flow map.
"""
from __future__ import annotations

import math

import numpy as np

from .fields import FieldSpace
from .flow import ym_rhs

__all__ = [
    "variational_rhs",
    "integrate_variational",
    "vertical_solution",
    "vertical_residuals",
]


def variational_rhs(space: FieldSpace, v: np.ndarray, A: np.ndarray,
                    B: np.ndarray | None = None) -> np.ndarray:
    """-(d*_A d_A v + [v -| B])."""
    if B is None:
        B = space.curvature(A)
    out = space.covariant_codiff(A, space.covariant_d(A, v, 1), 2)
    if not space.group.abelian:
        out = out + space.contract(v, B, 2)
    return -out


def _joint_rk4(space: FieldSpace, A: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    """Tangent part of one RK4 step of the joint system (A, v)."""
    Y = [A]
    k = ym_rhs(space, A)
    ks = [k]
    for c in (0.5, 0.5, 1.0):
        Y.append(A + c * dt * ks[-1])
        ks.append(ym_rhs(space, Y[-1]))
    V, l = [v], []
    for i, c in enumerate((0.5, 0.5, 1.0, None)):
        l.append(variational_rhs(space, V[-1], Y[i]))
        if c is not None:
            V.append(v + c * dt * l[-1])
    return space.cal.apply_mask(v + (dt / 6.0) * (l[0] + 2 * l[1] + 2 * l[2] + l[3]), 1)


def _interp_rk4(space: FieldSpace, A0: np.ndarray, A1: np.ndarray, v: np.ndarray,
                dt: float) -> np.ndarray:
    """RK4 step of v with A interpolated linearly over the step."""
    Am = 0.5 * (A0 + A1)
    l1 = variational_rhs(space, v, A0)
    l2 = variational_rhs(space, v + 0.5 * dt * l1, Am)
    l3 = variational_rhs(space, v + 0.5 * dt * l2, Am)
    l4 = variational_rhs(space, v + dt * l3, A1)
    return space.cal.apply_mask(v + (dt / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4), 1)


def integrate_variational(space: FieldSpace, v0: np.ndarray, times, A_traj,
                          dt_max: float | None = None, cfl: float = 0.25) -> list:
    """Tangent trajectory v(t_k) along stored base states A(t_k).

    Intervals no longer than ``dt_max`` (default cfl * h^2) are integrated with the
    rebuilt base stages (exact discrete tangent); longer intervals are split into
    substeps with A interpolated linearly in t.
    """
    times = np.asarray(times, dtype=float)
    if len(times) != len(A_traj):
        raise ValueError("timestamp mismatch between times and base states")
    h = space.grid.h
    cap = cfl * h * h
    if dt_max is None:
        dt_max = cap
    elif dt_max > cap * (1 + 1e-12):
        raise ValueError(f"dt_max={dt_max:.3e} violates the CFL bound {cap:.3e}")
    v = space.cal.apply_mask(np.array(v0, dtype=float), 1)
    out = [v]
    for n in range(len(times) - 1):
        dt = times[n + 1] - times[n]
        if dt <= dt_max * (1 + 1e-12):
            v = _joint_rk4(space, A_traj[n], v, dt)
        else:
            k = math.ceil(dt / dt_max)
            sub = dt / k
            for j in range(k):
                Aa = A_traj[n] + (j / k) * (A_traj[n + 1] - A_traj[n])
                Ab = A_traj[n] + ((j + 1) / k) * (A_traj[n + 1] - A_traj[n])
                v = _interp_rk4(space, Aa, Ab, v, sub)
        out.append(v)
    return out


def vertical_solution(space: FieldSpace, alpha: np.ndarray, A_traj) -> list:
    """t -> d_{A(t)} alpha for a fixed 0-form alpha."""
    alpha = space.cal.apply_mask(np.asarray(alpha, dtype=float), 0)
    return [space.covariant_d(A, alpha, 0) for A in A_traj]


def vertical_residuals(space: FieldSpace, alpha: np.ndarray, A_traj) -> np.ndarray:
    """||dv/dt - variational_rhs(v, A)||_2 along v = d_A alpha, using dv/dt = [A', alpha]
    with A' = ym_rhs(A) (no time discretization enters)."""
    alpha = space.cal.apply_mask(np.asarray(alpha, dtype=float), 0)
    res = []
    for A in A_traj:
        v = space.covariant_d(A, alpha, 0)
        vdot = space.wedge(ym_rhs(space, A), alpha, 0)
        res.append(space.l2(vdot - variational_rhs(space, v, A)))
    return np.array(res)
