"""Gauge-invariant measurements: energy, a-action, curvature monitors, residuals,
parallel transport and Wilson loops."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import lie
from .calculus import COMPONENTS, diff, interpolate
from .fields import FieldSpace

__all__ = [
    "ObservableSeries",
    "energy",
    "panel_integral",
    "a_action",
    "weighted_integral",
    "sup_curvature_monitor",
    "Loop",
    "parallel_transport",
    "wilson_loop",
    "wilson_loops",
    "long_time_wilson",
    "bianchi_residual",
    "boundary_residuals",
    "gaffney_excess",
    "gaffney_residual",
    "gaffney_sup",
    "GaffneyConstants",
    "calibrate_gaffney",
    "sobolev_ratio",
    "calibrate_sobolev",
    "gronwall_residual",
    "small_time_monitor",
    "energy_identity_residuals",
    "residuals",
]


# ---------------------------------------------------------------- series


@dataclass
class ObservableSeries:
    name: str
    samples: list

    def __post_init__(self):
        t = [s[0] for s in self.samples]
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"series {self.name!r}: times must be strictly increasing")

    @property
    def t(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,value\n")
            for t, v in self.samples:
                if np.iscomplexobj(v):
                    fh.write(f"{t:.17g},{complex(v)!r}\n")
                else:
                    fh.write(f"{t:.17g},{float(v):.17g}\n")


def energy(space: FieldSpace, A: np.ndarray) -> float:
    """||B||_2^2."""
    B = space.curvature(A)
    return space.cal.inner(B, B)


# ---------------------------------------------------------------- weighted time integrals


def panel_integral(t: np.ndarray, f: np.ndarray, power: float, df=None) -> np.ndarray:
    """Cumulative int_0^{t_k} s^power f(s) ds.

    f is piecewise linear, or piecewise cubic Hermite when the derivative ``df``
    is given; the weight is integrated exactly on each panel.  If ``t[0] > 0``
    the first panel is [0, t[0]] with f held at f[0] (constant extension).
    Requires power > -1.
    """
    if power <= -1:
        raise ValueError("weight s^power is not integrable at 0")
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    cubic = df is not None
    df = np.zeros_like(f) if df is None else np.asarray(df, dtype=float)
    pad = t[0] > 0
    if pad:
        t = np.concatenate([[0.0], t])
        f = np.concatenate([[f[0]], f])
        df = np.concatenate([[0.0], df])

    def mom(j):
        return (b ** (power + j + 1) - a ** (power + j + 1)) / (power + j + 1)

    a, b = t[:-1], t[1:]
    w = b - a
    slope = (f[1:] - f[:-1]) / w
    if not cubic:
        panels = (f[:-1] - slope * a) * mom(0) + slope * mom(1)
    else:
        d0, d1 = df[:-1].copy(), df[1:].copy()
        if pad:
            d1[0] = 0.0  # constant extension on [0, t[0]]
        c2 = (3 * slope - 2 * d0 - d1) / w
        c3 = (d0 + d1 - 2 * slope) / w**2
        # q(s) = f0 + d0 (s-a) + c2 (s-a)^2 + c3 (s-a)^3 expanded in powers of s
        m0, m1, m2, m3 = mom(0), mom(1), mom(2), mom(3)
        panels = (f[:-1] * m0 + d0 * (m1 - a * m0)
                  + c2 * (m2 - 2 * a * m1 + a * a * m0)
                  + c3 * (m3 - 3 * a * m2 + 3 * a * a * m1 - a**3 * m0))
    cum = np.concatenate([[0.0], np.cumsum(panels)])
    return cum[1:] if pad else cum


def a_action(t, b_sq, a: float, b_sq_dot=None) -> np.ndarray:
    """rho_a(t_k) = int_0^{t_k} s^{-a} ||B(s)||^2 ds for every sample time.

    ``b_sq_dot`` (d/dt ||B||^2 = -2 ||A'||^2 along the flow) switches to
    cubic Hermite panels.
    """
    if not 0.5 <= a < 1.0:
        raise ValueError(f"a-action needs 1/2 <= a < 1, got {a}")
    return panel_integral(t, b_sq, -a, b_sq_dot)


def weighted_integral(t, f, power: float, df=None) -> np.ndarray:
    return panel_integral(t, f, power, df)


def sup_curvature_monitor(t, sup_b, b0_l2: float) -> ObservableSeries:
    t = np.asarray(t, dtype=float)
    vals = t**0.75 * np.asarray(sup_b) / b0_l2 if b0_l2 > 0 else np.zeros_like(t)
    return ObservableSeries("sup_curvature", list(zip(t.tolist(), np.asarray(vals).tolist())))


def small_time_monitor(t, b_sq, aprime_sq, bprime_sq) -> dict:
    """Weighted small-time series: t^{1/2}||B||^2, t^{3/2}||A'||^2,
    int_0^t s^{3/2}||B'||^2 ds and rho_{1/2}(t)."""
    t = np.asarray(t, dtype=float)
    b_sq, aprime_sq, bprime_sq = (np.asarray(v, dtype=float) for v in (b_sq, aprime_sq, bprime_sq))
    keep = t > 0
    tk = t[keep]
    return {
        "t_half_B": ObservableSeries("t^1/2 |B|^2", list(zip(tk, np.sqrt(tk) * b_sq[keep]))),
        "t_3half_Aprime": ObservableSeries("t^3/2 |A'|^2",
                                           list(zip(tk, tk**1.5 * aprime_sq[keep]))),
        "int_Bprime": ObservableSeries("int s^3/2 |B'|^2",
                                       list(zip(tk, panel_integral(t, bprime_sq, 1.5)[keep]))),
        "rho_half": ObservableSeries("rho_1/2", list(zip(
            tk, a_action(t, b_sq, 0.5, -2.0 * aprime_sq)[keep]))),
    }


# ---------------------------------------------------------------- loops


@dataclass(frozen=True)
class Loop:
    vertices: tuple
    subdiv: float

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 2:
            raise ValueError("a loop needs at least two 3-d vertices")
        if not np.allclose(v[0], v[-1], atol=1e-12):
            raise ValueError("loop is not closed (first vertex != last vertex)")
        if not self.subdiv > 0:
            raise ValueError("subdivision length must be positive")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    @classmethod
    def rectangle(cls, corner, a: int, b: int, la: float, lb: float, subdiv: float) -> "Loop":
        """Counterclockwise rectangle in the (a, b) coordinate plane."""
        c = np.asarray(corner, dtype=float)
        ea, eb = np.eye(3)[a] * la, np.eye(3)[b] * lb
        return cls((c, c + ea, c + ea + eb, c + eb, c), subdiv)

    def reversed(self) -> "Loop":
        return Loop(self.vertices[::-1], self.subdiv)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Midpoints and displacement vectors of the sub-segments."""
        v = np.asarray(self.vertices)
        mids, steps = [], []
        for p, q in zip(v[:-1], v[1:]):
            length = float(np.linalg.norm(q - p))
            if length == 0:
                continue
            k = max(1, math.ceil(length / self.subdiv - 1e-9))
            s = (np.arange(k) + 0.5) / k
            mids.append(p + s[:, None] * (q - p))
            steps.append(np.broadcast_to((q - p) / k, (k, 3)))
        return np.concatenate(mids), np.concatenate(steps)


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """M_0 M_1 ... M_{k-1} by pairwise reduction."""
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, np.eye(mats.shape[-1], dtype=mats.dtype)[None]])
        mats = mats[0::2] @ mats[1::2]
    return mats[0]


def parallel_transport(space: FieldSpace, A: np.ndarray, loop: Loop) -> np.ndarray:
    """Holonomy g(1) of g^{-1} dg/ds = A<dgamma/ds>, g(0) = I.

    Product of exp(A(midpoint)<dgamma>) over sub-segments, multiplied on the right
    in path order (second order in the sub-segment length).
    """
    if loop.subdiv > space.grid.h * (1 + 1e-12):
        raise ValueError("loop subdivision must not exceed the grid spacing")
    mids, steps = loop.segments()
    vals = interpolate(space.grid, A, mids)  # (k, 3, m)
    X = np.einsum("kim,ki->km", vals, steps)
    g = _ordered_product(lie.expm(space.group, X))
    return lie.project_to_group(space.group, g)


def wilson_loop(space: FieldSpace, A: np.ndarray, loop: Loop) -> complex:
    return complex(np.trace(parallel_transport(space, A, loop)))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("YMFLOW_THREADS", "1")))
    except ValueError:
        return 1


def wilson_loops(space: FieldSpace, A: np.ndarray, loops) -> np.ndarray:
    """Traces for a batch of loops (thread pool capped by YMFLOW_THREADS)."""
    loops = list(loops)
    n = _threads()
    if n == 1 or len(loops) < 2:
        return np.array([wilson_loop(space, A, lp) for lp in loops])
    with ThreadPoolExecutor(max_workers=n) as pool:
        return np.array(list(pool.map(lambda lp: wilson_loop(space, A, lp), loops)))


def long_time_wilson(space: FieldSpace, times, fields, loops, last: int = 4) -> dict:
    """Cauchy increments of Wilson traces on a doubling time sequence.

    ``verdict`` is True when, for every loop, the last ``last`` increments are
    nonincreasing.
    """
    times = np.asarray(times, dtype=float)
    traces = np.array([wilson_loops(space, A, loops) for A in fields])  # (T, L)
    inc = np.abs(np.diff(traces, axis=0))  # (T-1, L)
    tail = inc[-last:]
    ok = bool(len(inc) >= last and np.all(np.diff(tail, axis=0) <= 0))
    return {"times": times, "traces": traces, "increments": inc, "verdict": ok}


# ---------------------------------------------------------------- residuals


def bianchi_residual(space: FieldSpace, A: np.ndarray) -> float:
    """||d_A B||_2 (zero in the continuum)."""
    return space.l2(space.covariant_d(A, space.curvature(A), 2))


def _face_norm(space: FieldSpace, B: np.ndarray, normal: bool) -> float:
    """Surface L2 norm over all box faces of the normal (index set contains the face
    normal) or tangential components of a 2-form."""
    grid = space.grid
    if grid.periodic:
        return 0.0
    total = 0.0
    for a in range(3):
        others = [b for b in range(3) if b != a]
        w = np.multiply.outer(grid.axis_weights(others[0]), grid.axis_weights(others[1]))
        for k, s in enumerate(COMPONENTS[2]):
            if (a in s) != normal:
                continue
            comp = np.moveaxis(B[k], a, 0)
            for face in (comp[0], comp[-1]):
                total += float(np.sum(w * np.sum(face**2, axis=-1)))
    return math.sqrt(total)


def boundary_residuals(space: FieldSpace, A: np.ndarray) -> dict:
    """marini = neumann_B = ||B_norm||_{L2(dM)}, dirichlet_B = ||B_tan||_{L2(dM)}."""
    B = space.curvature(A)
    bn = _face_norm(space, B, normal=True)
    return {"marini": bn, "neumann_B": bn, "dirichlet_B": _face_norm(space, B, normal=False)}


def _nabla_adjoint(space: FieldSpace, A: np.ndarray | None, eta: np.ndarray) -> np.ndarray:
    """Mass-weighted adjoint of the covariant gradient on 1-forms."""
    h = space.grid.h
    par = space.cal.parity[1]
    flip = {"e": "o", "o": "e", "p": "p"}
    out = np.zeros(eta.shape[1:])
    for j in range(3):
        for c in range(3):
            # project onto the range parity of D_j before differentiating
            e = eta[j, c]
            for a in range(3):
                t = flip[par[c][a]] if a == j else par[c][a]
                if t == "o":
                    e = np.moveaxis(e, a, 0).copy()
                    e[0] = e[-1] = 0.0
                    e = np.moveaxis(e, 0, a)
            out[c] -= diff(e, j, flip[par[c][j]], h)
            if A is not None and not space.group.abelian:
                out[c] -= np.cross(A[j], eta[j, c])
    return space.cal.apply_mask(out, 1)


def gaffney_excess(space: FieldSpace, A: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """(1/2||w||_{W1A}^2 - ||d_A w||^2 - ||d*_A w||^2, ||w||^2)."""
    dA = space.covariant_d(A, w, 1)
    dsA = space.covariant_codiff(A, w, 1)
    lhs = 0.5 * space.w1a_sq(A, w, 1)
    return lhs - space.cal.inner(dA, dA) - space.cal.inner(dsA, dsA), space.cal.inner(w, w)


def gaffney_residual(space: FieldSpace, A: np.ndarray, w: np.ndarray,
                     lam_m: float, gamma2: float) -> float:
    """||d_A w||^2 + ||d*_A w||^2 + lambda(B)||w||^2 - 1/2||w||_{W1A}^2 (>= 0 when it holds)."""
    B = space.curvature(A)
    lam = lam_m + gamma2 * space.l2(B) ** 4
    ex, w2 = gaffney_excess(space, A, w)
    return lam * w2 - ex


def gaffney_sup(space: FieldSpace, A: np.ndarray, tol: float = 1e-8) -> float:
    """Largest Rayleigh quotient of the Gaffney excess over masked 1-forms.

    Solves the symmetric eigenproblem of
    Q = 1/2 (nabla^A)* nabla^A + 1/2 - d*_A d_A - d_A d*_A
    in the trapezoidal mass inner product.
    """
    shape = space.cal.shape(1, space.m)
    mass = np.broadcast_to(space.grid.weights[None, ..., None], shape)
    mask = np.broadcast_to(space.cal.mask(1), shape).astype(bool)
    sq = np.sqrt(mass)[mask]
    n = int(mask.sum())

    def Q(w):
        gA = space.covariant_gradient(A, w, 1)
        out = 0.5 * _nabla_adjoint(space, A, gA) + 0.5 * w
        out -= space.covariant_codiff(A, space.covariant_d(A, w, 1), 2)
        out -= space.covariant_d(A, space.covariant_codiff(A, w, 1), 0)
        return out

    def mv(y):
        w = np.zeros(shape)
        w[mask] = np.ravel(y) / sq
        return Q(w)[mask] * sq

    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    # a block of eigenvalues: near-degenerate top clusters (A close to 0) stall k = 1
    vals = spla.eigsh(op, k=6, ncv=48, which="LA", tol=tol, v0=v0, return_eigenvectors=False)
    return float(np.max(vals))


@dataclass(frozen=True)
class GaffneyConstants:
    lam_m: float
    gamma2: float

    def lam(self, b_l2: float) -> float:
        return self.lam_m + self.gamma2 * b_l2**4


def calibrate_gaffney(space: FieldSpace, connections, safety: float = 1.25) -> GaffneyConstants:
    """Fit the smallest (lam_M, gamma2) >= 0 (in the sense of a linear program) such
    that sup_w excess/||w||^2 <= lam_M + gamma2 ||B||^4 on every calibration
    connection, then inflate by ``safety``."""
    from scipy.optimize import linprog

    q = np.array([gaffney_sup(space, A) for A in connections])
    b4 = np.array([space.l2(space.curvature(A)) ** 4 for A in connections])
    scale = max(b4.max(), 1e-300)
    # minimize sum of lam_M + gamma2 * b4_k subject to lam_M + gamma2 b4_k >= q_k
    res = linprog(
        c=[len(q), b4.sum() / scale],
        A_ub=np.column_stack([-np.ones_like(q), -b4 / scale]),
        b_ub=-q,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"Gaffney calibration failed: {res.message}")
    lam_m, g2 = res.x[0], res.x[1] / scale
    return GaffneyConstants(safety * lam_m, safety * g2)


def sobolev_ratio(space: FieldSpace, A: np.ndarray | None, w: np.ndarray) -> float:
    """||w||_6^2 / ||w||_{W1A}^2."""
    l6 = space.norms(w, 1)["L6"]
    return l6**2 / space.w1a_sq(A, w, 1)


def calibrate_sobolev(space: FieldSpace, forms, safety: float = 1.5) -> float:
    return safety * max(sobolev_ratio(space, None, w) for w in forms)


def gronwall_rates(t, gap_sq, sup1, sup2) -> tuple[np.ndarray, np.ndarray]:
    """Per-step logarithmic rate of ||A1 - A2||^2 and the curvature driver
    ||B1||_inf + ||B2||_inf (averaged over the step)."""
    t = np.asarray(t, dtype=float)
    rate = np.diff(np.log(np.asarray(gap_sq, dtype=float))) / np.diff(t)
    drive = np.asarray(sup1, dtype=float) + np.asarray(sup2, dtype=float)
    return rate, 0.5 * (drive[1:] + drive[:-1])


def gronwall_residual(t, gap_sq, sup1, sup2, c: float) -> float:
    """max over steps of rate - c * driver; <= 0 when contraction holds."""
    rate, drive = gronwall_rates(t, gap_sq, sup1, sup2)
    return float(np.max(rate - c * drive))


def energy_identity_residuals(space: FieldSpace, A0: np.ndarray, dt: float, steps: int,
                              config=None) -> dict:
    """Per-step |(E_{n+1} - E_n)/dt + 2 avg ||A'||^2| for the RK4 direct flow.

    The step average of ||A'||^2 uses Simpson's rule with the midpoint state
    from an RK4 half step.
    """
    from .flow import rk4_step, ym_rhs

    A = space.cal.apply_mask(np.array(A0, dtype=float), 1)
    res, energies = [], [energy(space, A)]
    for _ in range(steps):
        mid = rk4_step(space, ym_rhs, A, 0.5 * dt)
        nxt = rk4_step(space, ym_rhs, A, dt)
        p = [ym_rhs(space, y) for y in (A, mid, nxt)]
        avg = (space.cal.inner(p[0], p[0]) + 4 * space.cal.inner(p[1], p[1])
               + space.cal.inner(p[2], p[2])) / 6.0
        e1 = energy(space, nxt)
        res.append(abs((e1 - energies[-1]) / dt + 2 * avg))
        energies.append(e1)
        A = nxt
    return {"residual": np.array(res), "energy": np.array(energies)}


def residuals(space: FieldSpace, A: np.ndarray, w: np.ndarray | None = None,
              gaffney: GaffneyConstants | None = None, gronwall: tuple | None = None) -> dict:
    """Nonnegative residuals, 0 when the identity or inequality holds.

    ``gronwall`` is ``(t, gap_sq, sup1, sup2, c)`` for a pair of trajectories.
    """
    out = {"bianchi": bianchi_residual(space, A)}
    out.update(boundary_residuals(space, A))
    if w is not None and gaffney is not None:
        out["gaffney"] = max(0.0, -gaffney_residual(space, A, w, gaffney.lam_m, gaffney.gamma2))
    if gronwall is not None:
        out["gronwall"] = max(0.0, gronwall_residual(*gronwall))
    return out
