"""Closed-form U(1) solutions used as oracles, rough-data sampling and c_N.

For an abelian group the bracket terms vanish, so the parabolic flow is the
componentwise heat equation dC/dt = Delta C (solved exactly by the spectral
plans) and the direct flow dA/dt = -d*dA only damps the transverse part of A.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as fft

from .calculus import Grid
from .fields import FieldSpace
from .spectral import SpectralPlan, apply_heat, component_plans

DEFAULT_EXCESS = 0.05

__all__ = [
    "expected_hb_sq",
    "u1_zds_solution",
    "u1_direct_solution",
    "sample_ha_data",
    "continuum_wavenumbers",
    "estimate_cN",
    "heat_kernel_sup",
]


def _require_abelian(space: FieldSpace) -> None:
    if not space.group.abelian:
        raise ValueError(f"abelian oracle needs U1, got {space.group.group_id}")


def u1_zds_solution(space: FieldSpace, C0: np.ndarray, t: float) -> np.ndarray:
    """exp(t Delta) C0, the exact semi-discrete parabolic solution."""
    _require_abelian(space)
    return apply_heat(space.cal.apply_mask(C0, 1), t, space.grid, space.bc, p=1)


def u1_direct_solution(space: FieldSpace, A0: np.ndarray, t: float) -> np.ndarray:
    """Exact semi-discrete solution of dA/dt = -d*dA on the torus.

    In Fourier variables the centered difference D_a has symbol i K_a with
    K_a = sin(2 pi m_a / n_a) / h; -d*d acts as -(|K|^2 - K K^T), so the
    longitudinal part is frozen and the transverse part decays like exp(-|K|^2 t).
    """
    _require_abelian(space)
    grid = space.grid
    if not grid.periodic:
        raise ValueError("the direct-flow oracle is implemented on the torus only")
    ah = fft.fftn(A0[..., 0], axes=(1, 2, 3))  # (3, n1, n2, n3)
    K = np.stack(np.meshgrid(*[np.sin(2 * np.pi * fft.fftfreq(n)) / grid.h for n in grid.dims],
                             indexing="ij"))
    k2 = np.sum(K * K, axis=0)
    safe = np.where(k2 > 0, k2, 1.0)
    par = np.sum(K * ah, axis=0) / safe
    longit = np.where(k2 > 0, par, 0.0) * K
    trans = ah - longit
    out = longit + np.exp(-k2 * t) * trans
    return fft.ifftn(out, axes=(1, 2, 3)).real[..., None]


def continuum_wavenumbers(plan: SpectralPlan) -> np.ndarray:
    """|kappa|^2 on the coefficient grid of a plan, using pi m / L (box) or
    2 pi m / L (torus) rather than the discrete symbols."""
    grid = plan.grid
    total = 0.0
    for a, k in enumerate(plan.kinds):
        n, L = grid.dims[a], grid.lengths[a]
        if k == "N":
            kap = np.pi * np.arange(n) / L
        elif k == "D":
            kap = np.pi * np.arange(1, n - 1) / L
        else:
            kap = 2 * np.pi * fft.fftfreq(n, d=1.0 / n) / L
        shape = [1, 1, 1]
        shape[a] = kap.size
        total = total + kap.reshape(shape) ** 2
    return total


def _envelope(plan: SpectralPlan, a: float, excess: float) -> np.ndarray:
    return (1.0 + continuum_wavenumbers(plan)) ** (-(a + 1.5 + excess) / 2.0)


def expected_hb_sq(space: FieldSpace, a: float, b: float, excess: float = DEFAULT_EXCESS) -> float:
    """E||X||_{H_b}^2 for the unnormalized sample X of ``sample_ha_data``,
    summed over the discrete spectrum (E|c_k|^2 = envelope_k^2 for every mode)."""
    total = 0.0
    for plan in component_plans(space.grid, space.bc, 1):
        env = _envelope(plan, a, excess)
        total += space.m * float(np.sum((1.0 + plan.eigenvalues) ** b * env**2))
    return total


def sample_ha_data(space: FieldSpace, a: float, seed: int, amplitude: float = 1.0,
                   excess: float = DEFAULT_EXCESS) -> np.ndarray:
    """Random 1-form at the edge of H_a.

    Coefficients in the orthonormal eigenbasis are independent with
    E|c_k|^2 = (1 + kappa_k^2)^-(a + 3/2 + excess), kappa_k the continuum wavenumber.
    Then E||X||_{H_b}^2 ~ sum kappa^{2b - 2a - 3 - 2 excess}, which converges in three
    dimensions iff b < a + excess (see ``expected_hb_sq``).  The sample is scaled
    so that E||X||_{H_a}^2 = amplitude^2 (deterministic scaling, so the measured
    norm fluctuates around ``amplitude``).
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must lie in [0, 1], got {a}")
    rng = np.random.default_rng(seed)
    out = np.zeros(space.cal.shape(1, space.m))
    for c, plan in enumerate(component_plans(space.grid, space.bc, 1)):
        env = _envelope(plan, a, excess)
        shape = env.shape + (space.m,)
        if plan.is_complex:
            # unitary transform of real white noise: Hermitian, E|c_k|^2 = 1
            z = fft.fftn(rng.standard_normal(shape), axes=(0, 1, 2), norm="ortho")
        else:
            z = rng.standard_normal(shape)
        out[c] = plan.inverse(env[..., None] * z)
    scale = amplitude / np.sqrt(expected_hb_sq(space, a, a, excess))
    return space.cal.apply_mask(out * scale, 1)


def _axis_kernel_sq(n: int, h: float, t: float) -> np.ndarray:
    """s(x_j, t) = sum_m exp(-2 lam_m t) phi_m(x_j)^2 for the 1-d Neumann basis.

    lam_m = (4/h^2) sin^2(pi m / (2(n-1))) is the three-point Neumann spectrum; it
    shares the DCT-I eigenvectors with the collocated operator but has no spurious
    null modes.  Terms with exp(-2 lam t) < 1e-30 are dropped.
    """
    m = np.arange(n)
    lam = (4.0 / h**2) * np.sin(np.pi * m / (2 * (n - 1))) ** 2
    keep = 2 * lam * t < 30 * np.log(10)
    # orthonormal DCT-I basis in the trapezoidal inner product
    d = np.ones(n)
    d[0] = d[-1] = np.sqrt(0.5)
    phi = fft.idct(np.eye(n), type=1, axis=0, norm="ortho") / (np.sqrt(h) * d)[:, None]
    return (phi[:, keep] ** 2) @ np.exp(-2 * lam[keep] * t)


def heat_kernel_sup(grid: Grid, t: float) -> float:
    """||exp(t Delta_N)||_{2 -> inf} for the discrete Neumann scalar Laplacian."""
    total = 1.0
    for a in range(3):
        total *= float(np.max(_axis_kernel_sq(grid.dims[a], grid.h, t)))
    return float(np.sqrt(total))


def estimate_cN(grid: Grid, t_max: float = 1.0, samples: int = 400) -> float:
    """sup_{0 < t <= t_max} t^{3/4} ||exp(t Delta_N)||_{2 -> inf} on a log time grid."""
    if grid.periodic:
        raise ValueError("c_N is defined for the Neumann Laplacian on a box")
    ts = np.geomspace(1e-4 * grid.h**2, t_max, samples)
    return float(max(t**0.75 * heat_kernel_sup(grid, t) for t in ts))
