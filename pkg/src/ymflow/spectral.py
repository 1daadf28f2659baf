"""Orthogonal transforms diagonalizing the componentwise discrete Laplacian.

Along an axis the squared reflected centered difference ``D^2`` is diagonalized by

* ``"N"`` (even reflection): cosine modes ``cos(pi m j / (n-1))``, m = 0..n-1 (DCT-I);
* ``"D"`` (odd reflection): sine modes ``sin(pi m j / (n-1))``, m = 1..n-2 (DST-I on
  the interior nodes);
* ``"P"`` (periodic): Fourier modes, eigenvalue ``sin^2(2 pi m / n) / h^2``.

Each eigenvalue of ``-D^2`` is ``sin^2(theta_m) / h^2``.  Coefficients are taken with
respect to bases that are orthonormal for the trapezoidal quadrature, so the
coefficient 2-norm equals the discrete L2 norm of the nodal data.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as fft

from .calculus import BC, COMPONENTS, Grid, GridError, component_parity

_KIND = {"e": "N", "o": "D", "p": "P"}


@lru_cache(maxsize=None)
def axis_eigenvalues(n: int, h: float, kind: str) -> np.ndarray:
    if kind == "N":
        theta = np.pi * np.arange(n) / (n - 1)
    elif kind == "D":
        theta = np.pi * np.arange(1, n - 1) / (n - 1)
    elif kind == "P":
        theta = 2 * np.pi * fft.fftfreq(n)
    else:
        raise GridError(f"unknown transform kind {kind!r}")
    lam = (np.sin(theta) / h) ** 2
    lam.setflags(write=False)
    return lam


def _end_scale(n: int) -> np.ndarray:
    d = np.ones(n)
    d[0] = d[-1] = np.sqrt(0.5)
    return d


def _shape_along(v: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = v.size
    return v.reshape(shape)


@dataclass(frozen=True)
class SpectralPlan:
    """Per-axis transform plan for scalar node arrays with trailing axes allowed."""

    grid: Grid
    kinds: tuple[str, str, str]

    def __post_init__(self):
        if any(k not in "NDP" for k in self.kinds):
            raise GridError(f"bad transform kinds {self.kinds}")
        periodic = [k == "P" for k in self.kinds]
        if any(periodic) and not all(periodic):
            raise GridError("periodic and reflecting axes cannot be mixed")
        if all(periodic) != self.grid.periodic:
            raise GridError(f"transform kinds {self.kinds} do not match a {self.grid.domain} grid")

    @property
    def is_complex(self) -> bool:
        return self.kinds[0] == "P"

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of -sum_a D_a^2 on the coefficient grid (broadcast shape)."""
        lam = 0.0
        for a, k in enumerate(self.kinds):
            lam = lam + _shape_along(axis_eigenvalues(self.grid.dims[a], self.grid.h, k), a, 3)
        return lam

    def forward(self, f: np.ndarray) -> np.ndarray:
        """Nodal values (n1, n2, n3, ...) -> orthonormal coefficients."""
        out = np.asarray(f)
        h = self.grid.h
        for a, k in enumerate(self.kinds):
            n = self.grid.dims[a]
            if k == "N":
                out = out * _shape_along(np.sqrt(h) * _end_scale(n), a, out.ndim)
                out = fft.dct(out, type=1, axis=a, norm="ortho")
            elif k == "D":
                idx = [slice(None)] * out.ndim
                idx[a] = slice(1, n - 1)
                out = fft.dst(np.sqrt(h) * out[tuple(idx)], type=1, axis=a, norm="ortho")
            else:
                out = fft.fft(np.sqrt(h) * out, axis=a, norm="ortho")
        return out

    def inverse(self, c: np.ndarray) -> np.ndarray:
        out = np.asarray(c)
        h = self.grid.h
        for a in reversed(range(3)):
            k = self.kinds[a]
            n = self.grid.dims[a]
            if k == "N":
                out = fft.idct(out, type=1, axis=a, norm="ortho")
                out = out / _shape_along(np.sqrt(h) * _end_scale(n), a, out.ndim)
            elif k == "D":
                inner = fft.idst(out, type=1, axis=a, norm="ortho") / np.sqrt(h)
                pad = [(0, 0)] * out.ndim
                pad[a] = (1, 1)
                out = np.pad(inner, pad)
            else:
                out = fft.ifft(out, axis=a, norm="ortho") / np.sqrt(h)
        if self.is_complex:
            out = out.real
        return out

    def eigenmode(self, index: tuple[int, int, int]) -> np.ndarray:
        """Nodal values of one normalized eigenfunction (coefficient-grid index)."""
        shape = tuple(len(axis_eigenvalues(self.grid.dims[a], self.grid.h, k))
                      for a, k in enumerate(self.kinds))
        c = np.zeros(shape, dtype=complex if self.is_complex else float)
        c[tuple(index)] = 1.0
        return self.inverse(c)


def scalar_laplacian_transform(grid: Grid, per_axis_bc) -> SpectralPlan:
    """Plan for per-axis conditions given as letters from {"D", "N", "P"}."""
    return SpectralPlan(grid, tuple(str(k).upper() for k in per_axis_bc))


def component_plans(grid: Grid, bc: BC | str, p: int) -> list[SpectralPlan]:
    """One plan per component of a p-form, matching the flow's reflection rules."""
    bc = BC(bc)
    return [
        SpectralPlan(grid, tuple(_KIND[t] for t in component_parity(bc, s)))
        for s in COMPONENTS[p]
    ]


def ha_norm(form: np.ndarray, a: float, grid: Grid, bc: BC | str, p: int = 1) -> float:
    """||(1 - Delta)^{a/2} form||_2 for a form array (ncomp, n1, n2, n3, m)."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"H_a norm needs a in [0, 1], got {a}")
    total = 0.0
    for c, plan in enumerate(component_plans(grid, bc, p)):
        coef = plan.forward(form[c])
        weight = (1.0 + plan.eigenvalues) ** a
        total += float(np.sum(weight[..., None] * np.abs(coef) ** 2))
    return float(np.sqrt(total))


def apply_heat(form: np.ndarray, t: float, grid: Grid, bc: BC | str, p: int = 1) -> np.ndarray:
    """exp(t Delta) applied componentwise through the spectral plans."""
    out = np.empty_like(form, dtype=float)
    for c, plan in enumerate(component_plans(grid, bc, p)):
        coef = plan.forward(form[c])
        out[c] = plan.inverse(np.exp(-t * plan.eigenvalues)[..., None] * coef)
    return out


__all__ = [
    "SpectralPlan",
    "scalar_laplacian_transform",
    "component_plans",
    "ha_norm",
    "apply_heat",
    "axis_eigenvalues",
]
