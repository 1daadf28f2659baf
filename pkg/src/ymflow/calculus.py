"""Collocated discrete exterior calculus on flat boxes and 3-tori.

Every component of a p-form lives on the grid nodes.  Form arrays have shape
``(ncomp, n1, n2, n3, m)`` where ``m`` is the algebra dimension; 0- and 3-forms
carry a single component.  Components are labelled by oriented index tuples:

    degree 0: ()
    degree 1: (0,), (1,), (2,)
    degree 2: (1, 2), (2, 0), (0, 1)
    degree 3: (0, 1, 2)

Derivatives are centered differences.  At box faces the stencil is closed by
reflecting each component through the face: a component whose index set is S is
reflected oddly along the axes in S and evenly along the others for Neumann
(absolute) conditions, and the other way round for Dirichlet (relative)
conditions.  Odd components vanish on the corresponding faces; those entries are
masked.  With trapezoidal node masses the reflected difference operators satisfy
``D_odd = -W^{-1} D_even^T W`` exactly, so the stencil codifferential below is the
exact mass-weighted adjoint of ``d``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar

import numpy as np
import scipy.sparse as sp

COMPONENTS = {
    0: [()],
    1: [(0,), (1,), (2,)],
    2: [(1, 2), (2, 0), (0, 1)],
    3: [(0, 1, 2)],
}


class BC(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, int, int]
    h: float
    domain: str = "box"

    max_sites: ClassVar[int] = 96**3

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 3:
            raise GridError("grid needs three axes")
        if min(dims) < 4:
            raise GridError(f"each axis needs at least 4 nodes, got {dims}")
        if not self.h > 0:
            raise GridError("spacing must be positive")
        if self.domain not in ("box", "torus"):
            raise GridError(f"unknown domain kind {self.domain!r}")
        if np.prod(dims) > self.max_sites:
            raise GridError(f"{np.prod(dims)} sites exceed the memory cap {self.max_sites}")

    @classmethod
    def unit_box(cls, n: int) -> "Grid":
        return cls((n, n, n), 1.0 / (n - 1), "box")

    @classmethod
    def unit_torus(cls, n: int) -> "Grid":
        return cls((n, n, n), 1.0 / n, "torus")

    @property
    def periodic(self) -> bool:
        return self.domain == "torus"

    @property
    def lengths(self) -> tuple[float, float, float]:
        if self.periodic:
            return tuple(n * self.h for n in self.dims)
        return tuple((n - 1) * self.h for n in self.dims)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def sites(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, a: int) -> np.ndarray:
        return self.h * np.arange(self.dims[a])

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")

    def axis_weights(self, a: int) -> np.ndarray:
        w = np.full(self.dims[a], self.h)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.h
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal node masses, shape ``dims``."""
        w0, w1, w2 = (self.axis_weights(a) for a in range(3))
        return w0[:, None, None] * w1[None, :, None] * w2[None, None, :]

    def header(self) -> dict:
        return {"dims": list(self.dims), "h": self.h, "domain": self.domain}


def check_pairing(grid: Grid, bc: BC) -> BC:
    bc = BC(bc)
    if grid.periodic != (bc is BC.PERIODIC):
        raise GridError(
            f"boundary condition {bc.value!r} cannot be used on a {grid.domain} domain"
        )
    return bc


def component_parity(bc: BC, index_set: tuple[int, ...]) -> tuple[str, str, str]:
    """Per-axis reflection type ('e', 'o' or 'p') of one form component."""
    if bc is BC.PERIODIC:
        return ("p", "p", "p")
    inside = bc is BC.NEUMANN
    return tuple("o" if ((a in index_set) == inside) else "e" for a in range(3))


# ---------------------------------------------------------------- 1-d stencils


def diff(f: np.ndarray, axis: int, parity: str, h: float) -> np.ndarray:
    """Centered difference of ``f`` along ``axis`` with the given closure."""
    if parity == "p":
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    if parity == "e":
        out[0] = 0.0
        out[-1] = 0.0
    else:
        out[0] = f[1] / h
        out[-1] = -f[-2] / h
    return np.moveaxis(out, 0, axis)


def diff_matrix(n: int, h: float, parity: str) -> sp.csr_matrix:
    """Sparse matrix of :func:`diff` on one axis (independent assembly)."""
    rows, cols, vals = [], [], []
    c = 1.0 / (2 * h)
    if parity == "p":
        for i in range(n):
            rows += [i, i]
            cols += [(i + 1) % n, (i - 1) % n]
            vals += [c, -c]
    else:
        for i in range(1, n - 1):
            rows += [i, i]
            cols += [i + 1, i - 1]
            vals += [c, -c]
        if parity == "o":
            rows += [0, n - 1]
            cols += [1, n - 2]
            vals += [2 * c, -2 * c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------- complex


def _pair(i: int, j: int) -> tuple[int, float]:
    """Storage slot and sign of the 2-form component omega_ij."""
    k = 3 - i - j
    return k, (1.0 if (i, j) in ((1, 2), (2, 0), (0, 1)) else -1.0)


class Calculus:
    """Exterior derivative, codifferential and masses for one (grid, bc) pair."""

    def __init__(self, grid: Grid, bc: BC | str):
        self.grid = grid
        self.bc = check_pairing(grid, BC(bc))
        self.parity = {
            p: [component_parity(self.bc, s) for s in COMPONENTS[p]] for p in range(4)
        }
        self._masks = {p: self._build_mask(p) for p in range(4)}

    def __repr__(self):
        return f"Calculus({self.grid!r}, {self.bc.value})"

    def _build_mask(self, p: int) -> np.ndarray:
        n = self.grid.dims
        mask = np.ones((len(COMPONENTS[p]),) + n)
        for c, par in enumerate(self.parity[p]):
            for a, t in enumerate(par):
                if t == "o":
                    idx = [slice(None)] * 3
                    for end in (0, -1):
                        idx[a] = end
                        mask[(c,) + tuple(idx)] = 0.0
        return mask[..., None]

    def mask(self, p: int) -> np.ndarray:
        return self._masks[p]

    def apply_mask(self, form: np.ndarray, p: int) -> np.ndarray:
        if self.bc is BC.PERIODIC:
            return form
        return form * self._masks[p]

    def shape(self, p: int, m: int) -> tuple[int, ...]:
        return (len(COMPONENTS[p]),) + self.grid.dims + (m,)

    # -- stencil application ------------------------------------------------

    def _D(self, comp: np.ndarray, p: int, c: int, axis: int) -> np.ndarray:
        # spatial axes of a single component array (n1, n2, n3, m) are 0..2
        return diff(comp, axis, self.parity[p][c][axis], self.grid.h)

    def d(self, form: np.ndarray, p: int) -> np.ndarray:
        """Exterior derivative of a p-form array, p in {0, 1, 2}."""
        D = self._D
        if p == 0:
            f = form[0]
            out = np.stack([D(f, 0, 0, a) for a in range(3)])
        elif p == 1:
            out = np.empty_like(form)
            for k, (i, j) in enumerate(COMPONENTS[2]):
                out[k] = D(form[j], 1, j, i) - D(form[i], 1, i, j)
        elif p == 2:
            out = (D(form[0], 2, 0, 0) + D(form[1], 2, 1, 1) + D(form[2], 2, 2, 2))[None]
        else:
            raise GridError(f"d is defined on degrees 0..2, got {p}")
        return self.apply_mask(out, p + 1)

    def codiff(self, form: np.ndarray, q: int) -> np.ndarray:
        """Codifferential of a q-form array, returning a (q-1)-form."""
        D = self._D
        if q == 1:
            out = -(D(form[0], 1, 0, 0) + D(form[1], 1, 1, 1) + D(form[2], 1, 2, 2))[None]
        elif q == 2:
            out = np.zeros(self.shape(1, form.shape[-1]))
            for j in range(3):
                for i in range(3):
                    if i == j:
                        continue
                    k, s = _pair(i, j)
                    out[j] -= s * D(form[k], 2, k, i)
        elif q == 3:
            out = -np.stack([D(form[0], 3, 0, a) for a in range(3)])
        else:
            raise GridError(f"codifferential is defined on degrees 1..3, got {q}")
        return self.apply_mask(out, q - 1)

    def laplacian(self, form: np.ndarray, p: int) -> np.ndarray:
        """Hodge Laplacian Delta = -(d*d + dd*) on 0- and 1-forms."""
        out = np.zeros_like(form)
        if p < 3:
            out -= self.codiff(self.d(form, p), p + 1)
        if p > 0:
            out -= self.d(self.codiff(form, p), p - 1)
        return out

    # -- quadrature ---------------------------------------------------------

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Mass-weighted L2 inner product of two forms of equal degree."""
        w = self.grid.weights
        return float(np.einsum("xyz,cxyzm,cxyzm->", w, a, b))

    def norm2(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    # -- sparse assembly ----------------------------------------------------

    def _axis_operator(self, p: int, c: int, axis: int) -> sp.csr_matrix:
        n, h = self.grid.dims, self.grid.h
        mats = [sp.identity(n[a], format="csr") for a in range(3)]
        mats[axis] = diff_matrix(n[axis], h, self.parity[p][c][axis])
        return sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")

    def mass_vector(self, p: int) -> np.ndarray:
        return np.tile(self.grid.weights.ravel(), len(COMPONENTS[p]))

    def mask_vector(self, p: int) -> np.ndarray:
        return self._masks[p][..., 0].ravel()

    def build_d(self, p: int) -> "DiscreteOperator":
        return build_d(self.grid, self.bc, p)


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse map between flattened form arrays (component-major, C order)."""

    matrix: sp.csr_matrix
    degree: int
    source_mass: np.ndarray
    target_mass: np.ndarray

    def __call__(self, form: np.ndarray) -> np.ndarray:
        flat = form.reshape(-1, form.shape[-1])
        return (self.matrix @ flat).reshape((-1,) + form.shape[1:])


def build_d(grid: Grid, bc: BC | str, p: int) -> DiscreteOperator:
    """Assemble d on p-forms as a sparse matrix from Kronecker products."""
    if p not in (0, 1, 2):
        raise GridError(f"d is assembled on degrees 0..2, got {p}")
    cal = Calculus(grid, bc)
    src, dst = COMPONENTS[p], COMPONENTS[p + 1]
    N = grid.sites
    blocks = [[None] * len(src) for _ in dst]
    for r, tgt in enumerate(dst):
        for c, s in enumerate(src):
            extra = [a for a in tgt if a not in s]
            if len(extra) != 1 or not set(s) <= set(tgt):
                continue
            a = extra[0]
            # sign of dx^a ^ dx^s relative to the stored orientation of tgt
            perm = (a,) + s
            sign = _perm_sign(perm, tgt)
            blocks[r][c] = sign * cal._axis_operator(p, c, a)
    for r in range(len(dst)):
        for c in range(len(src)):
            if blocks[r][c] is None:
                blocks[r][c] = sp.csr_matrix((N, N))
    K = sp.bmat(blocks, format="csr")
    Pin = sp.diags(cal.mask_vector(p))
    Pout = sp.diags(cal.mask_vector(p + 1))
    return DiscreteOperator((Pout @ K @ Pin).tocsr(), p, cal.mass_vector(p), cal.mass_vector(p + 1))


def codifferential(op_d: DiscreteOperator) -> DiscreteOperator:
    """Mass-weighted transpose M_p^{-1} d^T M_{p+1}."""
    Minv = sp.diags(1.0 / op_d.source_mass)
    M = sp.diags(op_d.target_mass)
    mat = (Minv @ op_d.matrix.T @ M).tocsr()
    return DiscreteOperator(mat, op_d.degree + 1, op_d.target_mass, op_d.source_mass)


def _perm_sign(perm: tuple[int, ...], target: tuple[int, ...]) -> float:
    idx = [target.index(a) for a in perm]
    sign = 1.0
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if idx[i] > idx[j]:
                sign = -sign
    return sign


# ---------------------------------------------------------------- interpolation


def interpolate(grid: Grid, form: np.ndarray, point) -> np.ndarray:
    """Trilinear interpolation of every component at one point or a batch.

    ``point`` has shape ``(3,)`` or ``(k, 3)``; the result has shape
    ``(ncomp, m)`` or ``(k, ncomp, m)``.
    """
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    L = np.asarray(grid.lengths)
    n = np.asarray(grid.dims)
    if grid.periodic:
        s = np.mod(x, L) / grid.h
    else:
        tol = 1e-12 * max(L)
        if np.any(x < -tol) or np.any(x > L + tol):
            bad = x[np.any((x < -tol) | (x > L + tol), axis=1)][0]
            raise GridError(f"point {tuple(bad)} lies outside the domain")
        s = np.clip(x, 0.0, L) / grid.h
    i0 = np.floor(s).astype(int)
    if not grid.periodic:
        i0 = np.minimum(i0, n - 2)
    f = s - i0
    out = 0.0
    for corner in np.ndindex(2, 2, 2):
        c = np.asarray(corner)
        idx = i0 + c
        if grid.periodic:
            idx = idx % n
        wgt = np.prod(np.where(c == 1, f, 1.0 - f), axis=1)
        vals = form[:, idx[:, 0], idx[:, 1], idx[:, 2], :]  # (ncomp, k, m)
        out = out + wgt[None, :, None] * vals
    out = np.moveaxis(out, 1, 0)
    return out[0] if single else out
