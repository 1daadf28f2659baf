"""Connections, curvature and gauge transformations on a collocated grid.

A :class:`FieldSpace` bundles the grid, the boundary condition and the structure
group.  Forms are stored as coefficient arrays of shape ``(ncomp, n1, n2, n3, m)``
(see :mod:`ymflow.calculus`); gauge fields as complex ``(n1, n2, n3, N, N)`` arrays.

Sign conventions.  For a 1-form ``A`` the wedge bracket follows the exterior
derivative pattern with ``D_i`` replaced by ``[A_i, .]``:

    [A ^ a]_i       = [A_i, a]
    [A ^ w]_ij      = [A_i, w_j] - [A_j, w_i]
    [A ^ e]_012     = [A_0, e_12] + [A_1, e_20] + [A_2, e_01]

and the contraction is its exact pointwise adjoint (Ad-invariance gives
``<[X, Y], Z> = -<Y, [X, Z]>``), following the codifferential pattern:

    [A -| w]        = -sum_i [A_i, w_i]
    [A -| e]_j      = -sum_i [A_i, e_ij]

Curvature is ``B_ij = (dA)_ij + [A_i, A_j]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import lie
from .calculus import BC, COMPONENTS, Calculus, Grid, _pair, diff
from .spectral import ha_norm

__all__ = [
    "FieldSpace",
    "Form",
    "GaugeField",
    "BoundaryViolation",
]


class BoundaryViolation(ValueError):
    """A field does not satisfy the constraint of its boundary condition."""


@dataclass(frozen=True, eq=False)
class FieldSpace:
    grid: Grid
    bc: BC
    group: lie.GroupSpec
    cal: Calculus = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bc", BC(self.bc))
        if isinstance(self.group, str):
            object.__setattr__(self, "group", lie.group(self.group))
        object.__setattr__(self, "cal", Calculus(self.grid, self.bc))

    @classmethod
    def make(cls, grid: Grid, bc, group) -> "FieldSpace":
        g = lie.group(group) if isinstance(group, str) else group
        return cls(grid, BC(bc), g)

    def header(self) -> dict:
        return {"grid": self.grid.header(), "bc": self.bc.value, "group": self.group.header()}

    @property
    def m(self) -> int:
        return self.group.algebra_dim

    def zeros(self, p: int) -> np.ndarray:
        return np.zeros(self.cal.shape(p, self.m))

    def form(self, data: np.ndarray, p: int = 1) -> "Form":
        return Form(self, p, self.cal.apply_mask(np.asarray(data, dtype=float), p))

    # ------------------------------------------------------------ brackets

    def br(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.group.abelian:
            return np.zeros(np.broadcast_shapes(x.shape, y.shape))
        return np.cross(x, y)

    def wedge(self, A: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
        """[A ^ w] for a p-form w, p in {0, 1, 2}."""
        br = self.br
        if p == 0:
            out = br(A, w[0][None])
        elif p == 1:
            out = np.empty_like(w)
            for k, (i, j) in enumerate(COMPONENTS[2]):
                out[k] = br(A[i], w[j]) - br(A[j], w[i])
        elif p == 2:
            out = (br(A[0], w[0]) + br(A[1], w[1]) + br(A[2], w[2]))[None]
        else:
            raise ValueError(f"wedge bracket needs degree 0..2, got {p}")
        return self.cal.apply_mask(out, p + 1)

    def contract(self, A: np.ndarray, e: np.ndarray, q: int) -> np.ndarray:
        """[A -| e] for a q-form e, the adjoint of ``wedge`` on (q-1)-forms."""
        br = self.br
        if q == 1:
            out = -(br(A[0], e[0]) + br(A[1], e[1]) + br(A[2], e[2]))[None]
        elif q == 2:
            out = np.zeros(self.cal.shape(1, e.shape[-1]))
            for j in range(3):
                for i in range(3):
                    if i != j:
                        k, s = _pair(i, j)
                        out[j] -= s * br(A[i], e[k])
        elif q == 3:
            out = -np.stack([br(A[a], e[0]) for a in range(3)])
        else:
            raise ValueError(f"contraction needs degree 1..3, got {q}")
        return self.cal.apply_mask(out, q - 1)

    # ------------------------------------------------------------ calculus

    def curvature(self, A: np.ndarray) -> np.ndarray:
        out = self.cal.d(A, 1)
        if not self.group.abelian:
            for k, (i, j) in enumerate(COMPONENTS[2]):
                out[k] += np.cross(A[i], A[j])
            out = self.cal.apply_mask(out, 2)
        return out

    def covariant_d(self, A: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
        out = self.cal.d(w, p)
        if not self.group.abelian:
            out = out + self.wedge(A, w, p)
        return out

    def covariant_codiff(self, A: np.ndarray, e: np.ndarray, q: int) -> np.ndarray:
        out = self.cal.codiff(e, q)
        if not self.group.abelian:
            out = out + self.contract(A, e, q)
        return out

    def covariant_gradient(self, A: np.ndarray | None, w: np.ndarray, p: int) -> np.ndarray:
        """Componentwise nabla^A: shape (3, ncomp, n1, n2, n3, m), first axis = direction."""
        h = self.grid.h
        par = self.cal.parity[p]
        out = np.empty((3,) + w.shape)
        for j in range(3):
            for c in range(w.shape[0]):
                out[j, c] = diff(w[c], j, par[c][j], h)
                if A is not None and not self.group.abelian:
                    out[j, c] += np.cross(A[j], w[c])
        return out

    # ------------------------------------------------------------ norms

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.cal.inner(a, b)

    def l2(self, w: np.ndarray) -> float:
        return self.cal.norm2(w)

    def pointwise(self, w: np.ndarray) -> np.ndarray:
        """|w(x)| over the algebra and form components, shape dims."""
        return np.sqrt(np.einsum("c...m,c...m->...", w, w))

    def norms(self, w: np.ndarray, p: int = 1, A: np.ndarray | None = None) -> dict:
        wt = self.grid.weights
        mod = self.pointwise(w)
        grad = self.covariant_gradient(None, w, p)
        g2 = float(np.einsum("xyz,jcxyzm,jcxyzm->", wt, grad, grad))
        l2sq = float(np.sum(wt * mod**2))
        out = {
            "L2": np.sqrt(l2sq),
            "L6": float(np.sum(wt * mod**6) ** (1.0 / 6.0)),
            "Linf": float(mod.max()),
            "W1": float(np.sqrt(g2 + l2sq)),
        }
        if A is not None:
            gA = self.covariant_gradient(A, w, p)
            out["W1A"] = float(np.sqrt(np.einsum("xyz,jcxyzm,jcxyzm->", wt, gA, gA) + l2sq))
        return out

    def w1a_sq(self, A: np.ndarray | None, w: np.ndarray, p: int) -> float:
        gA = self.covariant_gradient(A, w, p)
        return float(np.einsum("xyz,jcxyzm,jcxyzm->", self.grid.weights, gA, gA)) + self.cal.inner(w, w)

    # ------------------------------------------------------------ gauge action

    def identity_gauge(self) -> "GaugeField":
        N = self.group.matrix_dim
        g = np.broadcast_to(np.eye(N, dtype=complex), self.grid.dims + (N, N)).copy()
        return GaugeField(self, g)

    def gauge_from_algebra(self, alpha: np.ndarray) -> "GaugeField":
        """g = exp(alpha) for a 0-form coefficient array (1, n1, n2, n3, m)."""
        return GaugeField(self, lie.expm(self.group, alpha[0]))

    def pure_gauge(self, g: np.ndarray) -> np.ndarray:
        """g^{-1} dg by central logarithmic differences, one-sided at box faces."""
        h = self.grid.h
        ginv = lie.dagger(g)
        out = np.empty(self.cal.shape(1, self.m))
        for a in range(3):
            if self.grid.periodic:
                dg = (np.roll(g, -1, a) - np.roll(g, 1, a)) / (2 * h)
            else:
                gm = np.moveaxis(g, a, 0)
                dgm = np.empty_like(gm)
                dgm[1:-1] = (gm[2:] - gm[:-2]) / (2 * h)
                dgm[0] = (-3 * gm[0] + 4 * gm[1] - gm[2]) / (2 * h)
                dgm[-1] = (3 * gm[-1] - 4 * gm[-2] + gm[-3]) / (2 * h)
                dg = np.moveaxis(dgm, 0, a)
            out[a] = lie.from_matrix(self.group, ginv @ dg)
        return self.cal.apply_mask(out, 1)

    def check_gauge_boundary(self, g: np.ndarray, tol: float = 1e-10) -> None:
        if self.bc is not BC.DIRICHLET:
            return
        eye = np.eye(self.group.matrix_dim)
        faces = []
        for a in range(3):
            gm = np.moveaxis(g, a, 0)
            faces += [gm[0], gm[-1]]
        worst = max(float(np.max(np.abs(f - eye))) for f in faces)
        if worst > tol:
            raise BoundaryViolation(
                f"Dirichlet gauge transformation must equal I on the boundary (deviation {worst:.3e})"
            )

    def adjoint(self, g: np.ndarray, A: np.ndarray) -> np.ndarray:
        """g^{-1} A g for every component of a form."""
        if self.group.abelian:
            return A.copy()
        R = self.rotation(g)
        return np.einsum("...kl,c...l->c...k", R, A)

    def rotation(self, g: np.ndarray) -> np.ndarray:
        """Coefficient matrix of X -> g^{-1} X g, shape (..., m, m)."""
        spec = self.group
        gi = lie.dagger(g)
        cols = [lie.from_matrix(spec, gi @ spec.basis[l] @ g) for l in range(spec.algebra_dim)]
        return np.stack(cols, axis=-1)

    def gauge_transform(self, A: np.ndarray, g: np.ndarray) -> np.ndarray:
        """A^g = g^{-1} dg + g^{-1} A g."""
        self.check_gauge_boundary(g)
        return self.cal.apply_mask(self.pure_gauge(g) + self.adjoint(g, A), 1)

    def gauge_distance(self, g: np.ndarray, h: np.ndarray, a: float) -> float:
        """rho_a(g, h) = ||g^-1 dg - h^-1 dh||_{H_a} + ||g - h||_{L2(End V)}."""
        diff_form = self.pure_gauge(g) - self.pure_gauge(h)
        term1 = ha_norm(diff_form, a, self.grid, self.bc)
        dgh = np.asarray(g) - np.asarray(h)
        term2 = float(np.sqrt(np.sum(self.grid.weights * np.sum(np.abs(dgh) ** 2, axis=(-1, -2)))))
        return term1 + term2


@dataclass(frozen=True, eq=False)
class Form:
    """A Lie-algebra valued p-form on a FieldSpace (houses A, C, v, B, ...)."""

    space: FieldSpace
    degree: int
    data: np.ndarray

    def _like(self, data):
        return Form(self.space, self.degree, data)

    def __add__(self, other: "Form") -> "Form":
        return self._like(self.data + other.data)

    def __sub__(self, other: "Form") -> "Form":
        return self._like(self.data - other.data)

    def __neg__(self) -> "Form":
        return self._like(-self.data)

    def __mul__(self, s: float) -> "Form":
        return self._like(s * self.data)

    __rmul__ = __mul__

    def l2(self) -> float:
        return self.space.l2(self.data)

    def norms(self, A: "Form | None" = None) -> dict:
        return self.space.norms(self.data, self.degree, None if A is None else A.data)


@dataclass(frozen=True, eq=False)
class GaugeField:
    space: FieldSpace
    elems: np.ndarray

    @cached_property
    def residual(self) -> float:
        return lie.unitarity_residual(self.elems)

    def inverse(self) -> "GaugeField":
        return GaugeField(self.space, lie.dagger(self.elems))

    def __matmul__(self, other: "GaugeField") -> "GaugeField":
        return GaugeField(self.space, self.elems @ other.elems)


# ---------------------------------------------------------------- wrappers on Form


def curvature(A: Form) -> Form:
    return Form(A.space, 2, A.space.curvature(A.data))


def covariant_d(A: Form, w: Form) -> Form:
    if w.degree not in (0, 1, 2):
        raise ValueError(f"covariant_d needs degree 0..2, got {w.degree}")
    return Form(A.space, w.degree + 1, A.space.covariant_d(A.data, w.data, w.degree))


def covariant_codiff(A: Form, e: Form) -> Form:
    if e.degree not in (1, 2, 3):
        raise ValueError(f"covariant_codiff needs degree 1..3, got {e.degree}")
    return Form(A.space, e.degree - 1, A.space.covariant_codiff(A.data, e.data, e.degree))


def pure_gauge(g: GaugeField) -> Form:
    return Form(g.space, 1, g.space.pure_gauge(g.elems))


def gauge_transform(A: Form, g: GaugeField) -> Form:
    return Form(A.space, 1, A.space.gauge_transform(A.data, g.elems))


def gauge_distance(g: GaugeField, h: GaugeField, a: float) -> float:
    return g.space.gauge_distance(g.elems, h.elems, a)


def norms(w: Form, A: Form | None = None) -> dict:
    return w.norms(A)


def smooth_form(space: FieldSpace, p: int, seed: int, amplitude: float = 1.0,
                kmax: int = 2) -> np.ndarray:
    """Random band-limited p-form compatible with the boundary parities.

    Each component is a sum of products of 1-d modes: cosines along even
    axes, sines along odd axes (Box, wavenumber pi k / L) or Fourier modes
    (Torus, 2 pi k / L), k <= kmax, normalized so the sup norm is about ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    grid = space.grid
    mesh = grid.mesh()
    out = np.zeros(space.cal.shape(p, space.m))
    par = space.cal.parity[p]
    for c in range(out.shape[0]):
        for _ in range(3):
            prod = np.ones(grid.dims)
            for a in range(3):
                k = rng.integers(0 if par[c][a] != "o" else 1, kmax + 1)
                L = grid.lengths[a]
                if par[c][a] == "p":
                    phase = rng.uniform(0, 2 * np.pi)
                    prod = prod * np.cos(2 * np.pi * k * mesh[a] / L + phase)
                elif par[c][a] == "o":
                    prod = prod * np.sin(np.pi * k * mesh[a] / L)
                else:
                    prod = prod * np.cos(np.pi * k * mesh[a] / L)
            out[c] += prod[..., None] * rng.standard_normal(space.m)
    return space.cal.apply_mask(amplitude / 3.0 * out, p)
