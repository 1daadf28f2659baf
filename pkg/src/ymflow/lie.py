"""Small-matrix kernels for the structure group K in {U(1), SU(2)}.

Algebra elements are stored as real coefficient vectors in an orthonormal basis
of the Lie algebra; matrices are only materialized inside kernels.  All kernels
broadcast over leading axes, so a whole field of coefficients ``(..., m)`` or of
group elements ``(..., N, N)`` can be passed at once.

The inner product on the algebra is ``<X, Y> = -c * Re tr(X Y)`` with ``c`` fixed
per group so that the basis below is orthonormal:

* U(1): basis ``i`` with ``c = 1``;
* SU(2): basis ``e_k = -i sigma_k / 2`` with ``c = 2``.  With this choice the
  commutator of basis elements is ``[e_a, e_b] = eps_abc e_c``, i.e. the bracket
  is the cross product of coefficient vectors (see ``GroupSpec.structure``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "GroupSpec",
    "group",
    "bracket",
    "inner",
    "to_matrix",
    "from_matrix",
    "expm",
    "adjoint_action",
    "project_to_group",
    "random_algebra",
    "unitarity_residual",
    "StructureError",
]


class StructureError(ValueError):
    """Raised when operands belong to incompatible groups or shapes."""


_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class GroupSpec:
    group_id: str
    matrix_dim: int
    algebra_dim: int
    trace_scale: float
    basis: np.ndarray = field(repr=False, compare=False)
    structure: np.ndarray = field(repr=False, compare=False)

    @property
    def abelian(self) -> bool:
        return self.group_id == "U1"

    def header(self) -> dict:
        return {
            "group_id": self.group_id,
            "matrix_dim": self.matrix_dim,
            "algebra_dim": self.algebra_dim,
        }


def _structure_constants(basis: np.ndarray, c: float) -> np.ndarray:
    # f[a, b, k] = <[e_a, e_b], e_k>
    comm = np.einsum("aij,bjk->abik", basis, basis) - np.einsum(
        "bij,ajk->abik", basis, basis
    )
    return -c * np.einsum("abij,kji->abk", comm, basis).real


@lru_cache(maxsize=None)
def group(group_id: str) -> GroupSpec:
    """Return the (cached) GroupSpec for ``"U1"`` or ``"SU2"``."""
    gid = group_id.upper().replace("(", "").replace(")", "")
    if gid == "U1":
        basis = np.array([[[1j]]])
        c = 1.0
    elif gid == "SU2":
        basis = -0.5j * _PAULI
        c = 2.0
    else:
        raise StructureError(f"unsupported group {group_id!r}")
    basis.setflags(write=False)
    f = _structure_constants(basis, c)
    f.setflags(write=False)
    return GroupSpec(gid, basis.shape[1], basis.shape[0], c, basis, f)


def _check(spec: GroupSpec, *arrays: np.ndarray) -> None:
    for a in arrays:
        if np.shape(a)[-1] != spec.algebra_dim:
            raise StructureError(
                f"coefficient axis has length {np.shape(a)[-1]}, "
                f"{spec.group_id} needs {spec.algebra_dim}"
            )


def bracket(spec: GroupSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lie bracket [X, Y] in coefficients."""
    _check(spec, x, y)
    if spec.abelian:
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
    return np.cross(x, y)


def inner(spec: GroupSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check(spec, x, y)
    return np.sum(np.asarray(x) * np.asarray(y), axis=-1)


def to_matrix(spec: GroupSpec, x: np.ndarray) -> np.ndarray:
    _check(spec, x)
    return np.tensordot(np.asarray(x, dtype=float), spec.basis, axes=([-1], [0]))


def from_matrix(spec: GroupSpec, m: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an arbitrary matrix onto the algebra."""
    m = np.asarray(m)
    if m.shape[-2:] != (spec.matrix_dim, spec.matrix_dim):
        raise StructureError(f"matrix shape {m.shape[-2:]} does not match {spec.group_id}")
    # <e_k, M> = c Re tr(e_k^dagger M)
    return spec.trace_scale * np.einsum("kij,...ij->...k", spec.basis.conj(), m).real


def expm(spec: GroupSpec, x: np.ndarray) -> np.ndarray:
    """Exact exponential of algebra coefficients (Euler / Rodrigues forms)."""
    x = np.asarray(x, dtype=float)
    _check(spec, x)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("expm: non-finite algebra coefficients")
    if spec.abelian:
        return np.exp(1j * x)[..., None]
    # exp(-i/2 theta n.sigma) = cos(theta/2) I - i sin(theta/2) n.sigma
    theta = np.sqrt(np.sum(x * x, axis=-1))
    half = 0.5 * theta
    # sin(theta/2)/theta, finite at theta = 0
    sinc = 0.5 * np.sinc(half / np.pi)
    a = np.cos(half)
    b = sinc[..., None] * x
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(x.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a - 1j * bz
    out[..., 0, 1] = -1j * bx - by
    out[..., 1, 0] = -1j * bx + by
    out[..., 1, 1] = a + 1j * bz
    return out


def dagger(g: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(g, -1, -2))


def adjoint_action(spec: GroupSpec, g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Coefficients of g^{-1} X g."""
    g = np.asarray(g)
    if g.shape[-2:] != (spec.matrix_dim, spec.matrix_dim):
        raise StructureError("group element dimension mismatch")
    if spec.abelian:
        return np.broadcast_to(np.asarray(x, dtype=float),
                               np.broadcast_shapes(g.shape[:-2] + (1,), np.shape(x))).copy()
    xm = to_matrix(spec, x)
    return from_matrix(spec, dagger(g) @ xm @ g)


def unitarity_residual(g: np.ndarray) -> float:
    g = np.asarray(g)
    eye = np.eye(g.shape[-1])
    r = dagger(g) @ g - eye
    return float(np.max(np.abs(r))) if r.size else 0.0


def project_to_group(spec: GroupSpec, m: np.ndarray) -> np.ndarray:
    """Nearest group element by polar decomposition (determinant fixed for SU(2))."""
    m = np.asarray(m, dtype=complex)
    if spec.abelian:
        mod = np.abs(m)
        if np.any(mod < 1e-300):
            raise FloatingPointError("project_to_group: singular U(1) factor")
        return m / mod
    u, s, vh = np.linalg.svd(m)
    if np.any(s[..., -1] < 1e-12 * np.maximum(s[..., 0], 1e-300)):
        raise FloatingPointError("project_to_group: singular matrix")
    q = u @ vh
    det = np.linalg.det(q)
    # U(2) -> SU(2): divide out a square root of the determinant phase
    return q / np.sqrt(det)[..., None, None]


def random_algebra(spec: GroupSpec, scale: float, seed: int, shape: tuple = ()) -> np.ndarray:
    if scale < 0:
        raise ValueError("scale must be non-negative")
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal(tuple(shape) + (spec.algebra_dim,))
