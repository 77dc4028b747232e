"""P1/P0 discrete spaces on a :class:`~vevp.mesh.Mesh`.

Fields are plain numpy arrays with these layouts:

* vector-P1: ``(2 N,)`` interleaved ``(ux_0, uy_0, ux_1, uy_1, ...)``
* scalar-P1: ``(N,)``
* tensor-P0: ``(M, 3)`` per-triangle ``(t11, t22, t12)``
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshError, refine_uniform

VECTOR_P1 = "vector-P1"
SCALAR_P1 = "scalar-P1"
TENSOR_P0 = "tensor-P0"


@dataclass(frozen=True, eq=False)
class DofMap:
    kind: str
    count: int
    constrained: np.ndarray

    def free(self) -> np.ndarray:
        mask = np.ones(self.count, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def zero_constrained(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float, copy=True)
        if self.kind == TENSOR_P0:
            return out
        out[self.constrained] = 0.0
        return out


def vector_dofs(mesh: Mesh) -> DofMap:
    nodes = mesh.boundary_nodes(mech="D")
    con = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    return DofMap(VECTOR_P1, 2 * mesh.n_nodes, con)


def scalar_dofs(mesh: Mesh) -> DofMap:
    return DofMap(SCALAR_P1, mesh.n_nodes, mesh.boundary_nodes(elec="A"))


def tensor_dofs(mesh: Mesh) -> DofMap:
    return DofMap(TENSOR_P0, 3 * mesh.n_triangles, np.empty(0, dtype=np.int64))


def basis_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients of the three barycentric basis functions.

    Returns ``(grads, area)`` with ``grads`` shaped ``(M, 3, 2)``.
    """
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / (2 * area)
        grads[:, i, 1] = (x[:, k] - x[:, j]) / (2 * area)
    return grads, area


def element_strain_matrices(mesh: Mesh) -> np.ndarray:
    """``(M, 3, 6)`` maps local ``(ux0, uy0, ux1, uy1, ux2, uy2)`` to ``(e11, e22, e12)``."""
    g, _ = basis_gradients(mesh)
    B = np.zeros((mesh.n_triangles, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = 0.5 * g[:, :, 1]
    B[:, 2, 1::2] = 0.5 * g[:, :, 0]
    return B


def element_vector_dofs(mesh: Mesh) -> np.ndarray:
    t = mesh.triangles
    d = np.empty((len(t), 6), dtype=np.int64)
    d[:, 0::2] = 2 * t
    d[:, 1::2] = 2 * t + 1
    return d


def strain_operator(mesh: Mesh) -> sp.csr_matrix:
    """Sparse ``(3 M, 2 N)`` matrix with ``strain(u).ravel() == S @ u``."""
    B = element_strain_matrices(mesh)
    m = mesh.n_triangles
    rows = np.broadcast_to((3 * np.arange(m))[:, None, None] + np.arange(3)[None, :, None], B.shape)
    cols = np.broadcast_to(element_vector_dofs(mesh)[:, None, :], B.shape)
    S = sp.coo_matrix((B.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * m, 2 * mesh.n_nodes))
    return S.tocsr()


def gradient_operator(mesh: Mesh) -> sp.csr_matrix:
    """Sparse ``(2 M, N)`` matrix with ``grad_scalar(phi).ravel() == G @ phi``."""
    g, _ = basis_gradients(mesh)
    m = mesh.n_triangles
    rows = np.broadcast_to((2 * np.arange(m))[:, None, None] + np.arange(2)[None, None, :], g.shape)
    cols = np.broadcast_to(mesh.triangles[:, :, None], g.shape)
    G = sp.coo_matrix((g.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * m, mesh.n_nodes))
    return G.tocsr()


def _check_size(values, expected, what):
    if np.shape(values)[0] != expected:
        raise ValueError(f"{what} has {np.shape(values)[0]} entries, mesh needs {expected}")


def strain(u: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Per-triangle symmetric gradient of a vector-P1 field, ``(M, 3)``."""
    _check_size(u, 2 * mesh.n_nodes, "displacement")
    B = element_strain_matrices(mesh)
    ue = np.asarray(u, dtype=float)[element_vector_dofs(mesh)]
    return np.einsum("mij,mj->mi", B, ue)


def grad_scalar(phi: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Per-triangle gradient of a scalar-P1 field, ``(M, 2)``."""
    _check_size(phi, mesh.n_nodes, "scalar field")
    g, _ = basis_gradients(mesh)
    return np.einsum("mik,mi->mk", g, np.asarray(phi, dtype=float)[mesh.triangles])


# edge-midpoint rule: barycentric coordinates of the three points, weight 1/3
MIDPOINT_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """``(M, 3, 2)`` edge-midpoint quadrature points."""
    return np.einsum("qi,mid->mqd", MIDPOINT_BARY, mesh.nodes[mesh.triangles])


def scalar_mass(mesh: Mesh) -> sp.csr_matrix:
    """Unit-density consistent P1 mass matrix."""
    area = np.abs(mesh.areas())
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    vals = area[:, None, None] * local
    t = mesh.triangles
    rows = np.broadcast_to(t[:, :, None], vals.shape)
    cols = np.broadcast_to(t[:, None, :], vals.shape)
    n = mesh.n_nodes
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def vector_mass(mesh: Mesh) -> sp.csr_matrix:
    """Block mass acting on interleaved vector-P1 DOFs."""
    return sp.kron(scalar_mass(mesh), sp.identity(2), format="csr")


def scalar_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Unit Laplace stiffness ``(grad u, grad v)``."""
    G = gradient_operator(mesh)
    w = np.repeat(np.abs(mesh.areas()), 2)
    return (G.T @ sp.diags(w) @ G).tocsr()


def l2_project(target, space: DofMap, mesh: Mesh, fine: tuple[Mesh, np.ndarray] | None = None) -> np.ndarray:
    """Galerkin L2 projection onto vector-P1, then zeroed on constrained DOFs.

    ``target`` is a callable ``f(x, y) -> (..., 2)``, a vector-P1 array on
    ``mesh``, or ``None`` with ``fine=(fine_mesh, values)`` giving a field on
    a uniform refinement of ``mesh``.
    """
    from .linsolve import factorize

    if space.kind != VECTOR_P1:
        raise ValueError("l2_project expects a vector-P1 space")
    M = vector_mass(mesh)
    if fine is not None:
        fmesh, fvals = fine
        P = prolongation_matrix(mesh, fmesh, VECTOR_P1)
        b = P.T @ (vector_mass(fmesh) @ np.asarray(fvals, dtype=float))
    elif callable(target):
        b = load_vector_volume(mesh, lambda x, y: target(x, y))
    else:
        vals = np.asarray(target, dtype=float)
        _check_size(vals, 2 * mesh.n_nodes, "target")
        b = M @ vals
    x = factorize(M).solve(b)
    return space.zero_constrained(x)


def load_vector_volume(mesh: Mesh, f: Callable) -> np.ndarray:
    """``int f . w`` over the domain for vector-P1 basis functions.

    Uses the edge-midpoint rule (exact to degree 2).
    """
    q = quadrature_points(mesh)
    val = np.asarray(f(q[..., 0], q[..., 1]), dtype=float)
    val = np.broadcast_to(val, q.shape[:2] + (2,))
    area = np.abs(mesh.areas())
    # (M, basis, comp)
    loc = np.einsum("qi,mqc->mic", MIDPOINT_BARY, val) * (area / 3.0)[:, None, None]
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, element_vector_dofs(mesh).ravel(), loc.reshape(len(area), 6).ravel())
    return out


def _levels(coarse: Mesh, fine: Mesh) -> int:
    ratio = fine.n_triangles / coarse.n_triangles
    m = int(round(np.log(ratio) / np.log(4))) if ratio >= 1 else -1
    if m < 0 or coarse.n_triangles * 4 ** m != fine.n_triangles:
        raise MeshError("meshes are not related by uniform refinement")
    return m


def _coordinate_keys(nodes: np.ndarray, scale: float) -> np.ndarray:
    return np.round(nodes / scale).astype(np.int64)


@lru_cache(maxsize=16)
def _node_prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    m = _levels(coarse, fine)
    P = sp.identity(coarse.n_nodes, format="csr")
    mesh = coarse
    for _ in range(m):
        edges = mesh.all_edges()
        n = mesh.n_nodes
        ne = len(edges)
        rows = np.concatenate([np.arange(n), n + np.arange(ne), n + np.arange(ne)])
        cols = np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]])
        vals = np.concatenate([np.ones(n), np.full(2 * ne, 0.5)])
        level = sp.csr_matrix((vals, (rows, cols)), shape=(n + ne, n))
        P = (level @ P).tocsr()
        mesh = refine_uniform(mesh)
    if mesh.n_nodes != fine.n_nodes:
        raise MeshError("fine mesh node count does not match the refinement")
    if np.array_equal(mesh.nodes, fine.nodes):
        return P
    scale = fine.h * 1e-6
    ka = _coordinate_keys(mesh.nodes, scale)
    kb = _coordinate_keys(fine.nodes, scale)
    oa = np.lexsort((ka[:, 1], ka[:, 0]))
    ob = np.lexsort((kb[:, 1], kb[:, 0]))
    if not np.array_equal(ka[oa], kb[ob]):
        raise MeshError("fine mesh is not a uniform refinement of the coarse mesh")
    perm = np.empty(len(ob), dtype=np.int64)
    perm[ob] = oa  # fine node i corresponds to refined node perm[i]
    return P[perm].tocsr()


def prolongation_matrix(coarse: Mesh, fine: Mesh, kind: str = SCALAR_P1) -> sp.csr_matrix:
    """Exact embedding of coarse P1 functions into the nested fine space."""
    P = _node_prolongation(coarse, fine)
    if kind == SCALAR_P1:
        return P
    if kind == VECTOR_P1:
        return sp.kron(P, sp.identity(2), format="csr")
    raise ValueError(f"cannot prolongate {kind} fields")


def prolongate(coarse_values: np.ndarray, coarse_mesh: Mesh, fine_mesh: Mesh) -> np.ndarray:
    """Represent a coarse P1 field (scalar or vector) on a nested fine mesh."""
    vals = np.asarray(coarse_values, dtype=float)
    if len(vals) == coarse_mesh.n_nodes:
        kind = SCALAR_P1
    elif len(vals) == 2 * coarse_mesh.n_nodes:
        kind = VECTOR_P1
    else:
        raise ValueError("field size matches neither scalar nor vector P1 on the coarse mesh")
    return prolongation_matrix(coarse_mesh, fine_mesh, kind) @ vals


def write_field_csv(path: str | Path, values: np.ndarray, kind: str) -> None:
    """Columns: ``node,ux,uy`` (vector-P1), ``node,value`` (scalar-P1),
    ``triangle,t11,t22,t12`` (tensor-P0)."""
    vals = np.asarray(values, dtype=float)
    if kind == VECTOR_P1:
        header, rows = "node,ux,uy", vals.reshape(-1, 2)
    elif kind == SCALAR_P1:
        header, rows = "node,value", vals.reshape(-1, 1)
    elif kind == TENSOR_P0:
        header, rows = "triangle,t11,t22,t12", vals.reshape(-1, 3)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    lines = [header] + [",".join([str(i)] + [repr(v) for v in row]) for i, row in enumerate(rows.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path: str | Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, 1:]
    return vals.ravel() if vals.shape[1] != 3 else vals
