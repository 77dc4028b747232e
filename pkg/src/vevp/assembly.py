"""Global operators and load vectors for the fully discrete scheme.

Element matrices are computed for all triangles at once and scattered
through scipy's COO -> CSR conversion, which sums duplicates in a fixed
order, so assembly is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import constitutive as cl
from .constitutive import MaterialParams
from .fespace import (MIDPOINT_BARY, basis_gradients, element_strain_matrices, element_vector_dofs,
                      gradient_operator, quadrature_points, strain_operator, vector_mass)
from .mesh import Mesh

# 2-point Gauss rule on [0, 1]
GAUSS_XI = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_W = np.array([0.5, 0.5])

LoadFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def _scatter(local: np.ndarray, rdofs: np.ndarray, cdofs: np.ndarray, shape) -> sp.csr_matrix:
    rows = np.broadcast_to(rdofs[:, :, None], local.shape)
    cols = np.broadcast_to(cdofs[:, None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def assemble_mass(mesh: Mesh, rho: float) -> sp.csr_matrix:
    """Consistent P1 mass on vector DOFs, scaled by ``rho``."""
    if not rho > 0:
        raise ValueError("density must be positive")
    return (rho * vector_mass(mesh)).tocsr()


def assemble_elastic(mesh: Mesh, params: MaterialParams) -> sp.csr_matrix:
    """``int B eps(phi_j) : eps(phi_i)``."""
    B = element_strain_matrices(mesh)
    area = np.abs(mesh.areas())
    D = cl.elastic_matrix(params.E, params.r) * cl.PAIRING_WEIGHTS[:, None]
    local = area[:, None, None] * np.einsum("mki,kl,mlj->mij", B, D, B)
    dofs = element_vector_dofs(mesh)
    n = 2 * mesh.n_nodes
    return _scatter(local, dofs, dofs, (n, n))


def assemble_viscous(mesh: Mesh, params: MaterialParams) -> sp.csr_matrix:
    return (params.theta * assemble_elastic(mesh, params)).tocsr()


def assemble_permittivity(mesh: Mesh, params: MaterialParams) -> sp.csr_matrix:
    """Anisotropic Laplace stiffness ``int beta grad phi_j . grad phi_i``."""
    beta = np.asarray(params.permittivity)
    if np.any(beta <= 0):
        raise ValueError("permittivity must be positive")
    g, area = basis_gradients(mesh)
    local = np.abs(area)[:, None, None] * np.einsum("mik,k,mjk->mij", g, beta, g)
    n = mesh.n_nodes
    return _scatter(local, mesh.triangles, mesh.triangles, (n, n))


def assemble_coupling(mesh: Mesh, params: MaterialParams) -> sp.csr_matrix:
    """``C[psi, w] = int (E eps(w)) . grad psi``, shape ``(N, 2 N)``."""
    B = element_strain_matrices(mesh)
    g, area = basis_gradients(mesh)
    P = cl.piezo_voigt(params.piezo)
    local = np.abs(area)[:, None, None] * np.einsum("mak,kl,mlj->maj", g, P, B)
    return _scatter(local, mesh.triangles, element_vector_dofs(mesh), (mesh.n_nodes, 2 * mesh.n_nodes))


def assemble_coupling_adjoint(mesh: Mesh, params: MaterialParams) -> sp.csr_matrix:
    """``int (E* grad phi) : eps(w)`` with ``e*_ijk = e_kij``, shape ``(2 N, N)``.

    Built from the full third-order tensor and full strain tensors of the
    basis, independently of :func:`assemble_coupling`; the two must be
    exact transposes.
    """
    g, area = basis_gradients(mesh)
    e = cl.piezo_tensor(params.piezo)
    e_star = np.transpose(e, (1, 2, 0))  # e_star[i, j, k] = e[k, i, j]
    m = mesh.n_triangles
    # full strain tensor of basis (node a, component c): 0.5 (d_ic g_aj + d_jc g_ai)
    eye = np.eye(2)
    eps = 0.5 * (np.einsum("ic,maj->macij", eye, g) + np.einsum("jc,mai->macij", eye, g))
    local = np.abs(area)[:, None, None, None] * np.einsum("ijk,macij,mbk->macb", e_star, eps, g)
    local = local.reshape(m, 6, 3)
    return _scatter(local, element_vector_dofs(mesh), mesh.triangles, (2 * mesh.n_nodes, mesh.n_nodes))


def _edge_gauss(mesh: Mesh, sel: np.ndarray):
    edges = mesh.edges[sel]
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    length = np.hypot(*(b - a).T)
    pts = a[:, None, :] * (1 - GAUSS_XI)[None, :, None] + b[:, None, :] * GAUSS_XI[None, :, None]
    return edges, pts, length


def _edge_load(mesh: Mesh, sel: np.ndarray, values: np.ndarray, length: np.ndarray, ncomp: int) -> np.ndarray:
    """Integrate Gauss-point ``values`` (E, 2[, ncomp]) against P1 basis on edges."""
    edges = mesh.edges[sel]
    vals = values.reshape(len(edges), 2, ncomp)
    wl = GAUSS_W[None, :, None] * length[:, None, None]
    fa = np.sum(wl * vals * (1 - GAUSS_XI)[None, :, None], axis=1)
    fb = np.sum(wl * vals * GAUSS_XI[None, :, None], axis=1)
    out = np.zeros(ncomp * mesh.n_nodes)
    for c in range(ncomp):
        np.add.at(out, ncomp * edges[:, 0] + c, fa[:, c])
        np.add.at(out, ncomp * edges[:, 1] + c, fb[:, c])
    return out


def _volume_load(mesh: Mesh, fn, t: float, ncomp: int) -> np.ndarray:
    q = quadrature_points(mesh)
    val = np.asarray(fn(q[..., 0], q[..., 1], t), dtype=float)
    val = np.broadcast_to(val, q.shape[:2] + ((ncomp,) if ncomp > 1 else ()))
    if ncomp == 1:
        val = val[..., None]
    area = np.abs(mesh.areas())
    loc = np.einsum("qi,mqc->mic", MIDPOINT_BARY, val) * (area / 3.0)[:, None, None]
    out = np.zeros(ncomp * mesh.n_nodes)
    dofs = element_vector_dofs(mesh) if ncomp == 2 else mesh.triangles
    np.add.at(out, dofs.ravel(), loc.reshape(len(area), -1).ravel())
    return out


def assemble_force(mesh: Mesh, f0: LoadFn | None, fF: LoadFn | None, t: float) -> np.ndarray:
    """Volume force (edge-midpoint rule) plus traction on ``F`` edges (2-point Gauss)."""
    out = np.zeros(2 * mesh.n_nodes)
    if f0 is not None:
        out += _volume_load(mesh, f0, t, 2)
    if fF is not None:
        sel = mesh.mech == "F"
        if np.any(sel):
            _, pts, length = _edge_gauss(mesh, sel)
            val = np.broadcast_to(np.asarray(fF(pts[..., 0], pts[..., 1], t), dtype=float), pts.shape)
            out += _edge_load(mesh, sel, val, length, 2)
    return out


def assemble_charge(mesh: Mesh, q0: LoadFn | None, qF: LoadFn | None, t: float) -> np.ndarray:
    """Volume charge plus surface charge on ``B`` edges."""
    out = np.zeros(mesh.n_nodes)
    if q0 is not None:
        out += _volume_load(mesh, q0, t, 1)
    if qF is not None:
        sel = mesh.elec == "B"
        if np.any(sel):
            _, pts, length = _edge_gauss(mesh, sel)
            val = np.broadcast_to(np.asarray(qF(pts[..., 0], pts[..., 1], t), dtype=float), pts.shape[:2])
            out += _edge_load(mesh, sel, val[..., None], length, 1)
    return out


def assemble_contact(mesh: Mesh, u_prev: np.ndarray, params: MaterialParams) -> np.ndarray:
    """``j(u_prev, w) = int_C p(u_nu - s) w_nu`` for every vector basis ``w``.

    Enters the velocity equation's right-hand side with a minus sign.
    """
    out = np.zeros(2 * mesh.n_nodes)
    sel = mesh.mech == "C"
    if not np.any(sel) or params.c_p == 0:
        return out
    edges, _, length = _edge_gauss(mesh, sel)
    nu = mesh.normals[sel]
    u = np.asarray(u_prev, dtype=float).reshape(-1, 2)
    ua = np.einsum("ec,ec->e", u[edges[:, 0]], nu)
    ub = np.einsum("ec,ec->e", u[edges[:, 1]], nu)
    un = ua[:, None] * (1 - GAUSS_XI)[None, :] + ub[:, None] * GAUSS_XI[None, :]
    pres = cl.normal_compliance_p(un - params.s_gap, params.c_p)
    val = pres[..., None] * nu[:, None, :]
    return _edge_load(mesh, sel, val, length, 2)


def assemble_viscoplastic_load(M_acc: np.ndarray, mesh: Mesh) -> np.ndarray:
    """``int M_acc : eps(w)`` for every vector basis ``w``."""
    M_acc = np.asarray(M_acc, dtype=float)
    if M_acc.shape != (mesh.n_triangles, 3):
        raise ValueError(f"memory tensor has shape {M_acc.shape}, expected ({mesh.n_triangles}, 3)")
    B = element_strain_matrices(mesh)
    area = np.abs(mesh.areas())
    loc = area[:, None] * np.einsum("mki,mk->mi", B, M_acc * cl.PAIRING_WEIGHTS)
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, element_vector_dofs(mesh).ravel(), loc.ravel())
    return out


def apply_dirichlet(A: sp.spmatrix, constrained: np.ndarray) -> sp.csr_matrix:
    """Zero constrained rows/columns and put 1 on their diagonal."""
    A = sp.csr_matrix(A)
    keep = np.ones(A.shape[0])
    keep[constrained] = 0.0
    Dk = sp.diags(keep)
    unit = np.zeros(A.shape[0])
    unit[constrained] = 1.0
    out = (Dk @ A @ Dk + sp.diags(unit)).tocsr()
    out.eliminate_zeros()
    return out


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    """Time-independent operators plus cached element-wise maps.

    ``M`` already includes the density.
    """

    M: sp.csr_matrix
    K_B: sp.csr_matrix
    K_A: sp.csr_matrix
    K_beta: sp.csr_matrix
    C: sp.csr_matrix
    S: sp.csr_matrix  # strain operator (3M x 2N)
    G: sp.csr_matrix  # gradient operator (2M x N)
    StW: sp.csr_matrix  # (2N x 3M): memory tensor -> load vector

    @classmethod
    def build(cls, mesh: Mesh, params: MaterialParams) -> "AssembledOperators":
        K_B = assemble_elastic(mesh, params)
        S = strain_operator(mesh)
        w = np.repeat(np.abs(mesh.areas()), 3) * np.tile(cl.PAIRING_WEIGHTS, mesh.n_triangles)
        return cls(
            M=assemble_mass(mesh, params.rho),
            K_B=K_B,
            K_A=(params.theta * K_B).tocsr(),
            K_beta=assemble_permittivity(mesh, params),
            C=assemble_coupling(mesh, params),
            S=S,
            G=gradient_operator(mesh),
            StW=(S.T @ sp.diags(w)).tocsr(),
        )
