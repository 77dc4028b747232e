"""Pointwise material laws.

Symmetric 2x2 tensors are stored as ``(t11, t22, t12)`` along the last
axis; every function here broadcasts over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Table 1 piezoelectric / permittivity constants
PIEZO_TABLE1 = ((0.0, 0.0, 12.3), (-5.4, 15.8, 0.0))
PERMITTIVITY_TABLE1 = (916.0, 830.0)

# Frobenius pairing of (t11, t22, t12) storage
PAIRING_WEIGHTS = np.array([1.0, 1.0, 2.0])


@dataclass(frozen=True)
class MaterialParams:
    """Material constants.

    ``piezo`` is the 2x3 matrix ``e_pq`` (column 3 is the shear slot for
    ``(j, k) = (1, 2)`` or ``(2, 1)``), ``permittivity`` the diagonal of
    ``beta``. ``theta`` scales the elastic tensor into the viscous one.
    """

    E: float = 20000.0
    r: float = 0.3
    theta: float = 1e-2
    c_p: float = 1e5
    rho: float = 1.0
    L: float = 1000.0
    g_scale: float = 1e-2
    piezo: tuple = PIEZO_TABLE1
    permittivity: tuple = PERMITTIVITY_TABLE1
    s_gap: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "piezo", tuple(tuple(float(v) for v in row) for row in self.piezo))
        object.__setattr__(self, "permittivity", tuple(float(v) for v in self.permittivity))
        errors = []
        if not self.E > 0:
            errors.append("E must be positive")
        if not 0 <= self.r < 0.5:
            errors.append("Poisson ratio must lie in [0, 0.5)")
        if not self.theta >= 0:
            errors.append("theta must be non-negative")
        if not self.c_p >= 0:
            errors.append("c_p must be non-negative")
        if not self.rho > 0:
            errors.append("rho must be positive")
        if not self.L > 0:
            errors.append("truncation bound L must be positive")
        if not self.g_scale >= 0:
            errors.append("g_scale must be non-negative")
        if np.shape(self.piezo) != (2, 3):
            errors.append("piezo must be a 2x3 matrix")
        if len(self.permittivity) != 2 or min(self.permittivity) <= 0:
            errors.append("permittivity diagonal must have two positive entries")
        if not self.s_gap >= 0:
            errors.append("obstacle gap must be non-negative")
        if errors:
            raise ValueError("; ".join(errors))

    def with_(self, **changes) -> "MaterialParams":
        return replace(self, **changes)

    @property
    def piezo_matrix(self) -> np.ndarray:
        return np.array(self.piezo, dtype=float)

    @property
    def lame(self) -> tuple[float, float]:
        """``(E r / (1 - r^2), E / (1 + r))``."""
        return self.E * self.r / (1.0 - self.r ** 2), self.E / (1.0 + self.r)


def elastic_matrix(E: float, r: float) -> np.ndarray:
    """3x3 matrix acting on ``(t11, t22, t12)`` storage."""
    lam = E * r / (1.0 - r ** 2)
    mu = E / (1.0 + r)
    return np.array([[lam + mu, lam, 0.0], [lam, lam + mu, 0.0], [0.0, 0.0, mu]])


def elastic_apply(tau, E: float, r: float) -> np.ndarray:
    """Plane-stress elasticity: ``Er/(1-r^2) tr(tau) I + E/(1+r) tau``."""
    tau = np.asarray(tau, dtype=float)
    lam = E * r / (1.0 - r ** 2)
    mu = E / (1.0 + r)
    tr = tau[..., 0] + tau[..., 1]
    out = mu * tau
    out[..., 0] += lam * tr
    out[..., 1] += lam * tr
    return out


def viscous_apply(tau, params: MaterialParams) -> np.ndarray:
    return params.theta * elastic_apply(tau, params.E, params.r)


def truncate_phi(tau, L: float) -> np.ndarray:
    """Componentwise clamp to ``[-L, L]``."""
    return np.clip(np.asarray(tau, dtype=float), -L, L)


def viscoplastic_G(sigma, eps, params: MaterialParams) -> np.ndarray:
    """Truncated Maxwell rate ``-g_scale * Phi(sigma)``.

    ``eps`` is accepted for interface compatibility with strain-dependent
    laws and is unused.
    """
    return -params.g_scale * truncate_phi(sigma, params.L)


def normal_compliance_p(r, c_p: float):
    """Obstacle pressure ``c_p * max(0, r)`` for penetration ``r``."""
    return c_p * np.maximum(0.0, r)


def piezo_voigt(piezo) -> np.ndarray:
    """2x3 matrix ``P`` with ``(E eps)_i = P @ (e11, e22, e12)``.

    The shear column is doubled because ``e_i12 = e_i21`` both contribute
    to the contraction ``e_ijk eps_jk``.
    """
    P = np.array(piezo, dtype=float).copy()
    P[:, 2] *= 2.0
    return P


def piezo_apply(eps, piezo) -> np.ndarray:
    """Electric displacement contribution ``e_ijk eps_jk``."""
    return np.asarray(eps, dtype=float) @ piezo_voigt(piezo).T


def piezo_adjoint_apply(q, piezo) -> np.ndarray:
    """Transposed tensor ``e*_ijk q_k = e_kij q_k`` as a ``(t11, t22, t12)`` tensor."""
    return np.asarray(q, dtype=float) @ np.array(piezo, dtype=float)


def piezo_tensor(piezo) -> np.ndarray:
    """Full third-order tensor ``e[i, j, k]`` from the 2x3 storage matrix."""
    e = np.zeros((2, 2, 2))
    P = np.array(piezo, dtype=float)
    for i in range(2):
        e[i, 0, 0] = P[i, 0]
        e[i, 1, 1] = P[i, 1]
        e[i, 0, 1] = e[i, 1, 0] = P[i, 2]
    return e


def von_mises(sigma) -> np.ndarray:
    """Plane-stress von Mises norm."""
    s = np.asarray(sigma, dtype=float)
    s11, s22, s12 = s[..., 0], s[..., 1], s[..., 2]
    return np.sqrt(s11 ** 2 - s11 * s22 + s22 ** 2 + 3.0 * s12 ** 2)


def tensor_dot(a, b) -> np.ndarray:
    """Frobenius product of stored symmetric tensors."""
    return np.sum(np.asarray(a) * np.asarray(b) * PAIRING_WEIGHTS, axis=-1)


def tensor_norm(a) -> np.ndarray:
    return np.sqrt(tensor_dot(a, a))
