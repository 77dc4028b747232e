"""Hybrid Euler time stepping for the coupled contact problem.

Per step: implicit velocity solve with lagged contact, piezoelectric and
viscoplastic terms; displacement update ``u_n = u_{n-1} + k v_n``;
potential solve; stress and memory update. The velocity matrix
``rho M + k K_A + k^2 K_B`` and the permittivity matrix never change, so
each is factorized once per simulation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import constitutive as cl
from .assembly import AssembledOperators, apply_dirichlet, assemble_charge, assemble_contact, assemble_force
from .constitutive import MaterialParams
from .fespace import l2_project, scalar_dofs, vector_dofs
from .linsolve import CholeskyFactor, factorize, relative_residual
from .mesh import Mesh

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("step count N must be >= 1")
        if not self.T > 0:
            raise ValueError("final time T must be positive")

    @property
    def k(self) -> float:
        return self.T / self.N

    def time(self, n: int) -> float:
        return n * self.T / self.N

    @classmethod
    def from_step(cls, T: float, k: float) -> "SchemeParams":
        N = int(round(T / k))
        if N < 1 or abs(N * k - T) > 1e-9 * T:
            raise ValueError(f"time step {k} does not divide T = {T}")
        return cls(T, N)


@dataclass(frozen=True)
class Loads:
    """Load callables ``f(x, y, t)``; ``None`` means identically zero."""

    f0: Callable | None = None
    fF: Callable | None = None
    q0: Callable | None = None
    qF: Callable | None = None


@dataclass(frozen=True, eq=False)
class Problem:
    mesh: Mesh
    params: MaterialParams
    loads: Loads = Loads()
    u0: Callable | np.ndarray | None = None
    v0: Callable | np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SimState:
    """State at step ``n``.

    ``M_acc`` holds ``k * sum_{j<n} G(sigma_j, eps(u_j))``, the memory term
    that entered ``sigma`` at this step.
    """

    n: int
    t: float
    u: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    M_acc: np.ndarray


@dataclass(eq=False)
class Trajectory:
    mesh: Mesh
    scheme: SchemeParams
    states: list = field(default_factory=list)

    @property
    def final(self) -> SimState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def at_step(self, n: int) -> SimState:
        for s in self.states:
            if s.n == n:
                return s
        raise KeyError(f"no snapshot at step {n}")


class Simulation:
    """Operators, factorizations and stepping for one problem/scheme pair.

    With ``debug=True`` every linear solve is checked against a relative
    residual of 1e-10.
    """

    def __init__(self, problem: Problem, scheme: SchemeParams, debug: bool = False):
        self.problem = problem
        self.scheme = scheme
        self.debug = debug
        self.factorizations = 0
        self.solves = []  # (matrix, rhs, solution) when recording
        self.record_solves = False
        mesh, params = problem.mesh, problem.params
        self.vdofs = vector_dofs(mesh)
        self.sdofs = scalar_dofs(mesh)
        self.ops = AssembledOperators.build(mesh, params)
        k = scheme.k
        ops = self.ops
        self.A_v = apply_dirichlet(ops.M + k * ops.K_A + k * k * ops.K_B, self.vdofs.constrained)
        self.A_phi = apply_dirichlet(ops.K_beta, self.sdofs.constrained)
        self.factor_v = self._factorize(self.A_v)
        self.factor_phi = self._factorize(self.A_phi)
        self.E_adj = np.array(params.piezo, dtype=float)  # (2, 3): grad phi -> E* grad phi
        self._elastic = cl.elastic_matrix(params.E, params.r)

    def _factorize(self, A) -> CholeskyFactor:
        self.factorizations += 1
        return factorize(A)

    def _solve(self, factor, A, b):
        x = factor.solve(b)
        if self.record_solves:
            self.solves.append((A, b.copy(), x.copy()))
        if self.debug:
            res = relative_residual(A, x, b)
            if res > 1e-10:
                raise SimulationError(f"linear solve residual {res:.3e} exceeds 1e-10")
        return x

    # -- pieces ------------------------------------------------------------

    def stress(self, u, v, phi_lag, M_acc) -> np.ndarray:
        """``A eps(v) + B eps(u) + M_acc + E* grad(phi_lag)`` per triangle."""
        ops = self.ops
        m = self.problem.mesh.n_triangles
        eps_u = (ops.S @ u).reshape(m, 3)
        eps_v = (ops.S @ v).reshape(m, 3)
        grad = (ops.G @ phi_lag).reshape(m, 2)
        theta = self.problem.params.theta
        return (theta * eps_v + eps_u) @ self._elastic.T + M_acc + grad @ self.E_adj

    def potential(self, u, t) -> np.ndarray:
        loads = self.problem.loads
        rhs = self.ops.C @ u + assemble_charge(self.problem.mesh, loads.q0, loads.qF, t)
        rhs[self.sdofs.constrained] = 0.0
        return self._solve(self.factor_phi, self.A_phi, rhs)

    def _project(self, data) -> np.ndarray:
        mesh = self.problem.mesh
        if data is None:
            return np.zeros(2 * mesh.n_nodes)
        return l2_project(data, self.vdofs, mesh)

    # -- scheme ------------------------------------------------------------

    def initialize(self) -> SimState:
        mesh = self.problem.mesh
        u = self._project(self.problem.u0)
        v = self._project(self.problem.v0)
        phi = self.potential(u, 0.0)
        M_acc = np.zeros((mesh.n_triangles, 3))
        sigma = self.stress(u, v, phi, M_acc)
        return SimState(0, 0.0, u, v, phi, sigma, M_acc)

    def step(self, state: SimState) -> SimState:
        ops, params, mesh = self.ops, self.problem.params, self.problem.mesh
        k = self.scheme.k
        n = state.n + 1
        t = self.scheme.time(n)
        loads = self.problem.loads
        eps_prev = (ops.S @ state.u).reshape(-1, 3)
        M_acc = state.M_acc + k * cl.viscoplastic_G(state.sigma, eps_prev, params)

        rhs = ops.M @ state.v
        rhs += k * assemble_force(mesh, loads.f0, loads.fF, t)
        rhs -= k * assemble_contact(mesh, state.u, params)
        rhs += k * (ops.C.T @ state.phi)
        rhs -= k * (ops.K_B @ state.u)
        rhs -= k * (ops.StW @ M_acc.ravel())
        rhs[self.vdofs.constrained] = 0.0
        v = self._solve(self.factor_v, self.A_v, rhs)
        u = state.u + k * v
        phi = self.potential(u, t)
        sigma = self.stress(u, v, state.phi, M_acc)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(phi)) and np.all(np.isfinite(sigma))):
            raise SimulationError(f"non-finite values at step {n}")
        return SimState(n, t, u, v, phi, sigma, M_acc)

    def run(self, snapshot_stride: int = 1, callback: Callable[[SimState], None] | None = None) -> Trajectory:
        """Run all ``N`` steps, keeping every ``snapshot_stride``-th state and the last."""
        if snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        traj = Trajectory(self.problem.mesh, self.scheme)
        state = self.initialize()
        traj.states.append(state)
        if callback:
            callback(state)
        for _ in range(self.scheme.N):
            state = self.step(state)
            if callback:
                callback(state)
            if state.n % snapshot_stride == 0 or state.n == self.scheme.N:
                traj.states.append(state)
        log.debug("run finished: %d steps, %d factorizations", self.scheme.N, self.factorizations)
        return traj


def initialize(problem: Problem, scheme: SchemeParams) -> tuple[Simulation, SimState]:
    sim = Simulation(problem, scheme)
    return sim, sim.initialize()


def run(problem: Problem, scheme: SchemeParams, snapshot_stride: int = 1, callback=None) -> Trajectory:
    return Simulation(problem, scheme).run(snapshot_stride, callback)


def discrete_energy(sim: Simulation, state: SimState) -> float:
    """``1/2 v^T (rho M) v + 1/2 u^T K_B u``."""
    ops = sim.ops
    return 0.5 * state.v @ (ops.M @ state.v) + 0.5 * state.u @ (ops.K_B @ state.u)


def velocity_residual(sim: Simulation, prev: SimState, cur: SimState) -> float:
    """Relative residual of the discrete momentum equation on free DOFs."""
    ops, params, mesh = sim.ops, sim.problem.params, sim.problem.mesh
    k = sim.scheme.k
    loads = sim.problem.loads
    lhs = ops.M @ (cur.v - prev.v) / k + ops.K_A @ cur.v + ops.K_B @ cur.u + ops.StW @ cur.M_acc.ravel()
    rhs = (assemble_force(mesh, loads.f0, loads.fF, cur.t) - assemble_contact(mesh, prev.u, params)
           + ops.C.T @ prev.phi)
    free = sim.vdofs.free()
    r = (lhs - rhs)[free]
    scale = max(np.linalg.norm(lhs[free]), np.linalg.norm(rhs[free]), 1e-300)
    return float(np.linalg.norm(r) / scale)


def potential_residual(sim: Simulation, cur: SimState) -> float:
    loads = sim.problem.loads
    lhs = sim.ops.K_beta @ cur.phi - sim.ops.C @ cur.u
    rhs = assemble_charge(sim.problem.mesh, loads.q0, loads.qF, cur.t)
    free = sim.sdofs.free()
    r = (lhs - rhs)[free]
    scale = max(np.linalg.norm(sim.ops.K_beta @ cur.phi), np.linalg.norm(rhs[free]), 1e-300)
    return float(np.linalg.norm(r) / scale)
