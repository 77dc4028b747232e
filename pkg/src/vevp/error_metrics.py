"""Discrete norms and the max-in-time error against a nested reference run."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fespace import SCALAR_P1, VECTOR_P1, prolongation_matrix, scalar_mass, scalar_stiffness
from .mesh import Mesh
from .timestepper import SimState, Trajectory


class NormEvaluator:
    """Cached Gram matrices for the V (H1 vector), H (L2 vector) and W (H1 scalar) norms."""

    def __init__(self, mesh: Mesh):
        import scipy.sparse as sp

        self.mesh = mesh
        Ms = scalar_mass(mesh)
        Ks = scalar_stiffness(mesh)
        self.W = (Ms + Ks).tocsr()
        self.Hv = sp.kron(Ms, sp.identity(2), format="csr")
        self.Vv = sp.kron(self.W, sp.identity(2), format="csr")

    @staticmethod
    def _norm(A, x):
        return float(np.sqrt(max(x @ (A @ x), 0.0)))

    def norm_V(self, w) -> float:
        return self._norm(self.Vv, np.asarray(w, dtype=float))

    def norm_H(self, w) -> float:
        return self._norm(self.Hv, np.asarray(w, dtype=float))

    def norm_W(self, psi) -> float:
        return self._norm(self.W, np.asarray(psi, dtype=float))

    def state_distance(self, a: SimState, b: SimState) -> float:
        return self.norm_V(a.u - b.u) + self.norm_H(a.v - b.v) + self.norm_W(a.phi - b.phi)


def norm_V(w, mesh: Mesh) -> float:
    """Full H1 norm of a vector-P1 field."""
    return NormEvaluator(mesh).norm_V(w)


def norm_H(w, mesh: Mesh) -> float:
    return NormEvaluator(mesh).norm_H(w)


def norm_W(psi, mesh: Mesh) -> float:
    return NormEvaluator(mesh).norm_W(psi)


def _time_key(t: float, T: float) -> int:
    # common dyadic grid; 2^-30 of T is far below any step size in use
    return int(round(t / T * 2 ** 30))


class ErrorTracker:
    """Streams reference states and accumulates ``max_n`` errors of coarse runs.

    Coarse runs are either finished trajectories holding every time node
    (:meth:`add`) or live simulations advanced in lockstep with the
    reference (:meth:`add_simulation`), which keeps only one coarse state
    in memory. The reference run is fed state by state, typically through
    ``Simulation.run(callback=tracker.observe)``.
    """

    def __init__(self, reference_mesh: Mesh, T: float):
        self.reference_mesh = reference_mesh
        self.T = T
        self.norms = NormEvaluator(reference_mesh)
        self._runs: list[dict] = []
        self.errors: list[float] = []
        self.matched: list[int] = []

    def _register(self, mesh: Mesh, N: int, **entry) -> int:
        entry["N"] = N
        entry["Pv"] = prolongation_matrix(mesh, self.reference_mesh, VECTOR_P1)
        entry["Ps"] = prolongation_matrix(mesh, self.reference_mesh, SCALAR_P1)
        self._runs.append(entry)
        self.errors.append(0.0)
        self.matched.append(0)
        return len(self._runs) - 1

    def add(self, coarse: Trajectory) -> int:
        by_time = {_time_key(s.t, self.T): s for s in coarse.states}
        if len(by_time) != coarse.scheme.N + 1:
            raise ValueError("coarse trajectory must keep every time step")
        return self._register(coarse.mesh, coarse.scheme.N, by_time=by_time)

    def add_simulation(self, sim) -> int:
        """Register a live :class:`~vevp.timestepper.Simulation` (not yet started)."""
        return self._register(sim.problem.mesh, sim.scheme.N, sim=sim, state=None)

    def _coarse_state(self, run: dict, key: int) -> SimState | None:
        if "by_time" in run:
            return run["by_time"].get(key)
        sim = run["sim"]
        if run["state"] is None:
            run["state"] = sim.initialize()
        state = run["state"]
        while state.n < run["N"] and _time_key(sim.scheme.time(state.n + 1), self.T) <= key:
            state = sim.step(state)
        run["state"] = state
        return state if _time_key(state.t, self.T) == key else None

    def observe(self, ref: SimState) -> None:
        key = _time_key(ref.t, self.T)
        for i, run in enumerate(self._runs):
            s = self._coarse_state(run, key)
            if s is None:
                continue
            Pv, Ps = run["Pv"], run["Ps"]
            e = (self.norms.norm_V(Pv @ s.u - ref.u) + self.norms.norm_H(Pv @ s.v - ref.v)
                 + self.norms.norm_W(Ps @ s.phi - ref.phi))
            self.errors[i] = max(self.errors[i], e)
            self.matched[i] += 1

    def result(self, index: int) -> float:
        if self.matched[index] != self._runs[index]["N"] + 1:
            raise ValueError("reference time grid does not contain every coarse time node")
        return self.errors[index]


def compute_error(coarse: Trajectory, reference: Trajectory) -> float:
    """``max_n (|u_n - u_n^hk|_V + |v_n - v_n^hk|_H + |phi_n - phi_n^hk|_W)``.

    Coarse fields are prolongated onto the reference mesh, which must be a
    uniform refinement of the coarse mesh; every coarse time node must be
    a reference snapshot time.
    """
    tracker = ErrorTracker(reference.mesh, reference.scheme.T)
    tracker.add(coarse)
    for s in reference.states:
        tracker.observe(s)
    return tracker.result(0)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class ErrorReport:
    """``(N_el, k, E_hk)`` table against a fixed reference run."""

    rows: list[tuple[int, float, float]] = field(default_factory=list)
    reference: str = ""
    side: float = 1.0

    def add(self, nel: int, k: float, err: float) -> None:
        if err < 0:
            raise ValueError("errors are non-negative")
        self.rows.append((int(nel), float(k), float(err)))
        self.rows.sort(key=lambda r: (r[0], -r[1]))

    def value(self, nel: int, k: float) -> float:
        for n, kk, e in self.rows:
            if n == nel and np.isclose(kk, k, rtol=1e-12, atol=0):
                return e
        raise KeyError((nel, k))

    def nels(self) -> list[int]:
        return sorted({r[0] for r in self.rows})

    def ks(self) -> list[float]:
        return sorted({r[1] for r in self.rows}, reverse=True)

    def diagonal(self) -> list[tuple[int, float, float]]:
        """Entries refined simultaneously in space and time: i-th N_el with i-th k."""
        out = []
        for nel, k in zip(self.nels(), self.ks()):
            try:
                out.append((nel, k, self.value(nel, k)))
            except KeyError:
                break
        return out

    def table(self) -> np.ndarray:
        """Dense ``len(nels) x len(ks)`` array (NaN for missing entries); ks descending."""
        nels, ks = self.nels(), self.ks()
        out = np.full((len(nels), len(ks)), np.nan)
        for n, k, e in self.rows:
            out[nels.index(n), ks.index(k)] = e
        return out

    def to_csv(self, path: str | Path | None = None, slope: float | None = None) -> str:
        lines = ["N_el,k,E_hk"] + [f"{n},{k!r},{e!r}" for n, k, e in self.rows]
        if slope is None and len(self.diagonal()) >= 3:
            slope = fit_slope(self)
        if slope is not None:
            lines.append(f"slope,,{slope!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "ErrorReport":
        rep = cls()
        for line in Path(path).read_text().splitlines()[1:]:
            a, b, c = line.split(",")
            if a == "slope":
                continue
            rep.add(int(a), float(b), float(c))
        return rep


def mesh_size(nel: int, side: float = 1.0) -> float:
    """Diagonal length of one grid cell, ``sqrt(2) side / N_el``."""
    return float(np.sqrt(2.0) * side / nel)


def fit_slope(report: ErrorReport) -> float:
    """Log-log slope of ``E_hk`` against ``h + k`` along the table diagonal."""
    diag = report.diagonal()
    if len(diag) < 3:
        raise ValueError("need at least three diagonal entries to fit a slope")
    x = [mesh_size(n, report.side) + k for n, k, _ in diag]
    y = [e for _, _, e in diag]
    return loglog_slope(x, y)
