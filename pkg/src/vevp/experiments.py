"""Configurations, the three reference experiments and field export.

A :class:`SimulationConfig` round-trips through an INI file::

    [geometry]
    kind = rectangle
    lx = 1
    ly = 1
    nx = 16
    ny = 16
    right = D A
    bottom = C B

    [material]
    E = 20000

    [scheme]
    T = 1
    N = 40

    [load fF]
    on = x2=1
    y = -60 60 0
    time = 0 1

Each load component is ``(c0 + c1 x1 + c2 x2) (a0 + a1 t)``, optionally
restricted to a line ``x1=<value>`` or ``x2=<value>``.
"""

from __future__ import annotations

import configparser
import io
import logging
import platform
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import constitutive as cl
from .constitutive import MaterialParams
from .error_metrics import ErrorReport, ErrorTracker, fit_slope, mesh_size
from .fespace import SCALAR_P1, TENSOR_P0, VECTOR_P1, write_field_csv
from .mesh import LShapeParams, Mesh, generate_lshape, generate_rectangle
from .timestepper import Loads, Problem, SchemeParams, SimState, Simulation, Trajectory

log = logging.getLogger(__name__)

LOAD_NAMES = ("f0", "fF", "q0", "qF")
VECTOR_LOADS = ("f0", "fF")
SIDES = ("left", "right", "bottom", "top")


class ConfigError(ValueError):
    pass


# -- loads -----------------------------------------------------------------


@dataclass(frozen=True)
class AffineLoad:
    """Load ``(c0 + c1 x1 + c2 x2)(a0 + a1 t)`` per component.

    ``coeffs`` has one ``(c0, c1, c2)`` row per component (two for forces,
    one for charges). ``on = ("x2", 1.0)`` restricts the load to that line
    and makes it zero elsewhere.
    """

    coeffs: tuple
    time: tuple = (1.0, 0.0)
    on: tuple | None = None
    tol: float = 1e-9

    def __post_init__(self):
        c = tuple(tuple(float(v) for v in row) for row in self.coeffs)
        if len(c) not in (1, 2) or any(len(row) != 3 for row in c):
            raise ConfigError("load coefficients must be one or two rows of (c0, c1, c2)")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "time", tuple(float(v) for v in self.time))
        if len(self.time) != 2:
            raise ConfigError("time factor needs (a0, a1)")
        if self.on is not None:
            axis, value = self.on
            if axis not in ("x1", "x2"):
                raise ConfigError(f"unknown restriction axis {axis!r}")
            object.__setattr__(self, "on", (axis, float(value)))

    @property
    def ncomp(self) -> int:
        return len(self.coeffs)

    def __call__(self, x, y, t):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tf = self.time[0] + self.time[1] * t
        vals = [(c0 + c1 * x + c2 * y) * tf for c0, c1, c2 in self.coeffs]
        if self.on is not None:
            coord = x if self.on[0] == "x1" else y
            mask = np.abs(coord - self.on[1]) <= self.tol * max(1.0, abs(self.on[1]))
            vals = [np.where(mask, v, 0.0) for v in vals]
        if self.ncomp == 1:
            return vals[0]
        return np.stack(vals, axis=-1)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class RectangleGeometry:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 16
    ny: int = 16
    sides: dict = field(default_factory=dict)  # side -> (mech, elec); others F/B

    def build(self) -> Mesh:
        return generate_rectangle(self.lx, self.ly, self.nx, self.ny, dict(self.sides))


@dataclass(frozen=True)
class SimulationConfig:
    name: str
    geometry: RectangleGeometry | LShapeParams
    material: MaterialParams = MaterialParams()
    scheme: SchemeParams = SchemeParams(1.0, 40)
    loads: dict = field(default_factory=dict)  # name -> AffineLoad
    snapshot_stride: int = 1
    deform_scale: float = 1.0

    def __post_init__(self):
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        for name, load in self.loads.items():
            if name not in LOAD_NAMES:
                raise ConfigError(f"unknown load {name!r}")
            want = 2 if name in VECTOR_LOADS else 1
            if load.ncomp != want:
                raise ConfigError(f"load {name} needs {want} component(s)")

    def mesh(self) -> Mesh:
        if isinstance(self.geometry, LShapeParams):
            return generate_lshape(self.geometry)
        return self.geometry.build()

    def problem(self, mesh: Mesh | None = None) -> Problem:
        return Problem(mesh if mesh is not None else self.mesh(), self.material,
                       Loads(**{k: self.loads.get(k) for k in LOAD_NAMES}))

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)

    def override(self, nel: int | None = None, k: float | None = None, c_p: float | None = None,
                 N: int | None = None) -> "SimulationConfig":
        """Apply the CLI overrides ``--Nel``, ``--k``, ``--cp`` and ``--N``."""
        cfg = self
        if nel is not None:
            g = cfg.geometry
            if isinstance(g, LShapeParams):
                cfg = cfg.with_(geometry=replace(g, cell=min(g.width, g.height) / nel))
            else:
                ny = max(1, int(round(nel * g.ly / g.lx)))
                cfg = cfg.with_(geometry=replace(g, nx=nel, ny=ny))
        if k is not None:
            cfg = cfg.with_(scheme=SchemeParams.from_step(cfg.scheme.T, k))
        if N is not None:
            cfg = cfg.with_(scheme=SchemeParams(cfg.scheme.T, N))
        if c_p is not None:
            cfg = cfg.with_(material=cfg.material.with_(c_p=c_p))
        return cfg

    # INI round trip

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["run"] = {"name": self.name, "snapshot_stride": str(self.snapshot_stride),
                     "deform_scale": repr(self.deform_scale)}
        g = self.geometry
        if isinstance(g, LShapeParams):
            cp["geometry"] = {"kind": "lshape", **{f.name: repr(getattr(g, f.name)) for f in fields(g)}}
        else:
            sec = {"kind": "rectangle", "lx": repr(g.lx), "ly": repr(g.ly), "nx": str(g.nx), "ny": str(g.ny)}
            sec.update({side: " ".join(lab) for side, lab in g.sides.items()})
            cp["geometry"] = sec
        mat = {}
        for f in fields(MaterialParams):
            v = getattr(self.material, f.name)
            if f.name == "piezo":
                mat[f.name] = ", ".join(" ".join(repr(x) for x in row) for row in v)
            elif f.name == "permittivity":
                mat[f.name] = " ".join(repr(x) for x in v)
            else:
                mat[f.name] = repr(v)
        cp["material"] = mat
        cp["scheme"] = {"T": repr(self.scheme.T), "N": str(self.scheme.N)}
        for name, load in self.loads.items():
            sec = {}
            if load.on is not None:
                sec["on"] = f"{load.on[0]}={load.on[1]!r}"
            keys = ("x", "y") if load.ncomp == 2 else ("value",)
            for key, row in zip(keys, load.coeffs):
                sec[key] = " ".join(repr(v) for v in row)
            sec["time"] = " ".join(repr(v) for v in load.time)
            cp[f"load {name}"] = sec
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "SimulationConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if "geometry" not in cp:
            raise ConfigError("missing [geometry] section")
        run = cp["run"] if "run" in cp else {}
        g = dict(cp["geometry"])
        kind = g.pop("kind", "rectangle")
        if kind == "lshape":
            geometry = LShapeParams(**{k: float(v) for k, v in g.items()})
        elif kind == "rectangle":
            sides = {}
            for side in SIDES:
                if side in g:
                    parts = g.pop(side).split()
                    if len(parts) != 2:
                        raise ConfigError(f"side {side} needs 'mech elec' labels")
                    sides[side] = (parts[0], parts[1])
            try:
                geometry = RectangleGeometry(float(g.pop("lx", 1.0)), float(g.pop("ly", 1.0)),
                                             int(g.pop("nx", 16)), int(g.pop("ny", 16)), sides)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            if g:
                raise ConfigError(f"unknown geometry keys {sorted(g)}")
        else:
            raise ConfigError(f"unknown geometry kind {kind!r}")
        mat = {}
        if "material" in cp:
            for key, value in cp["material"].items():
                if key == "piezo":
                    mat[key] = tuple(tuple(float(x) for x in row.split()) for row in value.split(","))
                elif key == "permittivity":
                    mat[key] = tuple(float(x) for x in value.split())
                else:
                    mat[key] = float(value)
        sch = cp["scheme"] if "scheme" in cp else {}
        T = float(sch.get("T", 1.0))
        scheme = SchemeParams.from_step(T, float(sch["k"])) if "k" in sch else SchemeParams(T, int(sch.get("N", 40)))
        loads = {}
        for sec in cp.sections():
            if not sec.startswith("load "):
                continue
            name = sec.split(None, 1)[1].strip()
            s = cp[sec]
            keys = ("x", "y") if name in VECTOR_LOADS else ("value",)
            coeffs = [tuple(float(v) for v in s.get(key, "0 0 0").split()) for key in keys]
            on = None
            if "on" in s:
                axis, _, value = s["on"].partition("=")
                on = (axis.strip(), float(value))
            loads[name] = AffineLoad(tuple(coeffs), tuple(float(v) for v in s.get("time", "1 0").split()), on)
        return cls(name=run.get("name", "custom"), geometry=geometry, material=MaterialParams(**mat),
                   scheme=scheme, loads=loads, snapshot_stride=int(run.get("snapshot_stride", 1)),
                   deform_scale=float(run.get("deform_scale", 1.0)))

    @classmethod
    def load(cls, path: str | Path) -> "SimulationConfig":
        return cls.from_ini(Path(path).read_text())


# -- the three experiments -------------------------------------------------

EXAMPLE1_SIDES = {"right": ("D", "A"), "bottom": ("C", "B"), "top": ("F", "B"), "left": ("F", "B")}


def example_config(number: int) -> SimulationConfig:
    """Default configuration of experiment 1, 2 or 3."""
    if number == 1:
        return SimulationConfig(
            name="example1",
            geometry=RectangleGeometry(1.0, 1.0, 16, 16, EXAMPLE1_SIDES),
            material=MaterialParams(E=2e4, c_p=1e5, rho=1.0),
            scheme=SchemeParams(1.0, 40),
            loads={"fF": AffineLoad(((0, 0, 0), (-60, 60, 0)), (0, 1), ("x2", 1.0))},
        )
    if number == 2:
        return SimulationConfig(
            name="example2",
            geometry=RectangleGeometry(4.0, 1.0, 64, 16, EXAMPLE1_SIDES),
            material=MaterialParams(E=2e6, c_p=1e5, rho=1000.0),
            scheme=SchemeParams(1.0, 100),
            loads={"qF": AffineLoad(((200, 0, 0),), (1, 0), ("x2", 0.0))},
            snapshot_stride=10,
            deform_scale=5000.0,
        )
    if number == 3:
        return SimulationConfig(
            name="example3",
            geometry=LShapeParams(),
            material=MaterialParams(E=2.1e9, c_p=1e5, rho=27000.0),
            scheme=SchemeParams(1.0, 100),
            loads={"fF": AffineLoad(((0, 0, 0), (-30000, 500, 0)), (0, 1), ("x2", 50.0))},
            snapshot_stride=10,
            deform_scale=500.0,
        )
    raise ConfigError(f"no example {number}")


def example1_problem(nel: int, c_p: float = 1e5) -> Problem:
    cfg = example_config(1).override(nel=nel, c_p=c_p)
    return cfg.problem()


def table_grid(max_nel: int, min_nel: int = 4, k0: float = 0.1) -> tuple[list[int], list[float]]:
    """``N_el = min_nel, 2 min_nel, ..., max_nel`` and as many halvings of ``k0``."""
    nels = []
    n = min_nel
    while n <= max_nel:
        nels.append(n)
        n *= 2
    return nels, [k0 / 2 ** i for i in range(len(nels))]


def run_example1_convergence(max_nel: int = 32, reference_nel: int = 64, k_ref: float | None = None,
                             ks: list[float] | None = None, c_p: float = 1e5, full_table: bool = True,
                             max_reference_nel: int = 1024, batch_nodes: int | None = None) -> ErrorReport:
    """Error table of experiment 1 against a nested reference run.

    Every coarse run is advanced in lockstep with the reference, so memory
    stays at one state per run. ``full_table=False`` runs only the
    diagonal pairs. ``batch_nodes`` caps the total node count of coarse
    runs held at once; the reference is rerun for each batch.
    """
    if reference_nel > max_reference_nel:
        raise ValueError(f"reference N_el {reference_nel} exceeds the cap {max_reference_nel}")
    nels, default_ks = table_grid(max_nel)
    ks = list(ks) if ks is not None else default_ks
    for n in nels:
        ratio = reference_nel // n
        if ratio * n != reference_nel or ratio & (ratio - 1):
            raise ValueError("reference N_el must be a power-of-two multiple of every N_el")
    if k_ref is None:
        k_ref = 0.1 / min(reference_nel, 128)
    for k in ks:
        ratio = k / k_ref
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"k = {k!r} is not a multiple of k_ref = {k_ref!r}")
    pairs = [(n, k) for n in nels for k in ks] if full_table else list(zip(nels, ks))
    report = ErrorReport(reference=f"N_el={reference_nel},k={k_ref!r}")
    values = {}
    for batch in _batches(pairs, batch_nodes):
        ref_sim = Simulation(example1_problem(reference_nel, c_p), SchemeParams.from_step(1.0, k_ref))
        tracker = ErrorTracker(ref_sim.problem.mesh, 1.0)
        index = {}
        for n, k in batch:
            index[(n, k)] = tracker.add_simulation(Simulation(example1_problem(n, c_p), SchemeParams.from_step(1.0, k)))
        t0 = time.perf_counter()
        ref_sim.run(snapshot_stride=ref_sim.scheme.N, callback=tracker.observe)
        log.info("batch of %d runs done in %.1f s", len(batch), time.perf_counter() - t0)
        values.update((key, tracker.result(i)) for key, i in index.items())
        del ref_sim, tracker, index
    for n, k in pairs:
        report.add(n, k, values[(n, k)])
    return report


def _batches(pairs: list[tuple[int, float]], budget: int | None) -> list[list[tuple[int, float]]]:
    """Greedy first-fit packing of ``(N_el, k)`` runs by node count."""
    if budget is None:
        return [pairs]
    size = lambda p: (p[0] + 1) ** 2
    bins: list[list[tuple[int, float]]] = []
    loads: list[int] = []
    for p in sorted(pairs, key=size, reverse=True):
        for b, used in enumerate(loads):
            if used + size(p) <= budget:
                bins[b].append(p)
                loads[b] += size(p)
                break
        else:
            bins.append([p])
            loads.append(size(p))
    return bins


def run_example(number: int, cfg: SimulationConfig | None = None, out_dir: str | Path | None = None,
                timestamp: bool = True) -> tuple[Trajectory, SimulationConfig]:
    cfg = cfg if cfg is not None else example_config(number)
    return run_config(cfg, out_dir, timestamp)


def run_example2(cfg: SimulationConfig | None = None, out_dir=None, timestamp: bool = True):
    return run_example(2, cfg, out_dir, timestamp)


def run_example3(cfg: SimulationConfig | None = None, out_dir=None, timestamp: bool = True):
    return run_example(3, cfg, out_dir, timestamp)


def run_config(cfg: SimulationConfig, out_dir: str | Path | None = None,
               timestamp: bool = True) -> tuple[Trajectory, SimulationConfig]:
    """Run one configuration; with ``out_dir`` write VTK snapshots, final CSVs and a manifest."""
    sim = Simulation(cfg.problem(), cfg.scheme)
    t0 = time.perf_counter()
    traj = sim.run(snapshot_stride=cfg.snapshot_stride)
    elapsed = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for s in traj.states:
            export_vtk(s, traj.mesh, out / f"state_{s.n}.vtk", deform_scale=cfg.deform_scale)
        f = traj.final
        write_field_csv(out / "displacement.csv", f.u, VECTOR_P1)
        write_field_csv(out / "potential.csv", f.phi, SCALAR_P1)
        write_field_csv(out / "stress.csv", f.sigma, TENSOR_P0)
        write_manifest(out, cfg.to_ini(), {"steps": cfg.scheme.N, "nodes": traj.mesh.n_nodes,
                                           "triangles": traj.mesh.n_triangles}, timestamp=timestamp,
                       elapsed=elapsed)
    return traj, cfg


# -- export ------------------------------------------------------------------


def _fmt(a) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(a, dtype=float).ravel())


def export_vtk(state: SimState, mesh: Mesh, path: str | Path, deform_scale: float | None = None) -> None:
    """Legacy ASCII VTK unstructured grid.

    Point data: displacement, velocity, potential (plus ``warped`` positions
    ``x + scale u`` when a scale is given). Cell data: stress components and
    the von Mises norm.
    """
    n, m = mesh.n_nodes, mesh.n_triangles
    u = np.asarray(state.u).reshape(n, 2)
    v = np.asarray(state.v).reshape(n, 2)
    zeros = np.zeros((n, 1))
    lines = ["# vtk DataFile Version 3.0", f"vevp state n={state.n} t={state.t!r}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [_fmt(row) for row in np.hstack([mesh.nodes, zeros])]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS displacement double")
    lines += [_fmt(row) for row in np.hstack([u, zeros])]
    lines.append("VECTORS velocity double")
    lines += [_fmt(row) for row in np.hstack([v, zeros])]
    if deform_scale is not None:
        lines.append("VECTORS warped double")
        lines += [_fmt(row) for row in np.hstack([mesh.nodes + deform_scale * u, zeros])]
    lines += ["SCALARS potential double 1", "LOOKUP_TABLE default"]
    lines += [f"{x:.17g}" for x in state.phi]
    lines.append(f"CELL_DATA {m}")
    sigma = np.asarray(state.sigma)
    for name, col in (("sigma11", sigma[:, 0]), ("sigma22", sigma[:, 1]), ("sigma12", sigma[:, 2]),
                      ("von_mises", cl.von_mises(sigma))):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{x:.17g}" for x in col]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_counts(path: str | Path) -> tuple[int, int]:
    """``(points, cells)`` declared in a legacy VTK file."""
    npts = ncells = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("POINTS "):
            npts = int(line.split()[1])
        elif line.startswith("CELLS "):
            ncells = int(line.split()[1])
    if npts is None or ncells is None:
        raise ValueError("not a legacy VTK unstructured grid")
    return npts, ncells


def write_manifest(out_dir: str | Path, config_text: str, extra: dict | None = None,
                   timestamp: bool = True, elapsed: float | None = None) -> Path:
    import numba
    import scipy

    from . import __version__

    lines = []
    if timestamp:
        lines.append(f"# written {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    lines += [f"vevp {__version__}", f"python {platform.python_version()}", f"numpy {np.__version__}",
              f"scipy {scipy.__version__}", f"numba {numba.__version__}"]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    if elapsed is not None and timestamp:
        lines.append(f"elapsed_s = {elapsed:.2f}")
    lines += ["", "[config]", config_text.rstrip()]
    path = Path(out_dir) / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def write_convergence_outputs(report: ErrorReport, out_dir: str | Path, timestamp: bool = True,
                              settings: dict | None = None) -> float | None:
    """``errors.csv``, ``slope.txt``, ``fig2.csv`` (h + k vs E on the diagonal) and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slope = fit_slope(report) if len(report.diagonal()) >= 3 else None
    report.to_csv(out / "errors.csv", slope=slope)
    (out / "slope.txt").write_text("nan\n" if slope is None else f"{slope!r}\n")
    rows = ["h_plus_k,E_hk"] + [f"{mesh_size(n) + k!r},{e!r}" for n, k, e in report.diagonal()]
    (out / "fig2.csv").write_text("\n".join(rows) + "\n")
    text = "\n".join(f"{k} = {v}" for k, v in (settings or {}).items())
    write_manifest(out, f"reference = {report.reference}\n{text}", timestamp=timestamp)
    return slope


# -- diagnostics ---------------------------------------------------------------


def step_amplification(sim: Simulation, contact_active: bool = True) -> float:
    """Spectral radius of the linearized step map ``(v, u) -> (v', u')``.

    The contact term is linearized as if every contact point were
    penetrating (``contact_active``) or separated. Dense, so only for
    small meshes. Values above 1 mean the lagged contact term makes the
    scheme unstable at this step size.
    """
    from .assembly import GAUSS_W, GAUSS_XI

    mesh, params = sim.problem.mesh, sim.problem.params
    n2 = 2 * mesh.n_nodes
    if n2 > 4000:
        raise ValueError("mesh too large for a dense eigenvalue check")
    k = sim.scheme.k
    Kc = np.zeros((n2, n2))
    sel = mesh.mech == "C"
    if contact_active and np.any(sel):
        edges = mesh.edges[sel]
        nu = mesh.normals[sel]
        length = mesh.edge_lengths()[sel]
        for xi, w in zip(GAUSS_XI, GAUSS_W):
            phi = (1 - xi, xi)
            for e, (a, b) in enumerate(edges):
                dofs = np.array([2 * a, 2 * a + 1, 2 * b, 2 * b + 1])
                g = np.concatenate([phi[0] * nu[e], phi[1] * nu[e]])
                Kc[np.ix_(dofs, dofs)] += params.c_p * w * length[e] * np.outer(g, g)
    free = sim.vdofs.free()
    A = sim.A_v.toarray()[np.ix_(free, free)]
    M = sim.ops.M.toarray()[np.ix_(free, free)]
    K = sim.ops.K_B.toarray()[np.ix_(free, free)] + Kc[np.ix_(free, free)]
    Tvv = np.linalg.solve(A, M)
    Tvu = -k * np.linalg.solve(A, K)
    T = np.block([[Tvv, Tvu], [k * Tvv, np.eye(len(free)) + k * Tvu]])
    return float(np.max(np.abs(np.linalg.eigvals(T))))
