"""Triangular meshes with mechanical/electrical boundary labels.

Every boundary edge carries one mechanical label (``D`` clamped, ``F``
traction, ``C`` contact) and one electrical label (``A`` grounded, ``B``
charge). Contact edges must also be charge edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

MECH_LABELS = ("D", "F", "C")
ELEC_LABELS = ("A", "B")

# (midpoint, outward normal) -> (mech, elec)
LabelRule = Callable[[np.ndarray, np.ndarray], tuple[str, str]]


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    edges : (B, 2) int array of boundary edges, oriented counterclockwise
        around the domain (so the outward normal is the edge tangent rotated
        by -90 degrees)
    owner : (B,) int array, triangle owning each boundary edge
    mech, elec : (B,) arrays of single-character labels
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    owner: np.ndarray
    mech: np.ndarray
    elec: np.ndarray
    normals: np.ndarray = field(init=False)
    h: float = field(init=False)

    def __post_init__(self):
        for name in ("nodes", "triangles", "edges", "owner", "mech", "elec"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        tang = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        length = np.hypot(tang[:, 0], tang[:, 1])
        normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
        normals.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        e = self.all_edges()
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        object.__setattr__(self, "h", float(np.hypot(d[:, 0], d[:, 1]).max()))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counterclockwise)."""
        p = self.nodes[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def all_edges(self) -> np.ndarray:
        """Unique undirected edges, sorted, as (E, 2) with i < j."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        n = len(self.nodes)
        key = np.unique(e[:, 0] * n + e[:, 1])
        return np.column_stack([key // n, key % n])

    def boundary_nodes(self, mech: str | None = None, elec: str | None = None) -> np.ndarray:
        """Sorted node indices touching edges with the given label(s)."""
        sel = np.ones(len(self.edges), dtype=bool)
        if mech is not None:
            sel &= self.mech == mech
        if elec is not None:
            sel &= self.elec == elec
        return np.unique(self.edges[sel])

    def validate(self) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        n = self.n_nodes
        t = self.triangles
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinates")
        if t.min() < 0 or t.max() >= n:
            raise MeshError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("repeated vertex in triangle")
        if np.any(self.areas() <= 0):
            raise MeshError("triangle with non-positive signed area")
        if not np.all(np.isin(self.mech, MECH_LABELS)) or not np.all(np.isin(self.elec, ELEC_LABELS)):
            raise MeshError("unknown boundary label")
        if np.any((self.mech == "C") & (self.elec != "B")):
            raise MeshError("contact edge not contained in the charge boundary")
        if not np.any(self.mech == "D"):
            raise MeshError("empty clamped boundary")
        if not np.any(self.elec == "A"):
            raise MeshError("empty grounded boundary")
        ref_edges, ref_owner = _boundary_edges(t)
        mine = {tuple(sorted(e)) for e in self.edges.tolist()}
        if mine != {tuple(sorted(e)) for e in ref_edges.tolist()} or len(mine) != len(self.edges):
            raise MeshError("boundary edges do not cover the boundary exactly once")


def _boundary_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edges used by exactly one triangle, oriented as in that triangle."""
    t = np.asarray(triangles)
    m = len(t)
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    owner = np.tile(np.arange(m), 3)
    srt = np.sort(directed, axis=1)
    n = int(t.max()) + 1
    _, inv, counts = np.unique(srt[:, 0] * n + srt[:, 1], return_inverse=True, return_counts=True)
    inv = inv.ravel()
    once = counts[inv] == 1
    edges = directed[once]
    owner = owner[once]
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return edges[order], owner[order]


def _label(nodes, edges, rule: LabelRule):
    a = nodes[edges[:, 0]]
    b = nodes[edges[:, 1]]
    mid = 0.5 * (a + b)
    tang = b - a
    nrm = np.column_stack([tang[:, 1], -tang[:, 0]])
    nrm /= np.hypot(nrm[:, 0], nrm[:, 1])[:, None]
    mech, elec = [], []
    for m, nv in zip(mid, nrm):
        lm, le = rule(m, nv)
        mech.append(lm)
        elec.append(le)
    return np.array(mech, dtype="<U1"), np.array(elec, dtype="<U1")


def build_mesh(nodes: np.ndarray, triangles: np.ndarray, rule: LabelRule) -> Mesh:
    """Assemble a labeled mesh from raw arrays and a boundary-label rule."""
    nodes = np.asarray(nodes, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    edges, owner = _boundary_edges(triangles)
    mech, elec = _label(nodes, edges, rule)
    mesh = Mesh(nodes, triangles, edges, owner, mech, elec)
    mesh.validate()
    return mesh


def side_rule(sides: dict[str, tuple[str, str]], bounds: tuple[float, float, float, float],
              default: tuple[str, str] = ("F", "B"), tol: float = 1e-9) -> LabelRule:
    """Label rule for axis-aligned boxes.

    ``sides`` maps any of ``left/right/bottom/top`` to ``(mech, elec)``;
    ``bounds`` is ``(x0, x1, y0, y1)``. Edges not on a listed side get
    ``default``.
    """
    x0, x1, y0, y1 = bounds
    scale = max(x1 - x0, y1 - y0)

    def rule(mid, normal):
        x, y = mid
        if abs(x - x0) <= tol * scale and "left" in sides:
            return sides["left"]
        if abs(x - x1) <= tol * scale and "right" in sides:
            return sides["right"]
        if abs(y - y0) <= tol * scale and "bottom" in sides:
            return sides["bottom"]
        if abs(y - y1) <= tol * scale and "top" in sides:
            return sides["top"]
        return default

    return rule


def _grid_mesh(x: np.ndarray, y: np.ndarray, keep: np.ndarray, rule: LabelRule) -> Mesh:
    """Diagonal-split structured mesh over the cells marked in ``keep``.

    Each kept cell is split along its lower-left to upper-right diagonal.
    Unused grid nodes are dropped.
    """
    nx, ny = len(x) - 1, len(y) - 1
    X, Y = np.meshgrid(x, y)  # node (i, j) -> j * (nx + 1) + i
    pts = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.nonzero(keep)  # keep has shape (ny, nx), row-major over cells
    p00 = j * (nx + 1) + i
    p10 = p00 + 1
    p01 = p00 + nx + 1
    p11 = p01 + 1
    tri = np.empty((2 * len(p00), 3), dtype=np.int64)
    tri[0::2] = np.column_stack([p00, p10, p11])
    tri[1::2] = np.column_stack([p00, p11, p01])
    used = np.unique(tri)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_mesh(pts[used], remap[tri], rule)


def generate_rectangle(lx: float, ly: float, nx: int, ny: int,
                       labeling: LabelRule | dict[str, tuple[str, str]]) -> Mesh:
    """Uniform diagonal-split mesh of ``[0, lx] x [0, ly]``.

    ``labeling`` is either a rule callable or a side dictionary for
    :func:`side_rule`.
    """
    if nx < 1 or ny < 1:
        raise MeshError("subdivision counts must be >= 1")
    if lx <= 0 or ly <= 0:
        raise MeshError("rectangle sides must be positive")
    if isinstance(labeling, dict):
        labeling = side_rule(labeling, (0.0, lx, 0.0, ly))
    keep = np.ones((ny, nx), dtype=bool)
    return _grid_mesh(np.linspace(0.0, lx, nx + 1), np.linspace(0.0, ly, ny + 1), keep, labeling)


@dataclass(frozen=True)
class LShapeParams:
    """Box ``[0, width] x [0, height]`` minus the upper-left notch
    ``[0, notch_x] x [notch_y, height]``.

    ``cell`` is the target cell size; the grid is adjusted so the notch
    corner falls on grid lines.
    """

    width: float = 60.0
    height: float = 50.0
    notch_x: float = 30.0
    notch_y: float = 20.0
    cell: float = 2.5


def lshape_rule(p: LShapeParams, tol: float = 1e-9) -> LabelRule:
    """Default Example 3 labels.

    Bottom ``x2 = 0`` is clamped and grounded, the notch's vertical face
    ``x1 = notch_x`` faces the obstacle, everything else is traction-free
    or loaded (``F``) and carries charge (``B``).
    """
    s = max(p.width, p.height) * tol

    def rule(mid, normal):
        x, y = mid
        if abs(y) <= s:
            return ("D", "A")
        if abs(x - p.notch_x) <= s and y > p.notch_y - s and normal[0] < 0:
            return ("C", "B")
        return ("F", "B")

    return rule


def generate_lshape(params: LShapeParams = LShapeParams(), rule: LabelRule | None = None) -> Mesh:
    p = params
    if not (0 < p.notch_x < p.width and 0 < p.notch_y < p.height):
        raise MeshError("notch must be a proper sub-rectangle of the box")
    if p.cell <= 0:
        raise MeshError("cell size must be positive")

    def segments(lo, mid, hi):
        n1 = max(1, int(round((mid - lo) / p.cell)))
        n2 = max(1, int(round((hi - mid) / p.cell)))
        return np.concatenate([np.linspace(lo, mid, n1 + 1), np.linspace(mid, hi, n2 + 1)[1:]]), n1

    x, ix = segments(0.0, p.notch_x, p.width)
    y, iy = segments(0.0, p.notch_y, p.height)
    keep = np.ones((len(y) - 1, len(x) - 1), dtype=bool)
    keep[iy:, :ix] = False
    return _grid_mesh(x, y, keep, rule or lshape_rule(p))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four via edge midpoints.

    Parent nodes keep their indices; midpoint nodes are appended in sorted
    edge order. Boundary edges inherit labels from their parent edge.
    """
    t = mesh.triangles
    edges = mesh.all_edges()
    n = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])

    def mid_index(a, b):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        key = lo * n + hi
        ekey = edges[:, 0] * n + edges[:, 1]
        return n + np.searchsorted(ekey, key)

    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = mid_index(a, b), mid_index(b, c), mid_index(c, a)
    tri = np.empty((4 * len(t), 3), dtype=np.int64)
    tri[0::4] = np.column_stack([a, mab, mca])
    tri[1::4] = np.column_stack([mab, b, mbc])
    tri[2::4] = np.column_stack([mca, mbc, c])
    tri[3::4] = np.column_stack([mab, mbc, mca])

    be = mesh.edges
    bm = mid_index(be[:, 0], be[:, 1])
    child_edges = np.empty((2 * len(be), 2), dtype=np.int64)
    child_edges[0::2] = np.column_stack([be[:, 0], bm])
    child_edges[1::2] = np.column_stack([bm, be[:, 1]])
    mech = np.repeat(mesh.mech, 2)
    elec = np.repeat(mesh.elec, 2)

    # owners: find the child triangle containing each child edge
    ref_edges, ref_owner = _boundary_edges(tri)
    lookup = {(int(i), int(j)): int(o) for (i, j), o in zip(ref_edges, ref_owner)}
    owner = np.array([lookup[(int(i), int(j))] for i, j in child_edges], dtype=np.int64)
    fine = Mesh(nodes, tri, child_edges, owner, mech, elec)
    return fine


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write the plain-text ``vevp-mesh 1`` format (0-based indices)."""
    lines = ["vevp-mesh 1", f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"edges {len(mesh.edges)}")
    lines += [f"{a} {b} {m} {e}" for (a, b), m, e in zip(mesh.edges.tolist(), mesh.mech, mesh.elec)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if lines[0] != "vevp-mesh 1":
        raise MeshError(f"unrecognized mesh header: {lines[0]!r}")
    pos = 1

    def block(name):
        nonlocal pos
        head, count = lines[pos].split()
        if head != name:
            raise MeshError(f"expected {name!r} block, got {head!r}")
        count = int(count)
        rows = [ln.split() for ln in lines[pos + 1: pos + 1 + count]]
        pos += 1 + count
        return rows

    nodes = np.array(block("nodes"), dtype=float).reshape(-1, 2)
    tri = np.array(block("triangles"), dtype=np.int64).reshape(-1, 3)
    rows = block("edges")
    edges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    mech = np.array([r[2] for r in rows], dtype="<U1")
    elec = np.array([r[3] for r in rows], dtype="<U1")
    ref_edges, ref_owner = _boundary_edges(tri)
    lookup = {(int(i), int(j)): int(o) for (i, j), o in zip(ref_edges, ref_owner)}
    try:
        owner = np.array([lookup[(int(i), int(j))] for i, j in edges], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"edge {exc.args[0]} is not a boundary edge") from None
    mesh = Mesh(nodes, tri, edges, owner, mech, elec)
    mesh.validate()
    return mesh
