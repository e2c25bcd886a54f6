"""Triangular meshes: generation, carving, T6 promotion and the text file format.

Vertices always come first in ``nodes``; promotion appends one midside node per
unique edge after them, so the T3 discretisation of the phase field and the T6
discretisation of the mechanics share vertex numbering.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

MIDSIDE_TOL = 1e-12

# Local edges of a triangle in T6 midside order: (0-1), (1-2), (2-0)
T3_EDGES = ((0, 1), (1, 2), (2, 0))


class MeshError(Exception):
    """Raised when a mesh violates its invariants."""


class MeshParseError(MeshError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class Mesh:
    nodes: NDArray[np.float64]
    t3_elements: NDArray[np.int64]
    t6_elements: NDArray[np.int64] | None = None
    boundary_sets: dict[str, NDArray[np.int64]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.t3_elements.shape[0])

    @property
    def n_vertices(self) -> int:
        """Number of vertex nodes (the T3 node set, numbered first)."""
        if self.t6_elements is None:
            return self.n_nodes
        return int(self.t3_elements.max()) + 1

    @property
    def is_promoted(self) -> bool:
        return self.t6_elements is not None

    def areas(self) -> NDArray[np.float64]:
        """Signed areas of the T3 triangles."""
        return signed_areas(self.nodes, self.t3_elements)

    def centroids(self) -> NDArray[np.float64]:
        return self.nodes[self.t3_elements].mean(axis=1)

    def boundary(self, name: str) -> NDArray[np.int64]:
        try:
            return self.boundary_sets[name]
        except KeyError:
            raise MeshError(f"Unknown boundary set: {name}") from None


def signed_areas(nodes: NDArray[np.float64], tris: NDArray[np.int64]) -> NDArray[np.float64]:
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def unique_edges(tris: NDArray[np.int64]) -> NDArray[np.int64]:
    edges = np.concatenate([tris[:, [a, b]] for a, b in T3_EDGES])
    return np.unique(np.sort(edges, axis=1), axis=0)


def validate(mesh: Mesh) -> None:
    """Check index ranges, orientation, edge manifoldness and midside placement."""
    tris = mesh.t3_elements
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshError("t3_elements must be an (M, 3) array")
    if tris.shape[0] == 0:
        raise MeshError("mesh has no elements")
    if tris.min() < 0 or tris.max() >= mesh.n_nodes:
        raise MeshError("element index out of range")
    if mesh.t6_elements is None and np.unique(tris).size != mesh.n_nodes:
        raise MeshError("mesh has nodes that belong to no element")

    areas = mesh.areas()
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        raise MeshError(f"element {int(bad[0])} is degenerate or clockwise (area {areas[bad[0]]:.3g})")

    edges = np.concatenate([np.sort(tris[:, [a, b]], axis=1) for a, b in T3_EDGES])
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if counts.size and counts.max() > 2:
        raise MeshError("edge shared by more than two triangles")

    if mesh.t6_elements is not None:
        t6 = mesh.t6_elements
        if t6.shape != (tris.shape[0], 6) or not np.array_equal(t6[:, :3], tris):
            raise MeshError("t6 vertices do not match t3 connectivity")
        for k, (a, b) in enumerate(T3_EDGES):
            pa, pb, pm = mesh.nodes[tris[:, a]], mesh.nodes[tris[:, b]], mesh.nodes[t6[:, 3 + k]]
            length = np.linalg.norm(pb - pa, axis=1)
            off = np.linalg.norm(pm - 0.5 * (pa + pb), axis=1)
            if np.any(off > MIDSIDE_TOL * length):
                raise MeshError("midside node is not at its edge midpoint")

    for name, ids in mesh.boundary_sets.items():
        if ids.size and (ids.min() < 0 or ids.max() >= mesh.n_nodes):
            raise MeshError(f"boundary set {name!r} references a missing node")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_grid(xs: NDArray[np.float64], ys: NDArray[np.float64]) -> Mesh:
    """Crossed-diagonal triangulation of the tensor grid ``xs × ys``.

    Cell (i, j) is split along the rising diagonal when ``i + j`` is even and
    along the falling one otherwise, so grids with an even cell count in a
    direction are mirror symmetric across their midline.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    nx, ny = xs.size - 1, ys.size - 1
    if nx < 1 or ny < 1:
        raise MeshError("grid needs at least one cell in each direction")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise MeshError("grid coordinates must be strictly increasing")

    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    def nid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris: list[tuple[int, int, int]] = []
    for j in range(ny):
        for i in range(nx):
            n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((n00, n10, n11))
                tris.append((n00, n11, n01))
            else:
                tris.append((n00, n10, n01))
                tris.append((n10, n11, n01))

    ii = np.arange(nodes.shape[0])
    col, row = ii % (nx + 1), ii // (nx + 1)
    boundary_sets = {
        "left": ii[col == 0],
        "right": ii[col == nx],
        "bottom": ii[row == 0],
        "top": ii[row == ny],
    }
    mesh = Mesh(nodes=nodes, t3_elements=np.array(tris, dtype=np.int64), boundary_sets=boundary_sets)
    validate(mesh)
    return mesh


def generate_rectangle(nx: int, ny: int, width: float, height: float) -> Mesh:
    if nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    if width <= 0 or height <= 0:
        raise MeshError("width and height must be positive")
    return generate_grid(np.linspace(0.0, width, nx + 1), np.linspace(0.0, height, ny + 1))


def graded_coordinates(
    length: float,
    fine: float,
    coarse: float,
    band: tuple[float, float],
    growth: float = 1.3,
) -> NDArray[np.float64]:
    """Coordinates on [0, length]: size ``fine`` inside ``band``, growing by
    ``growth`` per cell outside it up to ``coarse``."""
    lo, hi = max(band[0], 0.0), min(band[1], length)
    if not 0 < fine <= coarse:
        raise MeshError("need 0 < fine <= coarse")
    n_band = max(1, math.ceil((hi - lo) / fine))
    inner = list(np.linspace(lo, hi, n_band + 1))

    def march(start: float, stop: float) -> list[float]:
        pts: list[float] = []
        span = abs(stop - start)
        sign = 1.0 if stop > start else -1.0
        h, pos = fine, 0.0
        while span - pos > 1e-12:
            h = min(h * growth, coarse)
            if span - pos - h < 0.5 * h:
                pos = span
            else:
                pos += h
            pts.append(start + sign * pos)
        return pts

    left = march(lo, 0.0)[::-1] if lo > 0 else []
    right = march(hi, length) if hi < length else []
    return np.array(left + inner + right, dtype=np.float64)


def map_nodes(mesh: Mesh, fn: Callable[[NDArray[np.float64]], NDArray[np.float64]]) -> Mesh:
    """Move every node with ``fn`` (element connectivity unchanged)."""
    if mesh.is_promoted:
        raise MeshError("map nodes before promotion to keep midside nodes on edges")
    moved = Mesh(
        nodes=np.asarray(fn(mesh.nodes.copy()), dtype=np.float64),
        t3_elements=mesh.t3_elements,
        boundary_sets=dict(mesh.boundary_sets),
    )
    validate(moved)
    return moved


def carve(mesh: Mesh, keep: Callable[[float, float], bool]) -> Mesh:
    """Keep the elements whose centroid satisfies ``keep``; renumber contiguously."""
    if mesh.is_promoted:
        raise MeshError("carve the T3 mesh before promotion")
    centroids = mesh.centroids()
    mask = np.array([bool(keep(float(x), float(y))) for x, y in centroids], dtype=bool)
    if not mask.any():
        raise MeshError("carving removed every element")

    tris = mesh.t3_elements[mask]
    used = np.unique(tris)
    renumber = np.full(mesh.n_nodes, -1, dtype=np.int64)
    renumber[used] = np.arange(used.size)

    boundary_sets = {}
    for name, ids in mesh.boundary_sets.items():
        kept = renumber[ids]
        boundary_sets[name] = kept[kept >= 0]

    carved = Mesh(
        nodes=mesh.nodes[used],
        t3_elements=renumber[tris],
        boundary_sets=boundary_sets,
    )
    validate(carved)
    logger.debug("Carved mesh: %d -> %d elements", mesh.n_elements, carved.n_elements)
    return carved


def promote_to_t6(mesh: Mesh) -> Mesh:
    """Insert one midside node per unique edge and fill T6 connectivity."""
    if mesh.is_promoted:
        raise MeshError("mesh is already promoted to T6")
    validate(mesh)

    tris = mesh.t3_elements
    n_vert = mesh.n_nodes
    edge_ids: dict[tuple[int, int], int] = {}
    midside = np.empty((tris.shape[0], 3), dtype=np.int64)
    new_nodes: list[NDArray[np.float64]] = []
    parents: list[tuple[int, int]] = []

    for e, tri in enumerate(tris):
        for k, (a, b) in enumerate(T3_EDGES):
            na, nb = int(tri[a]), int(tri[b])
            key = (na, nb) if na < nb else (nb, na)
            idx = edge_ids.get(key)
            if idx is None:
                idx = n_vert + len(new_nodes)
                edge_ids[key] = idx
                new_nodes.append(0.5 * (mesh.nodes[na] + mesh.nodes[nb]))
                parents.append(key)
            midside[e, k] = idx

    nodes = np.vstack([mesh.nodes, np.array(new_nodes).reshape(-1, 2)])
    parent_arr = np.array(parents, dtype=np.int64).reshape(-1, 2)

    boundary_sets = {}
    for name, ids in mesh.boundary_sets.items():
        member = np.zeros(n_vert, dtype=bool)
        member[ids] = True
        extra = n_vert + np.flatnonzero(member[parent_arr[:, 0]] & member[parent_arr[:, 1]])
        boundary_sets[name] = np.concatenate([ids, extra]).astype(np.int64)

    promoted = Mesh(
        nodes=nodes,
        t3_elements=tris,
        t6_elements=np.hstack([tris, midside]),
        boundary_sets=boundary_sets,
    )
    validate(promoted)
    return promoted


def vertex_mesh(mesh: Mesh) -> Mesh:
    """The T3 mesh underlying ``mesh`` (identity for unpromoted meshes)."""
    if not mesh.is_promoted:
        return mesh
    n_vert = mesh.n_vertices
    return Mesh(
        nodes=mesh.nodes[:n_vert],
        t3_elements=mesh.t3_elements,
        boundary_sets={k: v[v < n_vert] for k, v in mesh.boundary_sets.items()},
    )


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def read_mesh(path: Path | str) -> Mesh:
    """Parse the ``nodes`` / ``elements`` / ``set`` text format (0-based ids)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(lines, start=1):
        content = raw.split("#", 1)[0].split()
        if content:
            rows.append((lineno, content))

    pos = 0

    def header(keyword: str) -> int:
        nonlocal pos
        if pos >= len(rows):
            raise MeshParseError(len(lines), f"expected '{keyword} N'")
        lineno, tok = rows[pos]
        if len(tok) != 2 or tok[0] != keyword:
            raise MeshParseError(lineno, f"expected '{keyword} N', got {' '.join(tok)!r}")
        pos += 1
        try:
            return int(tok[1])
        except ValueError:
            raise MeshParseError(lineno, f"bad count {tok[1]!r}") from None

    n_nodes = header("nodes")
    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        if pos >= len(rows):
            raise MeshParseError(len(lines), "unexpected end of node block")
        lineno, tok = rows[pos]
        pos += 1
        if len(tok) != 3:
            raise MeshParseError(lineno, "node line must be 'id x y'")
        try:
            nid, x, y = int(tok[0]), float(tok[1]), float(tok[2])
        except ValueError:
            raise MeshParseError(lineno, "malformed node line") from None
        if nid != i:
            raise MeshParseError(lineno, f"node id {nid} out of sequence (expected {i})")
        nodes[i] = (x, y)

    n_elem = header("elements")
    tris = np.empty((n_elem, 3), dtype=np.int64)
    element_lines = []
    for i in range(n_elem):
        if pos >= len(rows):
            raise MeshParseError(len(lines), "unexpected end of element block")
        lineno, tok = rows[pos]
        pos += 1
        if len(tok) != 4:
            raise MeshParseError(lineno, "element line must be 'id n1 n2 n3'")
        try:
            eid, *conn = (int(t) for t in tok)
        except ValueError:
            raise MeshParseError(lineno, "malformed element line") from None
        if eid != i:
            raise MeshParseError(lineno, f"element id {eid} out of sequence (expected {i})")
        for n in conn:
            if not 0 <= n < n_nodes:
                raise MeshParseError(lineno, f"node index {n} out of range (have {n_nodes} nodes)")
        tris[i] = conn
        element_lines.append(lineno)

    boundary_sets: dict[str, NDArray[np.int64]] = {}
    while pos < len(rows):
        lineno, tok = rows[pos]
        pos += 1
        if tok[0] != "set" or len(tok) < 3:
            raise MeshParseError(lineno, "expected 'set NAME k id...'")
        name = tok[1]
        try:
            k = int(tok[2])
            ids = [int(t) for t in tok[3:]]
        except ValueError:
            raise MeshParseError(lineno, "malformed set line") from None
        if len(ids) != k:
            raise MeshParseError(lineno, f"set {name!r} declares {k} ids, found {len(ids)}")
        for n in ids:
            if not 0 <= n < n_nodes:
                raise MeshParseError(lineno, f"node index {n} out of range (have {n_nodes} nodes)")
        boundary_sets[name] = np.array(ids, dtype=np.int64)

    areas = signed_areas(nodes, tris)
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        raise MeshParseError(element_lines[bad[0]], f"degenerate or clockwise triangle {int(bad[0])}")

    mesh = Mesh(nodes=nodes, t3_elements=tris, boundary_sets=boundary_sets)
    try:
        validate(mesh)
    except MeshError as exc:
        raise MeshParseError(len(lines), str(exc)) from exc
    return mesh


def format_mesh(mesh: Mesh) -> str:
    """Canonical text form of the vertex mesh."""
    base = vertex_mesh(mesh)
    out = [f"nodes {base.n_nodes}"]
    out += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(base.nodes.tolist())]
    out.append(f"elements {base.n_elements}")
    out += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(base.t3_elements.tolist())]
    for name in sorted(base.boundary_sets):
        ids = base.boundary_sets[name].tolist()
        out.append(" ".join(["set", name, str(len(ids)), *map(str, ids)]))
    return "\n".join(out) + "\n"


def write_mesh(mesh: Mesh, path: Path | str) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")
