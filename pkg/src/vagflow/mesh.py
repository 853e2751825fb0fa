"""Polygonal meshes, the simplicial submesh, mass lumping and regularity factors.

Cells are star-shaped polygons with a center.  Each cell is cut into the
triangles joining its center to its edges; these triangles carry the P1
reconstruction used by the VAG scheme.  Degrees of freedom live at vertices
and at cell centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MeshError",
    "MeshParseError",
    "Mesh",
    "Submesh",
    "LumpedMeasures",
    "QualityReport",
    "parse_mesh",
    "serialize_mesh",
    "read_mesh",
    "write_mesh",
    "generate_structured",
    "build_submesh",
    "compute_lumping",
    "mesh_quality",
]

HEADER = "VAGMESH 2"
AREA_RTOL = 1e-10


class MeshError(ValueError):
    """Invalid mesh geometry or connectivity."""

    def __init__(self, message: str, cell: int | None = None):
        super().__init__(message)
        self.cell = cell


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _tri_signed_area(p0, p1, p2) -> np.ndarray:
    return 0.5 * (
        (p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
        - (p2[..., 0] - p0[..., 0]) * (p1[..., 1] - p0[..., 1])
    )


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D polygonal mesh.

    Vertex indices are 0-based.  ``cells[k]`` lists the vertices of cell ``k``
    counterclockwise.  The cell/vertex incidence is also stored in CSR form
    (``cv_offsets``, ``cv_vertex``) with ``cv_cell`` giving the owning cell of
    every entry; lumping weights and masses use the same flat ordering.
    """

    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    centers: np.ndarray
    tags: np.ndarray
    boundary_vertices: np.ndarray
    cv_offsets: np.ndarray
    cv_vertex: np.ndarray
    cv_cell: np.ndarray
    cell_areas: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        vertices,
        cells: Iterable[Sequence[int]],
        centers=None,
        tags=None,
    ) -> "Mesh":
        """Build and validate a mesh; ``centers`` default to polygon centroids."""
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError(f"vertices must have shape (n, 2), got {verts.shape}")
        nv = len(verts)
        cell_list = tuple(tuple(int(i) for i in c) for c in cells)
        if not cell_list:
            raise MeshError("mesh has no cells")
        for k, c in enumerate(cell_list):
            if len(c) < 3:
                raise MeshError(f"cell {k} has fewer than 3 vertices", cell=k)
            for i in c:
                if i < 0 or i >= nv:
                    raise MeshError(f"cell {k} references missing vertex {i}", cell=k)
            if len(set(c)) != len(c):
                raise MeshError(f"cell {k} repeats a vertex", cell=k)

        nc = len(cell_list)
        if centers is None:
            ctr = np.array([_polygon_centroid(verts[list(c)]) for c in cell_list])
        else:
            ctr = np.asarray(centers, dtype=float)
            if ctr.shape != (nc, 2):
                raise MeshError(f"centers must have shape ({nc}, 2), got {ctr.shape}")
        if tags is None:
            tg = np.ones(nc, dtype=int)
        else:
            tg = np.asarray(tags, dtype=int)
            if tg.shape != (nc,):
                raise MeshError(f"tags must have shape ({nc},), got {tg.shape}")

        lengths = np.array([len(c) for c in cell_list])
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        cv_vertex = np.concatenate([np.array(c) for c in cell_list])
        cv_cell = np.repeat(np.arange(nc), lengths)

        # star-shapedness: every center/edge triangle positively oriented
        nxt = np.arange(len(cv_vertex)) + 1
        nxt[offsets[1:] - 1] = offsets[:-1]
        a = verts[cv_vertex]
        b = verts[cv_vertex[nxt]]
        tri_area = _tri_signed_area(ctr[cv_cell], a, b)
        areas = np.bincount(cv_cell, weights=tri_area, minlength=nc)
        scale = np.repeat(np.abs(areas), lengths)
        bad = np.nonzero(~(tri_area > 1e-14 * scale))[0]
        if bad.size:
            k = int(cv_cell[bad[0]])
            raise MeshError(
                f"cell {k} is not star-shaped with respect to its center "
                "(or is not counterclockwise)",
                cell=k,
            )

        # boundary edges: edges used by exactly one cell
        ea, eb = cv_vertex, cv_vertex[nxt]
        lo, hi = np.minimum(ea, eb), np.maximum(ea, eb)
        keys = lo.astype(np.int64) * nv + hi
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two cells")
        on_bnd = counts[inv] == 1
        bnd = np.unique(np.concatenate([ea[on_bnd], eb[on_bnd]]))

        # the oriented boundary edges enclose the domain; cell areas must add up to it
        pa, pb = verts[ea[on_bnd]], verts[eb[on_bnd]]
        domain_area = 0.5 * float(np.sum(pa[:, 0] * pb[:, 1] - pb[:, 0] * pa[:, 1]))
        total = float(areas.sum())
        if not math.isclose(total, domain_area, rel_tol=AREA_RTOL, abs_tol=0.0):
            raise MeshError(
                f"cell areas sum to {total!r} but the boundary encloses {domain_area!r}"
            )

        return cls(
            vertices=_frozen(verts),
            cells=cell_list,
            centers=_frozen(ctr),
            tags=_frozen(tg, int),
            boundary_vertices=_frozen(bnd, int),
            cv_offsets=_frozen(offsets, int),
            cv_vertex=_frozen(cv_vertex, int),
            cv_cell=_frozen(cv_cell, int),
            cell_areas=_frozen(areas),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_dofs(self) -> int:
        return self.n_vertices + self.n_cells

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    def cell_sizes(self) -> np.ndarray:
        """Number of vertices of each cell."""
        return np.diff(self.cv_offsets)

    def vertex_valence(self) -> np.ndarray:
        """Number of cells sharing each vertex."""
        return np.bincount(self.cv_vertex, minlength=self.n_vertices)

    def cell_diameters(self) -> np.ndarray:
        out = np.empty(self.n_cells)
        for k, c in enumerate(self.cells):
            p = self.vertices[list(c)]
            d = p[:, None, :] - p[None, :, :]
            out[k] = np.sqrt((d**2).sum(-1)).max()
        return out

    def dof_points(self) -> np.ndarray:
        """Coordinates of all degrees of freedom, vertices first then centers."""
        return np.vstack([self.vertices, self.centers])

    def with_tags(self, tags) -> "Mesh":
        return Mesh.from_arrays(self.vertices, self.cells, self.centers, tags)

    def bounding_box(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 0].max()), float(v[:, 1].min()), float(v[:, 1].max())

    def boundary_side(self, side: str, tol: float = 1e-12) -> np.ndarray:
        """Boundary vertices on one side of the bounding box.

        ``side`` is ``left``, ``right``, ``bottom``, ``top`` or ``all``.
        """
        b = self.boundary_vertices
        if side == "all":
            return b.copy()
        xmin, xmax, ymin, ymax = self.bounding_box()
        coord, target = {
            "left": (0, xmin),
            "right": (0, xmax),
            "bottom": (1, ymin),
            "top": (1, ymax),
        }[side]
        return b[np.abs(self.vertices[b, coord] - target) <= tol]


# ---------------------------------------------------------------------------
# text format


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = []
        col = 0
        for part in line.split():
            col = line.index(part, col)
            toks.append((part, col + 1))
            col += len(part)
        yield lineno, toks


def _num(tok, lineno, kind=float):
    text, col = tok
    try:
        return kind(text)
    except ValueError:
        name = "integer" if kind is int else "number"
        raise MeshParseError(f"expected {name}, got {text!r}", lineno, col) from None


def parse_mesh(text: str) -> Mesh:
    """Parse the ``VAGMESH 2`` text format (1-based vertex indices)."""
    lines = list(_tokens(text))
    if not lines:
        raise MeshParseError("empty mesh file", 1)
    pos = 0

    def take(expected_keyword):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0]
            raise MeshParseError(f"missing {expected_keyword} block", last + 1)
        lineno, toks = lines[pos]
        if toks[0][0] != expected_keyword or len(toks) != 2:
            raise MeshParseError(f"expected '{expected_keyword} <count>'", lineno, toks[0][1])
        pos += 1
        count = _num(toks[1], lineno, int)
        if count < 0:
            raise MeshParseError("negative count", lineno, toks[1][1])
        return count

    lineno, toks = lines[0]
    if [t for t, _ in toks] != HEADER.split():
        raise MeshParseError(f"expected header {HEADER!r}", lineno, toks[0][1])
    pos = 1

    nv = take("VERTICES")
    verts = np.empty((nv, 2))
    for i in range(nv):
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file in VERTICES", lines[-1][0] + 1)
        lineno, toks = lines[pos]
        if len(toks) != 2:
            raise MeshParseError("vertex line needs 'x y'", lineno, toks[0][1])
        verts[i] = [_num(toks[0], lineno), _num(toks[1], lineno)]
        pos += 1

    nc = take("CELLS")
    cells, tags = [], []
    for k in range(nc):
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file in CELLS", lines[-1][0] + 1)
        lineno, toks = lines[pos]
        n = _num(toks[0], lineno, int)
        if n < 3 or len(toks) not in (n + 1, n + 2):
            raise MeshParseError("cell line needs 'k i1 ... ik [tag]' with k >= 3", lineno, toks[0][1])
        idx = []
        for tok in toks[1 : n + 1]:
            i = _num(tok, lineno, int)
            if i < 1 or i > nv:
                raise MeshParseError(f"vertex index {i} out of range 1..{nv}", lineno, tok[1])
            idx.append(i - 1)
        cells.append(idx)
        tags.append(_num(toks[n + 1], lineno, int) if len(toks) == n + 2 else 1)
        pos += 1

    centers = None
    if pos < len(lines):
        m = take("CENTERS")
        if m != nc:
            raise MeshParseError(f"CENTERS count {m} differs from CELLS count {nc}", lines[pos - 1][0])
        centers = np.empty((nc, 2))
        for k in range(nc):
            if pos >= len(lines):
                raise MeshParseError("unexpected end of file in CENTERS", lines[-1][0] + 1)
            lineno, toks = lines[pos]
            if len(toks) != 2:
                raise MeshParseError("center line needs 'x y'", lineno, toks[0][1])
            centers[k] = [_num(toks[0], lineno), _num(toks[1], lineno)]
            pos += 1
    if pos < len(lines):
        lineno, toks = lines[pos]
        raise MeshParseError("trailing content", lineno, toks[0][1])

    return Mesh.from_arrays(verts, cells, centers, tags)


def serialize_mesh(mesh: Mesh) -> str:
    """Inverse of :func:`parse_mesh`; always writes the CENTERS block."""
    out = [HEADER, f"VERTICES {mesh.n_vertices}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    out.append(f"CELLS {mesh.n_cells}")
    for c, tag in zip(mesh.cells, mesh.tags):
        out.append(" ".join([str(len(c)), *(str(i + 1) for i in c), str(int(tag))]))
    out.append(f"CENTERS {mesh.n_cells}")
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.centers]
    return "\n".join(out) + "\n"


def read_mesh(path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        return parse_mesh(fh.read())


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_mesh(mesh))


# ---------------------------------------------------------------------------
# generators


def _grid(n: int) -> np.ndarray:
    s = np.arange(n + 1) / n
    X, Y = np.meshgrid(s, s, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def generate_structured(kind: str, n: int, distortion: float = 0.0) -> Mesh:
    """Structured meshes of the unit square.

    ``cartesian``: n x n squares.  ``split-triangles``: each square cut in two
    along alternating diagonals.  ``kershaw-like``: n x n quadrilaterals whose
    horizontal grid lines are sheared by ``distortion * sin(2 pi x) sin(pi y) / pi``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    pts = _grid(n)
    cells: list[list[int]] = []
    if kind == "cartesian":
        for j in range(n):
            for i in range(n):
                cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    elif kind == "split-triangles":
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                if (i + j) % 2 == 0:
                    cells += [[a, b, c], [a, c, d]]
                else:
                    cells += [[a, b, d], [b, c, d]]
    elif kind == "kershaw-like":
        if not 0.0 <= distortion < 1.0:
            raise ValueError(f"distortion must lie in [0, 1), got {distortion}")
        x, y = pts[:, 0], pts[:, 1]
        pts = np.column_stack(
            [x, y + distortion * np.sin(2 * np.pi * x) * np.sin(np.pi * y) / np.pi]
        )
        # pin the boundary exactly
        pts[np.isclose(y, 0.0, atol=0), 1] = 0.0
        pts[np.isclose(y, 1.0, atol=0), 1] = 1.0
        for j in range(n):
            for i in range(n):
                cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    else:
        raise ValueError(f"unknown mesh kind {kind!r}")
    return Mesh.from_arrays(pts, cells)


# ---------------------------------------------------------------------------
# submesh, lumping, quality


@dataclass(frozen=True, eq=False)
class Submesh:
    """Triangles (center, a, b) for every edge (a, b) of every cell.

    Triangle ``t`` is aligned with the flat incidence entry ``t`` of the mesh:
    ``a`` is the incidence vertex and ``b`` the next vertex of the same cell.
    """

    cell: np.ndarray
    a: np.ndarray
    b: np.ndarray
    area: np.ndarray
    diameter: np.ndarray
    rho: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.cell)

    def points(self, mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return mesh.centers[self.cell], mesh.vertices[self.a], mesh.vertices[self.b]


def build_submesh(mesh: Mesh) -> Submesh:
    offsets = mesh.cv_offsets
    nxt = np.arange(len(mesh.cv_vertex)) + 1
    nxt[offsets[1:] - 1] = offsets[:-1]
    cell = mesh.cv_cell
    a = mesh.cv_vertex
    b = mesh.cv_vertex[nxt]
    p0, p1, p2 = mesh.centers[cell], mesh.vertices[a], mesh.vertices[b]
    area = _tri_signed_area(p0, p1, p2)
    if np.any(area <= 0):
        k = int(cell[np.argmin(area)])
        raise MeshError(f"degenerate submesh triangle in cell {k}", cell=k)
    e0 = np.linalg.norm(p1 - p2, axis=1)
    e1 = np.linalg.norm(p2 - p0, axis=1)
    e2 = np.linalg.norm(p0 - p1, axis=1)
    diameter = np.maximum(np.maximum(e0, e1), e2)
    rho = 4.0 * area / (e0 + e1 + e2)
    return Submesh(
        cell=_frozen(cell, int),
        a=_frozen(a, int),
        b=_frozen(b, int),
        area=_frozen(area),
        diameter=_frozen(diameter),
        rho=_frozen(rho),
    )


@dataclass(frozen=True, eq=False)
class LumpedMeasures:
    """Mass lumping: ``alpha`` and ``m_cell_vertex`` follow the mesh incidence order."""

    alpha: np.ndarray
    m_cell: np.ndarray
    m_vertex: np.ndarray
    m_cell_vertex: np.ndarray

    def dof_masses(self) -> np.ndarray:
        """Masses of all dofs, vertices first then cells."""
        return np.concatenate([self.m_vertex, self.m_cell])


def compute_lumping(mesh: Mesh, fraction: float | None = 0.1, weights=None) -> LumpedMeasures:
    """Lumped masses from ``alpha = fraction / #V_k`` or from explicit weights.

    ``weights`` may be a flat array in incidence order or a mapping
    ``(cell, vertex) -> alpha``; it overrides ``fraction``.
    """
    if weights is None:
        if fraction is None:
            raise ValueError("either fraction or weights is required")
        alpha = float(fraction) / np.repeat(mesh.cell_sizes(), mesh.cell_sizes())
    elif isinstance(weights, Mapping):
        alpha = np.array(
            [weights[(int(k), int(s))] for k, s in zip(mesh.cv_cell, mesh.cv_vertex)], dtype=float
        )
    else:
        alpha = np.asarray(weights, dtype=float)
        if alpha.shape != mesh.cv_vertex.shape:
            raise ValueError(f"weights must have shape {mesh.cv_vertex.shape}")

    if np.any(alpha < 0):
        raise ValueError("lumping weights must be nonnegative")
    per_cell = np.bincount(mesh.cv_cell, weights=alpha, minlength=mesh.n_cells)
    over = np.nonzero(per_cell > 1.0 + 1e-15)[0]
    if over.size:
        raise ValueError(f"lumping weights of cell {int(over[0])} sum to {per_cell[over[0]]} > 1")

    m_cv = alpha * mesh.cell_areas[mesh.cv_cell]
    m_vertex = np.bincount(mesh.cv_vertex, weights=m_cv, minlength=mesh.n_vertices)
    m_cell = mesh.cell_areas - np.bincount(mesh.cv_cell, weights=m_cv, minlength=mesh.n_cells)
    if np.any(m_vertex <= 0):
        raise ValueError(f"vertex {int(np.argmin(m_vertex))} gets a nonpositive lumped mass")
    if np.any(m_cell <= 0):
        raise ValueError(f"cell {int(np.argmin(m_cell))} gets a nonpositive lumped mass")
    return LumpedMeasures(
        alpha=_frozen(alpha), m_cell=_frozen(m_cell), m_vertex=_frozen(m_vertex), m_cell_vertex=_frozen(m_cv)
    )


@dataclass(frozen=True)
class QualityReport:
    h: float
    theta: float
    ell: int
    zeta: float
    cond_range: tuple[float, float] | None = None


def basis_integrals(mesh: Mesh, submesh: Submesh) -> np.ndarray:
    """Integral of each P1 basis function over the domain (vertices first)."""
    third = submesh.area / 3.0
    iv = np.bincount(submesh.a, weights=third, minlength=mesh.n_vertices)
    iv += np.bincount(submesh.b, weights=third, minlength=mesh.n_vertices)
    ic = np.bincount(submesh.cell, weights=third, minlength=mesh.n_cells)
    return np.concatenate([iv, ic])


def mesh_quality(mesh: Mesh, submesh: Submesh, lumped: LumpedMeasures, cond_range=None) -> QualityReport:
    theta = float(np.max(submesh.diameter / submesh.rho))
    sizes = mesh.cell_sizes()
    # in 2D a cell has as many faces as vertices
    ell = int(max(sizes.max(), mesh.vertex_valence().max(), sizes.max()))
    zeta = float(np.min(lumped.dof_masses() / basis_integrals(mesh, submesh)))
    return QualityReport(
        h=float(submesh.diameter.max()), theta=theta, ell=ell, zeta=zeta, cond_range=cond_range
    )
