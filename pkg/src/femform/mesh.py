"""Simplicial meshes with deterministic entity numbering.

A mesh stores vertex coordinates, cells, and for every topological
dimension d a global numbering of the d-entities (vertices, edges,
faces, cells).  The numbering is canonical: entity i is the i-th
entry in the lexicographic ordering of sorted global vertex tuples.
This makes meshes built from permuted cell lists identical, which in
turn makes assembly output reproducible bit for bit.

Facets (entities of dimension tdim-1) are classified as exterior
(one incident cell) or interior (exactly two).  Local facet f of a
cell is the sub-simplex opposite local vertex f.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class MeshError(ValueError):
    """Invalid mesh input: bad cell data, indices, or file contents."""


# Degeneracy threshold: a cell is rejected when |det J| falls below
# this times the cell's coordinate scale raised to tdim.
DEGENERACY_RTOL = 1e-14


# --------------------------------------------------------------------------
# reference shapes
# --------------------------------------------------------------------------

_ENTITY_TABLES = {
    "interval": {
        0: ((0,), (1,)),
        1: ((0, 1),),
    },
    "triangle": {
        0: ((0,), (1,), (2,)),
        # edge e is opposite vertex e
        1: ((1, 2), (0, 2), (0, 1)),
        2: ((0, 1, 2),),
    },
    "tetrahedron": {
        0: ((0,), (1,), (2,), (3,)),
        # edges ordered lexicographically by vertex pair
        1: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
        # face e is opposite vertex e
        2: ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)),
        3: ((0, 1, 2, 3),),
    },
}

_REFERENCE_VERTICES = {
    "interval": ((0.0,), (1.0,)),
    "triangle": ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
    "tetrahedron": ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0),
                    (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
}


@dataclass(frozen=True)
class ReferenceShape:
    """One of the reference simplices: interval, triangle, tetrahedron."""

    name: str
    topological_dimension: int

    @property
    def num_vertices(self):
        return self.topological_dimension + 1

    @property
    def num_facets(self):
        return self.topological_dimension + 1

    @property
    def reference_vertices(self):
        """Vertex coordinates of the reference cell, shape (nv, tdim)."""
        return np.array(_REFERENCE_VERTICES[self.name])

    @property
    def reference_measure(self):
        """Volume of the reference cell, 1/tdim!."""
        return 1.0 / math.factorial(self.topological_dimension)

    @property
    def facet_reference_measure(self):
        """Volume of the reference facet simplex (1.0 for a point)."""
        d = self.topological_dimension - 1
        return 1.0 if d == 0 else 1.0 / math.factorial(d)

    def entity_local_vertices(self, d):
        """Local vertex tuples of the dimension-d entities."""
        try:
            return _ENTITY_TABLES[self.name][d]
        except KeyError:
            raise MeshError(f"{self.name} has no entities of dimension {d}")

    def num_entities(self, d):
        return len(self.entity_local_vertices(d))

    def facet_local_vertices(self, f):
        """Local vertices of facet f (the sub-simplex opposite vertex f)."""
        if not 0 <= f < self.num_facets:
            raise MeshError(f"facet index {f} out of range for {self.name}")
        return tuple(v for v in range(self.num_vertices) if v != f)

    def facet_entity_index(self, f):
        """Local index of facet f among the dimension tdim-1 entities."""
        target = self.facet_local_vertices(f)
        table = self.entity_local_vertices(self.topological_dimension - 1)
        return table.index(target)

    def __repr__(self):
        return f"ReferenceShape({self.name!r})"


INTERVAL = ReferenceShape("interval", 1)
TRIANGLE = ReferenceShape("triangle", 2)
TETRAHEDRON = ReferenceShape("tetrahedron", 3)

_SHAPES_BY_NAME = {s.name: s for s in (INTERVAL, TRIANGLE, TETRAHEDRON)}
_SHAPES_BY_DIM = {s.topological_dimension: s for s in (INTERVAL, TRIANGLE, TETRAHEDRON)}


def reference_shape(name):
    """Look up a reference shape by name."""
    try:
        return _SHAPES_BY_NAME[name]
    except KeyError:
        raise MeshError(f"unknown reference shape {name!r}") from None


# --------------------------------------------------------------------------
# mesh and views
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MeshDimensions:
    """Entity counts per dimension; all a dof map needs to know of a mesh."""

    num_entities: tuple


class ExteriorFacet(NamedTuple):
    facet_index: int      # global entity index, dimension tdim-1
    cell: int
    local_facet: int


class InteriorFacet(NamedTuple):
    facet_index: int
    cell_plus: int
    local_facet_plus: int
    cell_minus: int
    local_facet_minus: int


class Mesh:
    """Immutable simplicial mesh.

    Construct through :func:`build_mesh` or one of the unit mesh
    generators; the constructor is internal plumbing.  All arrays are
    write-protected after construction.

    Attributes
    ----------
    shape : ReferenceShape
    vertex_coordinates : (num_vertices, gdim) float array
    cell_vertices : (num_cells, tdim+1) int array, rows in canonical
        cell order but each row in the caller's vertex order
    entity_vertices : dict d -> (n_d, d+1) int array of sorted tuples
    cell_entity_indices : dict d -> (num_cells, local entity count)
    cell_markers : (num_cells,) int array
    exterior_facets : tuple of ExteriorFacet, ordered by facet entity index
    interior_facets : tuple of InteriorFacet, same order
    facet_markers : (len(exterior_facets),) int array
    """

    def __init__(self, shape, vertex_coordinates, cell_vertices,
                 entity_vertices, cell_entity_indices,
                 exterior_facets, interior_facets,
                 cell_markers, facet_markers):
        self.shape = shape
        self.vertex_coordinates = vertex_coordinates
        self.cell_vertices = cell_vertices
        self.entity_vertices = entity_vertices
        self.cell_entity_indices = cell_entity_indices
        self.exterior_facets = tuple(exterior_facets)
        self.interior_facets = tuple(interior_facets)
        self.cell_markers = cell_markers
        self.facet_markers = facet_markers
        self._exterior_by_entity = {r.facet_index: r for r in self.exterior_facets}
        self._interior_by_entity = {r.facet_index: r for r in self.interior_facets}
        for arr in (self.vertex_coordinates, self.cell_vertices,
                    self.cell_markers, self.facet_markers,
                    *entity_vertices.values(), *cell_entity_indices.values()):
            arr.setflags(write=False)

    @property
    def topological_dimension(self):
        return self.shape.topological_dimension

    @property
    def geometric_dimension(self):
        return self.vertex_coordinates.shape[1]

    @property
    def num_cells(self):
        return self.cell_vertices.shape[0]

    @property
    def num_vertices(self):
        return self.vertex_coordinates.shape[0]

    def num_entities(self, d):
        if d == 0:
            return self.num_vertices
        return self.entity_vertices[d].shape[0]

    def dimensions(self):
        """Entity counts as a MeshDimensions record."""
        tdim = self.topological_dimension
        return MeshDimensions(tuple(self.num_entities(d) for d in range(tdim + 1)))

    def replace_markers(self, cell_markers=None, facet_markers=None):
        """Return a mesh sharing this one's topology with new markers.

        cell_markers is indexed by canonical cell number.  facet_markers
        is either an array aligned with exterior_facets or a dict keyed
        by sorted global vertex tuple of the facet.
        """
        cm = self.cell_markers
        if cell_markers is not None:
            cm = _checked_markers(cell_markers, self.num_cells, "cell")
        fm = self.facet_markers
        if facet_markers is not None:
            fm = self._resolve_facet_markers(facet_markers)
        return Mesh(self.shape, self.vertex_coordinates, self.cell_vertices,
                    self.entity_vertices, self.cell_entity_indices,
                    self.exterior_facets, self.interior_facets, cm, fm)

    def _resolve_facet_markers(self, facet_markers):
        n = len(self.exterior_facets)
        if isinstance(facet_markers, dict):
            fm = np.zeros(n, dtype=int)
            tdim = self.topological_dimension
            lookup = {}
            for pos, rec in enumerate(self.exterior_facets):
                key = tuple(int(v) for v in self.entity_vertices[tdim - 1][rec.facet_index]) \
                    if tdim > 1 else (int(self.entity_vertices[0][rec.facet_index, 0]),)
                lookup[key] = pos
            for key, value in facet_markers.items():
                key = tuple(sorted(int(v) for v in key))
                if key not in lookup:
                    raise MeshError(f"facet {key} is not an exterior facet")
                fm[lookup[key]] = int(value)
            return fm
        return _checked_markers(facet_markers, n, "facet")

    def __repr__(self):
        return (f"Mesh({self.shape.name}, {self.num_vertices} vertices, "
                f"{self.num_cells} cells)")


def _checked_markers(markers, n, what):
    arr = np.asarray(markers, dtype=int).copy()
    if arr.shape != (n,):
        raise MeshError(f"expected {n} {what} markers, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class CellView:
    """Everything a kernel needs to know about one cell."""

    shape: ReferenceShape
    index: int
    entity_indices: tuple      # entity_indices[d] = int array of global indices
    coordinates: np.ndarray    # (tdim+1, gdim), vertex order matches cell storage

    @property
    def topological_dimension(self):
        return self.shape.topological_dimension

    @property
    def geometric_dimension(self):
        return self.coordinates.shape[1]


def cell_view(mesh, c):
    """Build the CellView of cell c."""
    if not 0 <= c < mesh.num_cells:
        raise MeshError(f"cell index {c} out of range")
    tdim = mesh.topological_dimension
    entities = tuple(mesh.cell_entity_indices[d][c] for d in range(tdim + 1))
    coords = mesh.vertex_coordinates[mesh.cell_vertices[c]]
    return CellView(mesh.shape, c, entities, coords)


def macro_cell_view(mesh, facet_index):
    """Views of the two cells sharing an interior facet.

    The facet is identified by its global entity index (dimension
    tdim-1).  Returns (view_plus, view_minus, local_facet_plus,
    local_facet_minus) where the plus cell is the one with the lower
    cell index.
    """
    rec = mesh._interior_by_entity.get(facet_index)
    if rec is None:
        if facet_index in mesh._exterior_by_entity:
            raise MeshError(f"facet {facet_index} is exterior, not interior")
        raise MeshError(f"no facet with entity index {facet_index}")
    return (cell_view(mesh, rec.cell_plus), cell_view(mesh, rec.cell_minus),
            rec.local_facet_plus, rec.local_facet_minus)


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def build_mesh(vertices, cells, cell_markers=None, facet_markers=None):
    """Build a mesh from vertex coordinates and cell vertex lists.

    Parameters
    ----------
    vertices : (nv, gdim) array-like of float
    cells : (nc, tdim+1) array-like of vertex indices.  The input order
        of cells is irrelevant; cells are renumbered canonically.
    cell_markers : optional int array aligned with the *input* cell order
    facet_markers : optional dict keyed by sorted global vertex tuple,
        or an array aligned with the canonical exterior facet order

    Returns
    -------
    Mesh
    """
    coords = np.array(vertices, dtype=float)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise MeshError("vertices must be a non-empty 2-d array")
    cells = np.array(cells, dtype=int)
    if cells.ndim != 2 or cells.shape[0] == 0:
        raise MeshError("cells must be a non-empty 2-d array")
    tdim = cells.shape[1] - 1
    gdim = coords.shape[1]
    if tdim not in _SHAPES_BY_DIM:
        raise MeshError(f"cells with {cells.shape[1]} vertices are not simplices "
                        "of a supported dimension")
    if gdim < tdim:
        raise MeshError(f"geometric dimension {gdim} below topological {tdim}")
    shape = _SHAPES_BY_DIM[tdim]

    nv = coords.shape[0]
    if cells.min() < 0 or cells.max() >= nv:
        raise MeshError("cell vertex index out of range")
    sorted_cells = np.sort(cells, axis=1)
    if (sorted_cells[:, 1:] == sorted_cells[:, :-1]).any():
        raise MeshError("cell with repeated vertex")

    # canonical cell order: lexicographic in the sorted vertex tuple
    order = np.lexsort(tuple(sorted_cells[:, k] for k in reversed(range(tdim + 1))))
    sorted_cells = sorted_cells[order]
    if len(order) > 1 and (sorted_cells[1:] == sorted_cells[:-1]).all(axis=1).any():
        raise MeshError("duplicate cell")
    cells = cells[order].copy()

    if cell_markers is not None:
        cell_markers = _checked_markers(cell_markers, cells.shape[0], "cell")[order]
    else:
        cell_markers = np.zeros(cells.shape[0], dtype=int)

    _check_nondegenerate(coords, cells, tdim)

    entity_vertices = {0: np.arange(nv, dtype=int).reshape(nv, 1)}
    cell_entity_indices = {0: cells, tdim: np.arange(cells.shape[0], dtype=int).reshape(-1, 1)}
    for d in range(1, tdim):
        table = shape.entity_local_vertices(d)
        local = np.array(table, dtype=int)                    # (n_local, d+1)
        ent = np.sort(cells[:, local], axis=2)                # (nc, n_local, d+1)
        flat = ent.reshape(-1, d + 1)
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        entity_vertices[d] = uniq
        cell_entity_indices[d] = inverse.reshape(cells.shape[0], len(table))
    entity_vertices[tdim] = sorted_cells

    exterior, interior = _classify_facets(shape, cell_entity_indices)

    mesh = Mesh(shape, coords, cells, entity_vertices, cell_entity_indices,
                exterior, interior, cell_markers,
                np.zeros(len(exterior), dtype=int))
    if facet_markers is not None:
        mesh = mesh.replace_markers(facet_markers=facet_markers)
    return mesh


def _check_nondegenerate(coords, cells, tdim):
    edges = coords[cells[:, 1:]] - coords[cells[:, :1]]       # (nc, tdim, gdim)
    scale = np.sqrt((edges ** 2).sum(axis=2)).max(axis=1)     # longest edge from vertex 0
    gram = edges @ edges.transpose(0, 2, 1)
    vol = np.sqrt(np.abs(np.linalg.det(gram)))
    bad = vol <= DEGENERACY_RTOL * np.maximum(scale, 0.0) ** tdim
    if bad.any():
        raise MeshError(f"degenerate cell (canonical index {int(np.nonzero(bad)[0][0])})")


def _classify_facets(shape, cell_entity_indices):
    tdim = shape.topological_dimension
    nc = cell_entity_indices[0].shape[0]
    facet_entity = [shape.facet_entity_index(f) for f in range(shape.num_facets)]
    incidence = {}
    for c in range(nc):
        row = cell_entity_indices[tdim - 1][c]
        for f in range(shape.num_facets):
            incidence.setdefault(int(row[facet_entity[f]]), []).append((c, f))
    exterior, interior = [], []
    for e in sorted(incidence):
        hits = incidence[e]
        if len(hits) == 1:
            exterior.append(ExteriorFacet(e, *hits[0]))
        elif len(hits) == 2:
            (c0, f0), (c1, f1) = sorted(hits)
            interior.append(InteriorFacet(e, c0, f0, c1, f1))
        else:
            raise MeshError(f"facet entity {e} shared by {len(hits)} cells")
    return exterior, interior


# --------------------------------------------------------------------------
# structured unit meshes
# --------------------------------------------------------------------------

def unit_interval_mesh(n):
    """Mesh of [0,1] with n equal cells."""
    if n < 1:
        raise MeshError("n must be at least 1")
    vertices = np.linspace(0.0, 1.0, n + 1).reshape(-1, 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return build_mesh(vertices, cells)


def unit_square_mesh(n):
    """Uniform triangulation of the unit square, 2*n*n cells.

    Each grid square is split along the diagonal from its lower-left
    to its upper-right corner.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    side = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01 = v00 + 1, v00 + n + 1
            v11 = v01 + 1
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return build_mesh(vertices, cells)


def unit_cube_mesh(n):
    """Uniform tetrahedralization of the unit cube, 6*n**3 cells.

    Each grid cube is cut into six tetrahedra sharing the main
    diagonal, so neighbouring cubes match on their common face.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    side = np.linspace(0.0, 1.0, n + 1)
    zz, yy, xx = np.meshgrid(side, side, side, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def vid(i, j, k):
        return (k * (n + 1) + j) * (n + 1) + i

    cells = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in itertools.permutations(range(3)):
                    steps = [(0, 0, 0)]
                    pos = [0, 0, 0]
                    for axis in perm:
                        pos[axis] += 1
                        steps.append(tuple(pos))
                    cells.append(tuple(vid(i + s[0], j + s[1], k + s[2])
                                       for s in steps))
    return build_mesh(vertices, cells)


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

_FORMAT_TAG = "ufcmesh"


def format_mesh(mesh):
    """The plain text serialization of a mesh (see read_mesh)."""
    lines = [f"{_FORMAT_TAG} {mesh.topological_dimension} {mesh.geometric_dimension}",
             f"{mesh.num_vertices} {mesh.num_cells}"]
    for row in mesh.vertex_coordinates:
        lines.append(" ".join("%.17g" % x for x in row))
    for row in mesh.cell_vertices:
        lines.append(" ".join(str(int(v)) for v in row))
    if mesh.cell_markers.any():
        lines.append("cell_markers")
        lines.extend(str(int(m)) for m in mesh.cell_markers)
    if mesh.facet_markers.any():
        lines.append("facet_markers")
        lines.extend(str(int(m)) for m in mesh.facet_markers)
    return "\n".join(lines) + "\n"


def write_mesh(mesh, path):
    """Write a mesh in the plain text format (see read_mesh)."""
    with open(path, "w") as f:
        f.write(format_mesh(mesh))


def read_mesh(path):
    """Read a mesh written by write_mesh.

    The format is line based::

        ufcmesh <tdim> <gdim>
        <num_vertices> <num_cells>
        x [y [z]]          (one line per vertex)
        v0 v1 ... v_tdim   (one line per cell)
        cell_markers       (optional section, one int per cell)
        facet_markers      (optional section, one int per exterior facet,
                            ordered by sorted facet vertex tuple)
    """
    with open(path) as f:
        raw = f.read()
    lines = [ln.strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != _FORMAT_TAG:
        raise MeshError(f"{path}: expected header '{_FORMAT_TAG} <tdim> <gdim>'")
    try:
        tdim, gdim = int(head[1]), int(head[2])
        nv, nc = (int(w) for w in lines[1].split())
    except (ValueError, IndexError):
        raise MeshError(f"{path}: malformed size header") from None
    need = 2 + nv + nc
    if len(lines) < need:
        raise MeshError(f"{path}: truncated file")
    try:
        vertices = [[float(w) for w in lines[2 + i].split()] for i in range(nv)]
        cells = [[int(w) for w in lines[2 + nv + i].split()] for i in range(nc)]
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from None
    if any(len(v) != gdim for v in vertices):
        raise MeshError(f"{path}: vertex line with wrong coordinate count")
    if any(len(c) != tdim + 1 for c in cells):
        raise MeshError(f"{path}: cell line with wrong vertex count")

    cell_markers = None
    facet_markers = None
    pos = need
    while pos < len(lines):
        section = lines[pos]
        if section == "cell_markers":
            cell_markers, pos = _read_marker_section(lines, pos + 1, nc, path)
        elif section == "facet_markers":
            facet_markers, pos = _read_marker_section(lines, pos + 1, None, path)
        else:
            raise MeshError(f"{path}: unexpected line {section!r}")

    mesh = build_mesh(vertices, cells, cell_markers=cell_markers)
    if facet_markers is not None:
        if len(facet_markers) != len(mesh.exterior_facets):
            raise MeshError(f"{path}: expected {len(mesh.exterior_facets)} "
                            f"facet markers, got {len(facet_markers)}")
        mesh = mesh.replace_markers(facet_markers=np.array(facet_markers))
    return mesh


def _read_marker_section(lines, pos, count, path):
    markers = []
    while pos < len(lines) and lines[pos] not in ("cell_markers", "facet_markers"):
        try:
            markers.append(int(lines[pos]))
        except ValueError:
            raise MeshError(f"{path}: bad marker line {lines[pos]!r}") from None
        pos += 1
    if count is not None and len(markers) != count:
        raise MeshError(f"{path}: expected {count} cell markers, got {len(markers)}")
    return markers, pos
