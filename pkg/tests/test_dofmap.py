"""Local-to-global dof numbering."""

import numpy as np
import pytest

from femform.dofmap import DofMapError, init_dofmap
from femform.element import make_element
from femform.mesh import (TRIANGLE, CellView, MeshDimensions,
                          build_mesh, cell_view, unit_square_mesh)


def test_p1_dofs_are_cell_vertices():
    mesh = unit_square_mesh(2)
    dm = init_dofmap(make_element("Lagrange", TRIANGLE, 1), mesh.dimensions())
    assert dm.global_dimension == 9
    for c in range(mesh.num_cells):
        dofs = dm.tabulate_dofs(cell_view(mesh, c))
        assert np.array_equal(dofs, mesh.cell_vertices[c])


def test_vector_p1_blocked_by_component():
    dims = MeshDimensions((9, 16, 8))
    dm = init_dofmap(make_element("VectorLagrange", TRIANGLE, 1, 2), dims)
    assert dm.component_stride == 9
    assert dm.global_dimension == 18
    cell = CellView(TRIANGLE, 0,
                    (np.array([7, 2, 4]), np.array([0, 1, 2]), np.array([0])),
                    np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert list(dm.tabulate_dofs(cell)) == [7, 2, 4, 16, 11, 13]


def test_p2_layout():
    mesh = unit_square_mesh(2)
    dm = init_dofmap(make_element("Lagrange", TRIANGLE, 2), mesh.dimensions())
    assert dm.global_dimension == 9 + 16
    assert dm.entity_offsets == (0, 9, 25)
    assert dm.dofs_per_entity == (1, 1, 0)
    for c in range(mesh.num_cells):
        view = cell_view(mesh, c)
        dofs = dm.tabulate_dofs(view)
        assert np.array_equal(dofs[:3], mesh.cell_vertices[c])
        assert np.array_equal(dofs[3:], 9 + view.entity_indices[1])


def _physical_dof_points(dm, view):
    x0 = view.coordinates[0]
    edges = view.coordinates[1:] - x0
    points = {}
    dofs = dm.tabulate_dofs(view)
    for dof, desc in zip(dofs, dm.element.dof_descriptors):
        points[int(dof)] = (desc.component,
                            tuple(x0 + np.asarray(desc.reference_point) @ edges))
    return points


@pytest.mark.parametrize("signature", [
    ("Lagrange", 1, None), ("Lagrange", 2, None), ("Lagrange", 3, None),
    ("VectorLagrange", 2, 2), ("DG", 0, None),
])
def test_shared_dofs_agree_on_physical_points(signature):
    """A global dof means the same point (and component) in every cell."""
    family, degree, length = signature
    mesh = unit_square_mesh(2)
    dm = init_dofmap(make_element(family, TRIANGLE, degree, vector_length=length),
                     mesh.dimensions())
    seen = {}
    for c in range(mesh.num_cells):
        for dof, where in _physical_dof_points(dm, cell_view(mesh, c)).items():
            if dof in seen:
                assert seen[dof][0] == where[0]
                assert np.allclose(seen[dof][1], where[1], atol=1e-14)
            else:
                seen[dof] = where
    assert sorted(seen) == list(range(dm.global_dimension))


def test_p3_edge_flip():
    # cell 1 written so its local edge (0,1) runs against the global
    # vertex order; its two edge dofs must come out swapped
    vertices = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    mesh = build_mesh(vertices, [(0, 1, 2), (2, 1, 3)])
    dm = init_dofmap(make_element("Lagrange", TRIANGLE, 3), mesh.dimensions())
    seen = {}
    for c in range(mesh.num_cells):
        for dof, where in _physical_dof_points(dm, cell_view(mesh, c)).items():
            if dof in seen:
                assert np.allclose(seen[dof], where[1], atol=1e-14)
            seen[dof] = where[1]
    assert sorted(seen) == list(range(dm.global_dimension))


def test_tabulate_facet_dofs():
    dims = unit_square_mesh(1).dimensions()
    p1 = init_dofmap(make_element("Lagrange", TRIANGLE, 1), dims)
    assert p1.tabulate_facet_dofs(0) == (1, 2)
    assert p1.tabulate_facet_dofs(1) == (0, 2)
    assert p1.tabulate_facet_dofs(2) == (0, 1)
    p2 = init_dofmap(make_element("Lagrange", TRIANGLE, 2), dims)
    assert p2.tabulate_facet_dofs(0) == (1, 2, 3)
    p3 = init_dofmap(make_element("Lagrange", TRIANGLE, 3), dims)
    assert p3.tabulate_facet_dofs(0) == (1, 2, 3, 4)
    dg0 = init_dofmap(make_element("DG", TRIANGLE, 0), dims)
    assert dg0.tabulate_facet_dofs(0) == ()
    vec = init_dofmap(make_element("VectorLagrange", TRIANGLE, 1, 2), dims)
    assert vec.tabulate_facet_dofs(0) == (1, 2, 4, 5)


def test_facet_dofs_tetrahedron():
    from femform.mesh import TETRAHEDRON
    dims = MeshDimensions((4, 6, 4, 1))
    p2 = init_dofmap(make_element("Lagrange", TETRAHEDRON, 2), dims)
    # facet 0 = vertices (1,2,3), edges (1,2),(1,3),(2,3) = local edges 3,4,5
    assert p2.tabulate_facet_dofs(0) == (1, 2, 3, 7, 8, 9)


def test_sub_dofmap():
    mesh = unit_square_mesh(2)
    dm = init_dofmap(make_element("VectorLagrange", TRIANGLE, 2, 2),
                     mesh.dimensions())
    sub = dm.sub_dofmap(1)
    assert sub.global_dimension == dm.component_stride
    for c in range(mesh.num_cells):
        view = cell_view(mesh, c)
        whole = dm.tabulate_dofs(view)
        part = sub.tabulate_dofs(view)
        ns = sub.local_dimension
        assert np.array_equal(part, whole[ns:] - dm.component_stride)
    with pytest.raises(DofMapError):
        dm.sub_dofmap(2)
    with pytest.raises(DofMapError):
        sub.sub_dofmap(0)


def test_dg0_coverage():
    mesh = unit_square_mesh(2)
    dm = init_dofmap(make_element("DG", TRIANGLE, 0), mesh.dimensions())
    assert dm.global_dimension == mesh.num_cells
    dofs = [int(dm.tabulate_dofs(cell_view(mesh, c))[0])
            for c in range(mesh.num_cells)]
    assert dofs == list(range(mesh.num_cells))


def test_init_protocol():
    mesh = unit_square_mesh(1)
    dm = init_dofmap(make_element("Lagrange", TRIANGLE, 1), mesh.dimensions())
    assert dm.requires_cell_init is False
    # the protocol calls are harmless no-ops for built-in elements
    for c in range(mesh.num_cells):
        dm.init_cell(cell_view(mesh, c))
    dm.init_cell_finalize()
    assert dm.global_dimension == 4


def test_dimension_mismatch():
    from femform.mesh import TETRAHEDRON
    with pytest.raises(DofMapError, match="element expects"):
        init_dofmap(make_element("Lagrange", TETRAHEDRON, 1),
                    unit_square_mesh(1).dimensions())
