"""Reference elements: nodal duality, ordering, tabulation, dof evaluation."""

import numpy as np
import pytest

from femform.element import ElementError, element_from_signature, make_element
from femform.mesh import (INTERVAL, TRIANGLE, TETRAHEDRON,
                          unit_square_mesh, cell_view)

SHAPES = (INTERVAL, TRIANGLE, TETRAHEDRON)

ALL_ELEMENTS = (
    [("Lagrange", s, q, None) for s in SHAPES for q in (1, 2, 3)]
    + [("DiscontinuousLagrange", s, 0, None) for s in SHAPES]
    + [("VectorLagrange", s, q, s.topological_dimension)
       for s in SHAPES for q in (1, 2, 3)]
)


def _ids(spec):
    family, shape, degree, length = spec
    tag = f"{family}-{shape.name}-{degree}"
    return tag if length is None else f"{tag}-{length}"


@pytest.fixture(params=ALL_ELEMENTS, ids=_ids)
def element(request):
    family, shape, degree, length = request.param
    return make_element(family, shape, degree, vector_length=length)


def test_nodal_duality(element):
    """evaluate_basis(i, p_j) with component picked per dof is delta_ij."""
    n = element.space_dimension
    defect = np.zeros((n, n))
    for j, dof in enumerate(element.dof_descriptors):
        values = element.tabulate(np.array([dof.reference_point]))[0]
        if element.value_shape:
            values = values[:, dof.component]
        defect[:, j] = values
    assert np.abs(defect - np.eye(n)).max() < 1e-12


def test_partition_of_unity(element):
    if element.family == "VectorLagrange":
        pytest.skip("component sums are not 1 for vector elements")
    rng = np.random.default_rng(3)
    tdim = element.shape.topological_dimension
    pts = _random_reference_points(rng, tdim, 20)
    vals = element.tabulate(pts)
    assert np.abs(vals.sum(axis=1) - 1.0).max() < 1e-12
    grads = element.tabulate_gradients(pts)
    assert np.abs(grads.sum(axis=1)).max() < 1e-11


def _random_reference_points(rng, tdim, count):
    # rejection-free: scale barycentrically random points into the simplex
    raw = rng.random((count, tdim + 1))
    raw /= raw.sum(axis=1, keepdims=True)
    return raw[:, 1:]


def test_polynomial_reproduction(element):
    """Interpolating a polynomial of the element's degree is exact."""
    rng = np.random.default_rng(11)
    tdim = element.shape.topological_dimension
    q = element.degree
    exps = [e for e in np.ndindex(*(q + 1,) * tdim) if sum(e) <= q]
    coeffs = rng.standard_normal(len(exps))

    def poly(x):
        return sum(c * np.prod(np.asarray(x) ** np.array(e))
                   for c, e in zip(coeffs, exps))

    dof_values = np.array([
        poly(d.reference_point) for d in element.dof_descriptors
        if d.component == 0])
    pts = _random_reference_points(rng, tdim, 20)
    vals = element.tabulate(pts)
    if element.value_shape:
        vals = vals[:, :len(dof_values), 0]
    exact = np.array([poly(p) for p in pts])
    recon = vals @ dof_values
    scale = max(1.0, np.abs(exact).max())
    assert np.abs(recon - exact).max() < 1e-12 * scale


def test_gradients_match_finite_differences(element):
    rng = np.random.default_rng(5)
    tdim = element.shape.topological_dimension
    pts = 0.5 * _random_reference_points(rng, tdim, 5) \
        + 0.25 / (tdim + 1)  # keep away from the boundary
    h = 1e-5
    grads = element.tabulate_gradients(pts)
    for t in range(tdim):
        shift = np.zeros(tdim)
        shift[t] = h
        fd = (element.tabulate(pts + shift) - element.tabulate(pts - shift)) / (2 * h)
        assert np.abs(grads[..., t] - fd).max() < 1e-6


def test_dof_ordering_p2_triangle():
    elem = make_element("Lagrange", TRIANGLE, 2)
    points = [d.reference_point for d in elem.dof_descriptors]
    # vertices in vertex order, then edge midpoints in edge order
    assert points == [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0),
                      (0.5, 0.5), (0.0, 0.5), (0.5, 0.0)]
    # the edge (0,1) midpoint is dof 5 and evaluates to one there
    assert elem.evaluate_basis(5, (0.5, 0.0)) == pytest.approx(1.0, abs=1e-14)


def test_dof_ordering_p3_edges():
    elem = make_element("Lagrange", TRIANGLE, 3)
    assert elem.space_dimension == 10
    dofs = elem.dof_descriptors
    # edge dofs run from the lower local vertex to the higher one
    e0 = [d.reference_point for d in dofs if (d.entity_dim, d.entity_index) == (1, 0)]
    assert np.allclose(e0, [(2 / 3, 1 / 3), (1 / 3, 2 / 3)])
    e2 = [d.reference_point for d in dofs if (d.entity_dim, d.entity_index) == (1, 2)]
    assert np.allclose(e2, [(1 / 3, 0.0), (2 / 3, 0.0)])
    interior = [d for d in dofs if d.entity_dim == 2]
    assert len(interior) == 1
    assert np.allclose(interior[0].reference_point, (1 / 3, 1 / 3))


def test_space_dimensions():
    assert make_element("Lagrange", TETRAHEDRON, 3).space_dimension == 20
    assert make_element("Lagrange", TETRAHEDRON, 2).space_dimension == 10
    assert make_element("DG", TRIANGLE, 0).space_dimension == 1
    assert make_element("VectorLagrange", TRIANGLE, 2, 2).space_dimension == 12


def test_p1_triangle_closed_form():
    elem = make_element("Lagrange", TRIANGLE, 1)
    pts = np.array([[0.3, 0.2], [0.1, 0.7]])
    vals = elem.tabulate(pts)
    exact = np.column_stack([1 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    assert np.abs(vals - exact).max() < 1e-14
    grads = elem.tabulate_gradients(pts)
    assert np.allclose(grads[0], [[-1, -1], [1, 0], [0, 1]], atol=1e-14)


def test_vector_element_structure():
    elem = make_element("VectorLagrange", TRIANGLE, 1, 2)
    assert elem.value_shape == (2,)
    assert elem.num_sub_elements == 2
    assert elem.sub_element(0) == elem.sub_element(1)
    assert elem.sub_element(0).signature() == "Lagrange;triangle;1"
    # dofs blocked by component
    comps = [d.component for d in elem.dof_descriptors]
    assert comps == [0, 0, 0, 1, 1, 1]
    v = elem.evaluate_basis(4, (0.4, 0.3))
    assert v == pytest.approx([0.0, 0.4], abs=1e-14)


def test_evaluate_dofs_affine():
    mesh = unit_square_mesh(2)
    cell = cell_view(mesh, 5)
    elem = make_element("Lagrange", TRIANGLE, 2)
    values = elem.evaluate_dofs(lambda x: 2.0 * x[0] - 3.0 * x[1] + 1.0, cell)
    for dof, got in zip(elem.dof_descriptors, values):
        x = cell.coordinates[0] + np.asarray(dof.reference_point) @ (
            cell.coordinates[1:] - cell.coordinates[0])
        assert got == pytest.approx(2.0 * x[0] - 3.0 * x[1] + 1.0, abs=1e-14)

    vec = make_element("VectorLagrange", TRIANGLE, 1, 2)
    values = vec.evaluate_dofs(lambda x: (x[1], -x[0]), cell)
    assert values.shape == (6,)
    with pytest.raises(ElementError, match="components"):
        vec.evaluate_dofs(lambda x: 1.0, cell)
    with pytest.raises(ElementError, match="scalar"):
        elem.evaluate_dofs(lambda x: (1.0, 2.0), cell)


def test_signatures_roundtrip():
    for spec in ALL_ELEMENTS:
        family, shape, degree, length = spec
        elem = make_element(family, shape, degree, vector_length=length)
        assert element_from_signature(elem.signature()) == elem


def test_unsupported_elements():
    with pytest.raises(ElementError):
        make_element("Lagrange", TRIANGLE, 4)
    with pytest.raises(ElementError):
        make_element("Lagrange", TRIANGLE, 0)
    with pytest.raises(ElementError):
        make_element("DG", TRIANGLE, 1)
    with pytest.raises(ElementError):
        make_element("Hermite", TRIANGLE, 3)
    with pytest.raises(ElementError):
        element_from_signature("Lagrange;triangle")
