"""Reference finite elements.

An element couples a reference shape with a polynomial space and a
set of point-evaluation functionals (the dofs).  The nodal basis is
computed once at construction by inverting the Vandermonde matrix of
the monomial basis at the dof points, so evaluate_basis(i, p_j) is
delta_ij up to roundoff.

Supported families:

* Lagrange, degree 1 to 3, on interval / triangle / tetrahedron
* DiscontinuousLagrange, degree 0 (one dof at the barycenter)
* VectorLagrange: d copies of a scalar Lagrange element, dofs blocked
  by component

Dofs are ordered by the entity they are attached to: vertices first
(in local vertex order), then edges, then faces, then the interior.
Dofs on an edge are ordered from the edge's lower local vertex to the
higher one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .mesh import reference_shape


class ElementError(ValueError):
    """Unsupported element or invalid element input."""


@dataclass(frozen=True)
class DofDescriptor:
    """A point-evaluation dof.

    entity_dim / entity_index name the local mesh entity the dof is
    attached to, sub_index its position within that entity's dof block,
    reference_point where on the reference cell the evaluation happens,
    and component which value component is read (vector elements).
    """

    entity_dim: int
    entity_index: int
    sub_index: int
    reference_point: tuple
    component: int = 0


class FiniteElement:
    """Scalar or vector element on a reference simplex.

    Use :func:`make_element` rather than constructing directly.
    """

    def __init__(self, family, shape, degree, coefficients, exponents,
                 dof_descriptors, sub=None, num_copies=1):
        self.family = family
        self.shape = shape
        self.degree = degree
        self._coefficients = coefficients    # (ndof, nmono), scalar only
        self._exponents = exponents          # (nmono, tdim), scalar only
        self.dof_descriptors = tuple(dof_descriptors)
        self._sub = sub
        self._num_copies = num_copies

    # -- structure ---------------------------------------------------------

    @property
    def value_shape(self):
        return () if self._sub is None else (self._num_copies,)

    @property
    def value_size(self):
        return 1 if self._sub is None else self._num_copies

    @property
    def space_dimension(self):
        return len(self.dof_descriptors)

    @property
    def num_sub_elements(self):
        return self._num_copies if self._sub is not None else 0

    def sub_element(self, i):
        if self._sub is None:
            raise ElementError("scalar element has no sub elements")
        if not 0 <= i < self._num_copies:
            raise ElementError(f"sub element index {i} out of range")
        return self._sub

    def signature(self):
        s = f"{self.family};{self.shape.name};{self.degree}"
        if self._sub is not None:
            s += f";{self._num_copies}"
        return s

    def __eq__(self, other):
        return isinstance(other, FiniteElement) and self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())

    def __repr__(self):
        return f"FiniteElement({self.signature()!r})"

    # -- tabulation --------------------------------------------------------

    def _monomials(self, points):
        # points (npts, tdim) -> (npts, nmono)
        return np.prod(points[:, None, :] ** self._exponents[None, :, :], axis=2)

    def _monomial_gradients(self, points):
        npts = points.shape[0]
        nmono, tdim = self._exponents.shape
        out = np.zeros((npts, nmono, tdim))
        for t in range(tdim):
            exps = self._exponents.copy()
            fac = exps[:, t].astype(float)
            exps[:, t] = np.maximum(exps[:, t] - 1, 0)
            out[:, :, t] = fac * np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
        return out

    def tabulate(self, points):
        """Basis values at reference points.

        Returns (npts, ndof) for scalar elements and (npts, ndof, m)
        for vector elements.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._sub is None:
            return self._monomials(points) @ self._coefficients.T
        sub_vals = self._sub.tabulate(points)
        npts, ns = sub_vals.shape
        m = self._num_copies
        out = np.zeros((npts, ns * m, m))
        for c in range(m):
            out[:, c * ns:(c + 1) * ns, c] = sub_vals
        return out

    def tabulate_gradients(self, points):
        """Reference gradients at reference points.

        Returns (npts, ndof, tdim) for scalar elements and
        (npts, ndof, m, tdim) for vector elements.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._sub is None:
            grads = self._monomial_gradients(points)            # (npts, nmono, tdim)
            return np.einsum("nd,pdt->pnt", self._coefficients, grads)
        sub_grads = self._sub.tabulate_gradients(points)
        npts, ns, tdim = sub_grads.shape
        m = self._num_copies
        out = np.zeros((npts, ns * m, m, tdim))
        for c in range(m):
            out[:, c * ns:(c + 1) * ns, c, :] = sub_grads
        return out

    def evaluate_basis(self, i, point):
        """Value of basis function i at one reference point."""
        if not 0 <= i < self.space_dimension:
            raise ElementError(f"basis index {i} out of range")
        vals = self.tabulate(np.asarray(point, dtype=float).reshape(1, -1))
        return vals[0, i] if self._sub is None else vals[0, i, :]

    def evaluate_basis_derivatives(self, i, point):
        """First derivatives of basis function i at one reference point."""
        if not 0 <= i < self.space_dimension:
            raise ElementError(f"basis index {i} out of range")
        grads = self.tabulate_gradients(np.asarray(point, dtype=float).reshape(1, -1))
        return grads[0, i]

    # -- dof evaluation ----------------------------------------------------

    def evaluate_dofs(self, f, cell):
        """Apply all dofs to a physical-space function on one cell.

        f is called with a coordinate array of length gdim and must
        return a scalar (scalar elements) or a sequence of length m
        (vector elements).
        """
        x0 = cell.coordinates[0]
        edges = cell.coordinates[1:] - x0         # (tdim, gdim)
        m = self.value_size
        out = np.empty(self.space_dimension)
        for i, dof in enumerate(self.dof_descriptors):
            x = x0 + np.asarray(dof.reference_point) @ edges
            value = f(x)
            if self._sub is None:
                value = np.asarray(value, dtype=float)
                if value.shape != ():
                    raise ElementError(f"expected a scalar from the coefficient "
                                       f"function, got shape {value.shape}")
                out[i] = float(value)
            else:
                value = np.asarray(value, dtype=float)
                if value.shape != (m,):
                    raise ElementError(f"expected {m} components from the "
                                       f"coefficient function, got shape {value.shape}")
                out[i] = value[dof.component]
        return out


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _lattice_multiindices(tdim, degree):
    """Integer barycentric weights (m_0 .. m_tdim) summing to degree."""
    out = []
    for rest in itertools.product(range(degree + 1), repeat=tdim):
        if sum(rest) <= degree:
            out.append((degree - sum(rest),) + rest)
    return out


def _attach_lattice_point(shape, weights, degree):
    """Map barycentric lattice weights to (entity_dim, entity_index, key).

    The key orders dofs within one entity: along an edge it grows from
    the lower local vertex to the higher one.
    """
    support = tuple(v for v, w in enumerate(weights) if w > 0)
    d = len(support) - 1
    table = shape.entity_local_vertices(d)
    entity = table.index(support)
    key = tuple(weights[v] for v in table[entity][1:])
    return d, entity, key


def _scalar_lagrange(shape, degree):
    # Lattice coordinates rely on the reference vertex layout: vertex 0
    # at the origin, vertex k at the k-th coordinate unit vector.
    tdim = shape.topological_dimension
    lattice = _lattice_multiindices(tdim, degree)

    grouped = {}
    for weights in lattice:
        point = tuple((np.array(weights[1:], dtype=float) / degree))
        d, entity, key = _attach_lattice_point(shape, weights, degree)
        grouped.setdefault((d, entity), []).append((key, point))

    descriptors = []
    for d in range(tdim + 1):
        for entity in range(shape.num_entities(d)):
            block = sorted(grouped.get((d, entity), []))
            for sub, (_, point) in enumerate(block):
                descriptors.append(DofDescriptor(d, entity, sub, point))

    points = np.array([dof.reference_point for dof in descriptors])
    exponents = np.array(sorted(
        (e for e in itertools.product(range(degree + 1), repeat=tdim)
         if sum(e) <= degree),
        key=lambda e: (sum(e), e)), dtype=int).reshape(-1, tdim)
    vander = np.prod(points[:, None, :] ** exponents[None, :, :], axis=2)
    coefficients = np.linalg.inv(vander).T
    return coefficients, exponents, descriptors


def _dg0(shape):
    tdim = shape.topological_dimension
    barycenter = tuple(np.full(tdim, 1.0 / (tdim + 1)))
    descriptors = [DofDescriptor(tdim, 0, 0, barycenter)]
    coefficients = np.ones((1, 1))
    exponents = np.zeros((1, tdim), dtype=int)
    return coefficients, exponents, descriptors


_FAMILY_ALIASES = {
    "Lagrange": "Lagrange", "CG": "Lagrange", "P": "Lagrange",
    "DiscontinuousLagrange": "DiscontinuousLagrange", "DG": "DiscontinuousLagrange",
    "VectorLagrange": "VectorLagrange",
}


def make_element(family, shape, degree, vector_length=None):
    """Construct an element.

    Parameters
    ----------
    family : str
        "Lagrange" (or "CG", "P"), "DiscontinuousLagrange" (or "DG"),
        or "VectorLagrange".
    shape : ReferenceShape or shape name
    degree : int
    vector_length : int, optional
        Number of components; required meaning only with the vector
        family, where it defaults to the shape's dimension.
    """
    if isinstance(shape, str):
        shape = reference_shape(shape)
    try:
        family = _FAMILY_ALIASES[family]
    except KeyError:
        raise ElementError(f"unknown element family {family!r}") from None

    if family == "VectorLagrange" or (vector_length is not None and family == "Lagrange"):
        m = shape.topological_dimension if vector_length is None else int(vector_length)
        if m < 1:
            raise ElementError("vector length must be positive")
        sub = make_element("Lagrange", shape, degree)
        descriptors = []
        for c in range(m):
            for dof in sub.dof_descriptors:
                descriptors.append(DofDescriptor(dof.entity_dim, dof.entity_index,
                                                 dof.sub_index, dof.reference_point, c))
        return FiniteElement("VectorLagrange", shape, degree, None, None,
                             descriptors, sub=sub, num_copies=m)

    if vector_length is not None:
        raise ElementError(f"vector_length is not meaningful for {family}")
    if family == "Lagrange":
        if not 1 <= degree <= 3:
            raise ElementError(f"Lagrange degree {degree} not supported (1 to 3)")
        coeff, exps, descriptors = _scalar_lagrange(shape, degree)
    else:
        if degree != 0:
            raise ElementError("DiscontinuousLagrange supports degree 0 only")
        coeff, exps, descriptors = _dg0(shape)
    return FiniteElement(family, shape, degree, coeff, exps, descriptors)


def element_from_signature(signature):
    """Inverse of FiniteElement.signature()."""
    parts = signature.split(";")
    if len(parts) not in (3, 4):
        raise ElementError(f"malformed element signature {signature!r}")
    family, shape_name = parts[0], parts[1]
    try:
        degree = int(parts[2])
        length = int(parts[3]) if len(parts) == 4 else None
    except ValueError:
        raise ElementError(f"malformed element signature {signature!r}") from None
    return make_element(family, shape_name, degree, vector_length=length)
