"""Dense element tensor kernels.

A kernel turns one cell's vertex coordinates (for facet integrals,
also which facet) and the local coefficient values into the dense
element tensor.  Two strategies produce the same numbers: pointwise
quadrature of the lowered integrand, and a contraction of a
precomputed reference tensor with a small per-cell geometry tensor,
which hoists everything geometry independent out of the mesh loop.
The contraction path needs a polynomial integrand and covers cell
integrals; facet integrals always go through quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .formlang.analysis import FormAnalysisError, integrand_polynomial_degree
from .formlang.lowering import Terminal, expand_monomials, lower_integrand
from .formlang.nodes import Add, Mul, Neg, Number, Pow, Sub
from .quadrature import facet_quadrature, quadrature_rule

__all__ = [
    "AffineMap", "affine_map", "facet_scale", "default_quadrature_degree",
    "QuadratureCellKernel", "QuadratureExteriorFacetKernel",
    "QuadratureInteriorFacetKernel", "TensorContractionKernel",
    "make_kernel", "compile_kernels",
]


# -- geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    """The map x = origin + J xhat from the reference cell."""

    origin: np.ndarray
    jacobian: np.ndarray
    inverse: np.ndarray
    det: float  # signed

    @property
    def scale(self):
        """Volume scale factor, abs(det)."""
        return abs(self.det)

    def push(self, ref_points):
        """Map reference points (npts, tdim) to physical coordinates."""
        return np.asarray(ref_points, dtype=float) @ self.jacobian.T \
            + self.origin

    def pull(self, points):
        """Map physical points back to reference coordinates."""
        return (np.asarray(points, dtype=float) - self.origin) \
            @ self.inverse.T


def affine_map(coords):
    """Affine map of the simplex with the given vertex coordinates."""
    coords = np.asarray(coords, dtype=float)
    jac = (coords[1:] - coords[0]).T
    if jac.shape[0] != jac.shape[1]:
        raise ValueError(
            f"cell with {coords.shape[0]} vertices embedded in "
            f"{jac.shape[0]} dimensions has no square Jacobian")
    det = float(np.linalg.det(jac))
    if det == 0.0:
        raise ValueError("degenerate cell: affine map is singular")
    return AffineMap(coords[0], jac, np.linalg.inv(jac), det)


def facet_scale(cell_map, shape, local_facet):
    """Measure of a physical facet relative to its reference domain.

    Multiplying a reference facet quadrature weight by this turns it
    into a physical surface weight.  Facets of intervals are points
    and scale by one.
    """
    vertices = shape.facet_local_vertices(local_facet)
    if len(vertices) == 1:
        return 1.0
    ref = shape.reference_vertices
    spans = ref[list(vertices[1:])] - ref[vertices[0]]
    tangents = spans @ cell_map.jacobian.T
    gram = tangents @ tangents.T
    return float(np.sqrt(abs(np.linalg.det(gram))))


def default_quadrature_degree(terms, descriptor):
    """Rule degree for a set of integrand terms.

    Polynomial integrands get their exact degree.  Anything else
    (fractional powers) falls back on a generous default tied to the
    highest element degree in the form.
    """
    degree = integrand_polynomial_degree(terms, descriptor)
    if degree is not None:
        return degree
    top = max(e.degree for e in
              descriptor.argument_elements + descriptor.coefficient_elements)
    return 2 * top + 3


# -- quadrature kernels -------------------------------------------------------

class _Tabulation:
    """Basis values and reference gradients of one element at fixed points."""

    def __init__(self, element, points):
        self.space_dimension = element.space_dimension
        self.vector = element.value_shape != ()
        self.values = element.tabulate(points)
        self.gradients = element.tabulate_gradients(points)

    def terminal(self, t, inverse):
        """Values (npts, n) of the basis functions seen by one terminal."""
        if t.derivative is None:
            if self.vector:
                return self.values[:, :, t.component]
            return self.values
        grads = self.gradients
        if self.vector:
            grads = grads[:, :, t.component, :]
        return grads @ inverse[:, t.derivative]


def _eval_tree(tree, terminal_values):
    if isinstance(tree, Number):
        return tree.value
    if isinstance(tree, Terminal):
        return terminal_values(tree)
    if isinstance(tree, Add):
        return _eval_tree(tree.a, terminal_values) \
            + _eval_tree(tree.b, terminal_values)
    if isinstance(tree, Sub):
        return _eval_tree(tree.a, terminal_values) \
            - _eval_tree(tree.b, terminal_values)
    if isinstance(tree, Mul):
        return _eval_tree(tree.a, terminal_values) \
            * _eval_tree(tree.b, terminal_values)
    if isinstance(tree, Neg):
        return -_eval_tree(tree.a, terminal_values)
    if isinstance(tree, Pow):
        return np.power(_eval_tree(tree.base, terminal_values), tree.exponent)
    raise FormAnalysisError(
        f"unexpected node {type(tree).__name__} in lowered tree",
        getattr(tree, "loc", None))


class _QuadratureKernel:
    """Shared plumbing: lowered terms and axis bookkeeping."""

    representation = "quadrature"

    def __init__(self, descriptor, terms, degree):
        self.descriptor = descriptor
        self.rank = descriptor.rank
        self.degree = default_quadrature_degree(terms, descriptor) \
            if degree is None else degree
        self._trees = [lower_integrand(t, descriptor) for t in terms]

    def _axis(self, values, position):
        """Spread basis values (npts, n) onto one argument's tensor axis."""
        shape = [values.shape[0]] + [1] * self.rank
        shape[1 + position] = values.shape[1]
        return values.reshape(shape)

    def _scalars(self, values):
        """Point values (npts,) broadcast over all argument axes."""
        return values.reshape([-1] + [1] * self.rank)

    def _integrate(self, weights, terminal_values):
        A = np.zeros(self.tensor_shape)
        full = (len(weights),) + self.tensor_shape
        for tree in self._trees:
            vals = np.asarray(_eval_tree(tree, terminal_values), dtype=float)
            A += np.tensordot(weights, np.broadcast_to(vals, full), (0, 0))
        return A


class QuadratureCellKernel(_QuadratureKernel):
    kind = "cell"

    def __init__(self, descriptor, terms, degree=None):
        super().__init__(descriptor, terms, degree)
        self.rule = quadrature_rule(descriptor.shape, self.degree)
        self._args = [_Tabulation(e, self.rule.points)
                      for e in descriptor.argument_elements]
        self._coefs = [_Tabulation(e, self.rule.points)
                       for e in descriptor.coefficient_elements]
        self.tensor_shape = tuple(t.space_dimension for t in self._args)

    def __call__(self, coords, coefficients=()):
        cell_map = affine_map(coords)

        def terminal_values(t):
            if t.kind == "argument":
                tab = self._args[t.position]
                return self._axis(tab.terminal(t, cell_map.inverse),
                                  t.position)
            dofs = np.asarray(coefficients[t.position], dtype=float)
            tab = self._coefs[t.position]
            return self._scalars(tab.terminal(t, cell_map.inverse) @ dofs)

        return self._integrate(self.rule.weights * cell_map.scale,
                               terminal_values)


class QuadratureExteriorFacetKernel(_QuadratureKernel):
    kind = "exterior_facet"

    def __init__(self, descriptor, terms, degree=None):
        super().__init__(descriptor, terms, degree)
        self.shape = descriptor.shape
        self._facets = []
        for f in range(self.shape.num_facets):
            points, weights = facet_quadrature(self.shape, f, self.degree)
            self._facets.append((
                weights,
                [_Tabulation(e, points)
                 for e in descriptor.argument_elements],
                [_Tabulation(e, points)
                 for e in descriptor.coefficient_elements],
            ))
        self.tensor_shape = tuple(e.space_dimension
                                  for e in descriptor.argument_elements)

    def __call__(self, coords, local_facet, coefficients=()):
        cell_map = affine_map(coords)
        weights, args, coefs = self._facets[local_facet]

        def terminal_values(t):
            if t.kind == "argument":
                tab = args[t.position]
                return self._axis(tab.terminal(t, cell_map.inverse),
                                  t.position)
            dofs = np.asarray(coefficients[t.position], dtype=float)
            tab = coefs[t.position]
            return self._scalars(tab.terminal(t, cell_map.inverse) @ dofs)

        scale = facet_scale(cell_map, self.shape, local_facet)
        return self._integrate(weights * scale, terminal_values)


class QuadratureInteriorFacetKernel(_QuadratureKernel):
    """Kernel over a pair of cells sharing a facet.

    The element tensor is laid out in blocks: for each argument, the
    dofs of the plus cell come first, then those of the minus cell.
    Quadrature points live on the plus cell's facet; the minus cell
    sees them through its own inverse affine map, so the two sides
    agree on the physical points regardless of how the facet is
    oriented in either cell.
    """

    kind = "interior_facet"

    def __init__(self, descriptor, terms, degree=None):
        super().__init__(descriptor, terms, degree)
        self.shape = descriptor.shape
        self._plus = []
        for f in range(self.shape.num_facets):
            points, weights = facet_quadrature(self.shape, f, self.degree)
            self._plus.append((
                points, weights,
                [_Tabulation(e, points)
                 for e in descriptor.argument_elements],
                [_Tabulation(e, points)
                 for e in descriptor.coefficient_elements],
            ))
        self._sizes = tuple(e.space_dimension
                            for e in descriptor.argument_elements)
        self.tensor_shape = tuple(2 * n for n in self._sizes)

    def __call__(self, coords_plus, coords_minus, local_facet_plus,
                 local_facet_minus, coefficients_plus=(),
                 coefficients_minus=()):
        map_plus = affine_map(coords_plus)
        map_minus = affine_map(coords_minus)
        points, weights, args_plus, coefs_plus = self._plus[local_facet_plus]
        minus_points = map_minus.pull(map_plus.push(points))
        args_minus = [_Tabulation(e, minus_points)
                      for e in self.descriptor.argument_elements]
        coefs_minus = [_Tabulation(e, minus_points)
                       for e in self.descriptor.coefficient_elements]

        def terminal_values(t):
            plus = t.restriction == "+"
            cell_map = map_plus if plus else map_minus
            if t.kind == "coefficient":
                tab = (coefs_plus if plus else coefs_minus)[t.position]
                dofs = (coefficients_plus if plus
                        else coefficients_minus)[t.position]
                values = tab.terminal(t, cell_map.inverse) \
                    @ np.asarray(dofs, dtype=float)
                return self._scalars(values)
            tab = (args_plus if plus else args_minus)[t.position]
            base = tab.terminal(t, cell_map.inverse)
            n = self._sizes[t.position]
            block = np.zeros((base.shape[0], 2 * n))
            offset = 0 if plus else n
            block[:, offset:offset + n] = base
            return self._axis(block, t.position)

        scale = facet_scale(map_plus, self.shape, local_facet_plus)
        return self._integrate(weights * scale, terminal_values)


# -- tensor contraction kernels -------------------------------------------------

_AXIS_LETTERS = "abcdefgh"


@dataclass
class _Monomial:
    """One scaled product of basis factors, precontracted on the
    reference cell.

    reference[b] holds the integral of the factor product with
    reference derivative directions betas[b]; at assembly the slab is
    contracted with the matching products of inverse Jacobian entries
    and with the coefficient dof values.
    """

    scale: float
    reference: np.ndarray     # (nbeta, *axis dims)
    betas: np.ndarray         # (nbeta, nslots) reference directions
    directions: np.ndarray    # (nslots,) physical derivative directions
    coefficient_axes: tuple   # coefficient position per trailing axis


class TensorContractionKernel:
    kind = "cell"
    representation = "contraction"

    def __init__(self, descriptor, terms, degree=None):
        self.descriptor = descriptor
        self.rank = descriptor.rank
        if degree is None:
            degree = integrand_polynomial_degree(terms, descriptor)
        if degree is None:
            raise FormAnalysisError(
                "the contraction representation needs a polynomial "
                "integrand; use quadrature for this form")
        self.degree = degree
        shape = descriptor.shape
        self._tdim = shape.topological_dimension
        self.rule = quadrature_rule(shape, degree)
        args = [_Tabulation(e, self.rule.points)
                for e in descriptor.argument_elements]
        coefs = [_Tabulation(e, self.rule.points)
                 for e in descriptor.coefficient_elements]
        self.tensor_shape = tuple(t.space_dimension for t in args)

        self._monomials = []
        for term in terms:
            lowered = lower_integrand(term, descriptor)
            for scale, factors in expand_monomials(lowered):
                self._monomials.append(
                    self._build(scale, factors, args, coefs))

    def _build(self, scale, factors, args, coefs):
        ordered = sorted((f for f in factors if f.kind == "argument"),
                         key=lambda t: t.position)
        ordered += [f for f in factors if f.kind == "coefficient"]
        if len(ordered) > len(_AXIS_LETTERS):
            raise FormAnalysisError(
                f"monomial with {len(ordered)} factors is too large for "
                "the contraction representation")
        slots = [i for i, f in enumerate(ordered) if f.derivative is not None]
        directions = np.array([ordered[i].derivative for i in slots],
                              dtype=int)
        betas = np.array(list(itertools.product(range(self._tdim),
                                                repeat=len(slots))),
                         dtype=int)
        slabs = []
        for beta in betas:
            ref_direction = dict(zip(slots, beta))
            operands, script = [self.rule.weights], ["q"]
            for axis, f in enumerate(ordered):
                tab = (args if f.kind == "argument" else coefs)[f.position]
                if f.derivative is None:
                    vals = tab.values[:, :, f.component] if tab.vector \
                        else tab.values
                else:
                    grads = tab.gradients[:, :, f.component, :] if tab.vector \
                        else tab.gradients
                    vals = grads[:, :, ref_direction[axis]]
                operands.append(vals)
                script.append("q" + _AXIS_LETTERS[axis])
            out = _AXIS_LETTERS[:len(ordered)]
            slabs.append(np.einsum(",".join(script) + "->" + out, *operands))
        return _Monomial(
            scale=scale,
            reference=np.stack(slabs),
            betas=betas,
            directions=directions,
            coefficient_axes=tuple(f.position for f in ordered
                                   if f.kind == "coefficient"),
        )

    def __call__(self, coords, coefficients=()):
        cell_map = affine_map(coords)
        inverse = cell_map.inverse
        A = np.zeros(self.tensor_shape)
        for mono in self._monomials:
            geometry = mono.scale * cell_map.scale * np.prod(
                inverse[mono.betas, mono.directions], axis=1)
            T = np.tensordot(geometry, mono.reference, (0, 0))
            for position in reversed(mono.coefficient_axes):
                T = np.tensordot(T, np.asarray(coefficients[position],
                                               dtype=float),
                                 (T.ndim - 1, 0))
            A = A + T
        return A


# -- factory ------------------------------------------------------------------

_QUADRATURE_KERNELS = {
    "cell": QuadratureCellKernel,
    "exterior_facet": QuadratureExteriorFacetKernel,
    "interior_facet": QuadratureInteriorFacetKernel,
}


def make_kernel(descriptor, kind, terms, representation="auto", degree=None):
    """Build the kernel for one integral of a form.

    representation "auto" picks the contraction path for polynomial
    cell integrands and quadrature for everything else.
    """
    if kind not in _QUADRATURE_KERNELS:
        raise ValueError(f"unknown integral kind {kind!r}")
    if representation == "auto":
        polynomial = integrand_polynomial_degree(terms, descriptor) is not None
        representation = "contraction" if kind == "cell" and polynomial \
            else "quadrature"
    if representation == "quadrature":
        return _QUADRATURE_KERNELS[kind](descriptor, terms, degree)
    if representation == "contraction":
        if kind != "cell":
            raise ValueError(
                "the contraction representation covers cell integrals only")
        return TensorContractionKernel(descriptor, terms, degree)
    raise ValueError(f"unknown representation {representation!r}; expected "
                     "'auto', 'quadrature' or 'contraction'")


def compile_kernels(descriptor, representation="auto", degree=None):
    """Kernels for every integral of a form, keyed by (kind, subdomain)."""
    kernels = {}
    for kind in ("cell", "exterior_facet", "interior_facet"):
        for subdomain, terms in descriptor.integrals(kind):
            kernels[kind, subdomain] = make_kernel(
                descriptor, kind, terms, representation, degree)
    return kernels
