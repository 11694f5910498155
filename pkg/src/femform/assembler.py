"""Global assembly.

Three loops, one per integral kind: cells, exterior facets, interior
facets.  Each visit tabulates the local-to-global dof maps, pulls the
coefficient values onto the cell, evaluates the element kernel, and
adds the dense block into the global tensor.  Interior facets work on
the macro cell of the two incident cells; dof indices and coefficient
values are concatenated plus side first, matching the kernel's block
layout.

Element tensor evaluations are independent of each other; only the
adds touch shared state.  The loops here run serially, and determinism
of the result then comes from the triplet buffer's fixed summation
order rather than from visit order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dofmap import init_dofmap
from .kernels import compile_kernels
from .linalg import global_tensor
from .mesh import cell_view

__all__ = [
    "AssemblyError", "DiscreteField", "AnalyticCoefficient",
    "as_coefficient_source", "interpolate_coefficient", "interpolate",
    "AssemblyJob", "build_job", "assemble", "assemble_form",
    "boundary_dofs", "apply_dirichlet",
]


class AssemblyError(ValueError):
    pass


class DiscreteField:
    """A coefficient already living in a finite element space: a global
    dof vector paired with the dof map that indexes it."""

    def __init__(self, vector, dofmap):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (dofmap.global_dimension,):
            raise AssemblyError(
                f"field vector of shape {vector.shape} does not match the "
                f"dof map's global dimension {dofmap.global_dimension}")
        self.vector = vector
        self.dofmap = dofmap

    def local_values(self, element, cell):
        if self.dofmap.element != element:
            raise AssemblyError(
                f"field element {self.dofmap.element.signature()} does not "
                f"match the declared element {element.signature()}")
        return self.vector[self.dofmap.tabulate_dofs(cell)]


class AnalyticCoefficient:
    """A coefficient given as a function of physical coordinates,
    interpolated cell by cell through the element's dofs."""

    def __init__(self, func):
        self.func = func

    def local_values(self, element, cell):
        return element.evaluate_dofs(self.func, cell)


def as_coefficient_source(value):
    """Coerce a convenient value into a coefficient source.

    Accepts a ready source, a callable of the physical coordinate, or
    a constant (scalar or component tuple).
    """
    if isinstance(value, (DiscreteField, AnalyticCoefficient)):
        return value
    if callable(value):
        return AnalyticCoefficient(value)
    if isinstance(value, (int, float)):
        const = float(value)
        return AnalyticCoefficient(lambda x: const)
    if isinstance(value, (tuple, list, np.ndarray)):
        const = np.asarray(value, dtype=float)
        return AnalyticCoefficient(lambda x: const)
    raise AssemblyError(f"cannot use {value!r} as a coefficient")


def interpolate_coefficient(source, element, cell, dofmap=None):
    """Local coefficient values on one cell, in the element's dof order.

    Discrete fields gather from their global vector; anything else is
    interpolated by applying the element's dofs to the function.  A
    bare vector may be passed together with its dofmap.
    """
    if isinstance(source, np.ndarray) and dofmap is not None:
        source = DiscreteField(source, dofmap)
    source = as_coefficient_source(source)
    return source.local_values(element, cell)


def interpolate(func, dofmap, mesh):
    """Global interpolant: the dof vector representing func in the
    dof map's space.  Shared dofs are written more than once; the
    writes agree because point evaluation is single valued."""
    source = as_coefficient_source(func)
    out = np.zeros(dofmap.global_dimension)
    for c in range(mesh.num_cells):
        view = cell_view(mesh, c)
        out[dofmap.tabulate_dofs(view)] = \
            source.local_values(dofmap.element, view)
    return out


@dataclass
class AssemblyJob:
    """Everything one assemble call needs, precompiled."""

    descriptor: object
    kernels: dict                     # (kind, subdomain) -> element kernel
    argument_dofmaps: tuple           # length rank
    coefficient_sources: tuple        # length num_coefficients
    mesh: object
    representation: str = "auto"
    quadrature_degree: int = None

    def __post_init__(self):
        if len(self.argument_dofmaps) != self.descriptor.rank:
            raise AssemblyError(
                f"form of rank {self.descriptor.rank} needs "
                f"{self.descriptor.rank} argument dof maps")
        if len(self.coefficient_sources) != self.descriptor.num_coefficients:
            raise AssemblyError(
                f"form takes {self.descriptor.num_coefficients} "
                f"coefficient(s), got {len(self.coefficient_sources)}")


def build_job(descriptor, mesh, coefficients=(), representation="auto",
              quadrature_degree=None):
    """Compile kernels and dof maps for assembling a form on a mesh.

    coefficients is a sequence aligned with the form's coefficient
    order, or a mapping from coefficient name to source.  Values pass
    through as_coefficient_source.
    """
    if descriptor.argument_elements or descriptor.coefficient_elements:
        if descriptor.shape.name != mesh.shape.name:
            raise AssemblyError(
                f"form is declared on {descriptor.shape.name} cells, "
                f"the mesh has {mesh.shape.name} cells")
    if isinstance(coefficients, dict):
        unknown = set(coefficients) - set(descriptor.coefficient_names)
        if unknown:
            raise AssemblyError(
                f"form {descriptor.name!r} has no coefficient named "
                f"{sorted(unknown)[0]!r}")
        missing = [n for n in descriptor.coefficient_names
                   if n not in coefficients]
        if missing:
            raise AssemblyError(
                f"coefficient {missing[0]!r} of form "
                f"{descriptor.name!r} is unbound")
        coefficients = [coefficients[n] for n in descriptor.coefficient_names]
    sources = tuple(as_coefficient_source(c) for c in coefficients)
    dims = mesh.dimensions()
    dofmaps = tuple(init_dofmap(e, dims) for e in descriptor.argument_elements)
    kernels = compile_kernels(descriptor, representation, quadrature_degree)
    return AssemblyJob(descriptor, kernels, dofmaps, sources, mesh,
                       representation, quadrature_degree)


def _kernel_for(job, kind, marker, declared):
    """The kernel for one marked entity, or None to skip it silently."""
    if marker not in declared:
        return None
    kernel = job.kernels.get((kind, marker))
    if kernel is None:
        raise AssemblyError(
            f"no {kind} kernel for subdomain {marker}, but the form "
            f"declares an integral there")
    return kernel


def _local_coefficients(job, cell):
    elements = job.descriptor.coefficient_elements
    return tuple(source.local_values(element, cell)
                 for source, element in zip(job.coefficient_sources, elements))


def assemble(job):
    """Run the assembly loops and return the global rank-r tensor."""
    descriptor, mesh = job.descriptor, job.mesh
    tensor = global_tensor(tuple(dm.global_dimension
                                 for dm in job.argument_dofmaps))

    if descriptor.cell_integrals:
        declared = {s for s, _ in descriptor.cell_integrals}
        for c in range(mesh.num_cells):
            kernel = _kernel_for(job, "cell", int(mesh.cell_markers[c]),
                                 declared)
            if kernel is None:
                continue
            view = cell_view(mesh, c)
            block = kernel(view.coordinates,
                           coefficients=_local_coefficients(job, view))
            tensor.add(tuple(dm.tabulate_dofs(view)
                             for dm in job.argument_dofmaps), block)

    if descriptor.exterior_facet_integrals:
        declared = {s for s, _ in descriptor.exterior_facet_integrals}
        for pos, rec in enumerate(mesh.exterior_facets):
            kernel = _kernel_for(job, "exterior_facet",
                                 int(mesh.facet_markers[pos]), declared)
            if kernel is None:
                continue
            view = cell_view(mesh, rec.cell)
            block = kernel(view.coordinates, rec.local_facet,
                           coefficients=_local_coefficients(job, view))
            tensor.add(tuple(dm.tabulate_dofs(view)
                             for dm in job.argument_dofmaps), block)

    if descriptor.interior_facet_integrals:
        # interior facets carry no markers; they all belong to subdomain 0
        declared = {s for s, _ in descriptor.interior_facet_integrals}
        for rec in mesh.interior_facets:
            kernel = _kernel_for(job, "interior_facet", 0, declared)
            if kernel is None:
                break
            plus = cell_view(mesh, rec.cell_plus)
            minus = cell_view(mesh, rec.cell_minus)
            block = kernel(
                plus.coordinates, minus.coordinates,
                rec.local_facet_plus, rec.local_facet_minus,
                coefficients_plus=_local_coefficients(job, plus),
                coefficients_minus=_local_coefficients(job, minus))
            indices = tuple(
                np.concatenate([dm.tabulate_dofs(plus),
                                dm.tabulate_dofs(minus)])
                for dm in job.argument_dofmaps)
            tensor.add(indices, block)

    return tensor


def assemble_form(descriptor, mesh, coefficients=(), representation="auto",
                  quadrature_degree=None):
    """build_job and assemble in one call."""
    return assemble(build_job(descriptor, mesh, coefficients,
                              representation, quadrature_degree))


# -- Dirichlet plumbing ----------------------------------------------------------

def boundary_dofs(dofmap, mesh, marker=None):
    """Sorted global dofs on the closure of the exterior facets.

    With a marker, only facets carrying that marker count.
    """
    found = set()
    for pos, rec in enumerate(mesh.exterior_facets):
        if marker is not None and int(mesh.facet_markers[pos]) != marker:
            continue
        view = cell_view(mesh, rec.cell)
        cell_dofs = dofmap.tabulate_dofs(view)
        for i in dofmap.tabulate_facet_dofs(rec.local_facet):
            found.add(int(cell_dofs[i]))
    return np.array(sorted(found), dtype=int)


def apply_dirichlet(matrix, rhs, dofs, values):
    """Constrain matrix rows: row d becomes the unit row, rhs[d] the
    prescribed value.  Plain row replacement, no symmetrization.

    values is a scalar or a sequence aligned with dofs.  Listing a dof
    twice is fine as long as the prescribed values agree to 1e-12.

    Returns a seed vector carrying the prescribed values and zero
    elsewhere.  Passing it to cg_solve as x0 keeps the iteration away
    from the asymmetry the row replacement introduced.
    """
    dofs = np.asarray(dofs, dtype=int)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    prescribed = {}
    for d, v in zip(dofs.tolist(), values.tolist()):
        if d in prescribed and abs(prescribed[d] - v) > 1e-12:
            raise AssemblyError(
                f"dof {d} is constrained to both {prescribed[d]!r} "
                f"and {v!r}")
        prescribed[d] = v
    rows = np.array(sorted(prescribed), dtype=int)
    matrix.replace_rows_with_identity(rows)
    target = rhs.array if hasattr(rhs, "array") else rhs
    seed = np.zeros(matrix.shape[0])
    for d in rows:
        target[d] = prescribed[int(d)]
        seed[d] = prescribed[int(d)]
    return seed
