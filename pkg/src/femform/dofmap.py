"""Local-to-global dof numbering.

The map is computed from mesh entity counts alone.  Dofs are blocked
by component, then by entity dimension:

    index = component * stride
          + entity_offsets[d]
          + entity_index[d][e] * dofs_per_entity[d]
          + sub

where stride is the global dimension of one scalar component.  Two
cells sharing an entity therefore agree on its dofs by construction;
the only subtlety is edges carrying several dofs (cubic elements),
whose sub-indices are flipped on cells that traverse the edge against
its global direction.
"""

from __future__ import annotations

import numpy as np


class DofMapError(ValueError):
    pass


class DofMap:
    """Dof numbering of one element over one mesh's entity counts.

    The init / tabulate split follows a three phase protocol: the map
    is created from mesh dimensions, optionally shown every cell once
    (requires_cell_init, not needed by any built-in element), and then
    tabulated cell by cell.
    """

    def __init__(self, element, mesh_dimensions):
        tdim = element.shape.topological_dimension
        if len(mesh_dimensions.num_entities) != tdim + 1:
            raise DofMapError(f"mesh dimensions have {len(mesh_dimensions.num_entities) - 1}"
                              f"-dimensional cells, element expects {tdim}")
        self.element = element
        self.mesh_dimensions = mesh_dimensions

        scalar_dofs = [d for d in element.dof_descriptors if d.component == 0]
        per_entity = np.zeros(tdim + 1, dtype=int)
        for d in range(tdim + 1):
            on_dim = [x for x in scalar_dofs if x.entity_dim == d]
            count = element.shape.num_entities(d)
            per_entity[d] = len(on_dim) // count if on_dim else 0
            if per_entity[d] * count != len(on_dim):
                raise DofMapError("element dofs are not uniform over entities")

        offsets = np.zeros(tdim + 1, dtype=int)
        total = 0
        for d in range(tdim + 1):
            offsets[d] = total
            total += per_entity[d] * mesh_dimensions.num_entities[d]

        self.dofs_per_entity = tuple(int(x) for x in per_entity)
        self.entity_offsets = tuple(int(x) for x in offsets)
        self.component_stride = total
        ncomp = element.value_size
        self.num_components = ncomp
        self.global_dimension = ncomp * total

    @property
    def requires_cell_init(self):
        """Whether the map must see every cell before tabulation."""
        return False

    def init_cell(self, cell):
        pass

    def init_cell_finalize(self):
        pass

    @property
    def local_dimension(self):
        return self.element.space_dimension

    def tabulate_dofs(self, cell):
        """Global dof indices of one cell, in local dof order."""
        element = self.element
        dpe = self.dofs_per_entity
        offsets = self.entity_offsets
        # shared edges exist only for tdim >= 2; cell-interior dofs never flip
        flip = self._edge_flips(cell) if len(dpe) > 2 and dpe[1] > 1 else None
        out = np.empty(element.space_dimension, dtype=int)
        for i, dof in enumerate(element.dof_descriptors):
            d, e, s = dof.entity_dim, dof.entity_index, dof.sub_index
            if flip is not None and d == 1 and flip[e]:
                s = dpe[1] - 1 - s
            ent = int(cell.entity_indices[d][e])
            out[i] = dof.component * self.component_stride + offsets[d] + ent * dpe[d] + s
        return out

    def _edge_flips(self, cell):
        # edge dofs are globally ordered from the lower global vertex to
        # the higher; flip cells whose local edge runs the other way
        shape = self.element.shape
        verts = cell.entity_indices[0]
        flips = []
        for a, b in shape.entity_local_vertices(1):
            flips.append(int(verts[a]) > int(verts[b]))
        return flips

    def tabulate_facet_dofs(self, local_facet):
        """Local dof indices attached to the closure of one facet."""
        shape = self.element.shape
        facet_verts = set(shape.facet_local_vertices(local_facet))
        out = []
        for i, dof in enumerate(self.element.dof_descriptors):
            entity = shape.entity_local_vertices(dof.entity_dim)[dof.entity_index]
            if set(entity) <= facet_verts:
                out.append(i)
        return tuple(out)

    def sub_dofmap(self, component):
        """Scalar dof map of one component of a vector element."""
        if self.num_components == 1:
            raise DofMapError("scalar dof map has no sub maps")
        if not 0 <= component < self.num_components:
            raise DofMapError(f"component {component} out of range")
        return DofMap(self.element.sub_element(component), self.mesh_dimensions)

    def __repr__(self):
        return (f"DofMap({self.element.signature()!r}, "
                f"global_dimension={self.global_dimension})")


def init_dofmap(element, mesh_dimensions):
    """Build the dof map of an element over given mesh entity counts."""
    return DofMap(element, mesh_dimensions)
