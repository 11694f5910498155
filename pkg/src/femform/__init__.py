"""Finite element form assembly.

The package splits along the classic assembly pipeline: meshes with
deterministic entity numbering (mesh), reference elements (element),
local-to-global numbering (dofmap), a small variational form language
(formlang), element tensor kernels (quadrature, kernels), global
tensors and solvers (linalg), and the assembly loop tying them
together (assembler).  The cli module exposes the whole chain as a
command line tool.
"""

from .mesh import (
    INTERVAL, TRIANGLE, TETRAHEDRON, reference_shape,
    Mesh, MeshError, MeshDimensions, CellView,
    build_mesh, cell_view, macro_cell_view,
    unit_interval_mesh, unit_square_mesh, unit_cube_mesh,
    read_mesh, write_mesh, format_mesh,
)
from .element import (
    FiniteElement, ElementError, DofDescriptor,
    make_element, element_from_signature,
)
from .dofmap import DofMap, DofMapError, init_dofmap
from .quadrature import QuadratureRule, quadrature_rule, facet_quadrature
from .formlang import (
    FormError, FormSyntaxError, FormAnalysisError, FormDescriptor,
    parse_forms, analyze, pretty, pretty_file,
)
from .formfiles import builtin_form_names, builtin_form_source, load_form_file
from .kernels import (
    AffineMap, affine_map, facet_scale,
    make_kernel, compile_kernels, default_quadrature_degree,
)
from .linalg import (
    LinalgError, ConvergenceError,
    GlobalScalar, GlobalVector, SparseMatrix, CSRMatrix,
    global_tensor, cg_solve,
    write_matrix_market, read_matrix_market,
    write_vector_text, read_vector_text,
)
from .assembler import (
    AssemblyError, DiscreteField, AnalyticCoefficient,
    as_coefficient_source, interpolate_coefficient, interpolate,
    AssemblyJob, build_job, assemble, assemble_form,
    boundary_dofs, apply_dirichlet,
)

__version__ = "0.1.0"
