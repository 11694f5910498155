"""Command line front end.

Subcommands: mesh (generate unit meshes), compile (inspect a form
file), assemble (form + mesh + coefficients to a matrix, vector, or
scalar), solve-poisson (Dirichlet demo solve), convergence (refinement
study of the manufactured Poisson problem), selfcheck (element and
quadrature sanity suites).

Exit codes: 0 success, 1 usage error, 2 bad input (files, form
sources, coefficient specs), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import itertools
import math
import os
import sys

import numpy as np

from .assembler import (AssemblyError, DiscreteField, apply_dirichlet,
                        as_coefficient_source, assemble, boundary_dofs,
                        build_job, interpolate)
from .dofmap import DofMapError, init_dofmap
from .element import ElementError, make_element
from .formfiles import builtin_form_names, builtin_form_source
from .formlang import (FormAnalysisError, FormError, analyze,
                       integrand_polynomial_degree, parse_forms)
from .kernels import make_kernel
from .linalg import (ConvergenceError, LinalgError, cg_solve,
                     read_vector_text, write_matrix_market,
                     write_vector_text)
from .mesh import (MeshError, format_mesh, read_mesh, reference_shape,
                   unit_cube_mesh, unit_interval_mesh, unit_square_mesh,
                   write_mesh)
from .quadrature import quadrature_rule

__all__ = ["main"]


class UsageError(Exception):
    pass


class SpecError(ValueError):
    """A coefficient or boundary value spec that cannot be used."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- coefficient specs -----------------------------------------------------------

_FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _validate_expression(node, text):
    """Whitelist walk; returns the largest coordinate index used."""
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        return max(_validate_expression(node.left, text),
                   _validate_expression(node.right, text))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op,
                                                    (ast.UAdd, ast.USub)):
        return _validate_expression(node.operand, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return -1
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return -1
        raise SpecError(f"expression {text!r}: unknown name {node.id!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) \
                or node.func.id not in _FUNCTIONS:
            raise SpecError(f"expression {text!r}: only "
                            f"{sorted(_FUNCTIONS)} may be called")
        if len(node.args) != 1 or node.keywords:
            raise SpecError(f"expression {text!r}: {node.func.id} takes "
                            f"one argument")
        return _validate_expression(node.args[0], text)
    if isinstance(node, ast.Subscript):
        index = node.slice
        if isinstance(node.value, ast.Name) and node.value.id == "x" \
                and isinstance(index, ast.Constant) \
                and isinstance(index.value, int) and 0 <= index.value <= 2:
            return index.value
        raise SpecError(f"expression {text!r}: only x[0], x[1], x[2] "
                        f"may be indexed")
    raise SpecError(f"expression {text!r}: "
                    f"{type(node).__name__} is not allowed")


def parse_expression(text):
    """Compile the expr: mini language to a callable of the point.

    Allowed: x[0] x[1] x[2], numbers, pi, sin cos exp, + - * / ^,
    unary minus, parentheses.  Returns (function, highest coordinate
    index used).
    """
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"cannot parse expression {text!r}: "
                        f"{exc.msg}") from None
    max_index = _validate_expression(tree.body, text)
    code = compile(tree, "<coefficient expression>", "eval")
    static = dict(_FUNCTIONS, pi=math.pi)

    def evaluate(x):
        return eval(code, {"__builtins__": {}}, dict(static, x=x))

    return evaluate, max_index


def _split_spec(text):
    kind, sep, payload = text.partition(":")
    if not sep or kind not in ("const", "expr", "field"):
        raise SpecError(f"coefficient spec must look like const:<v>, "
                        f"expr:<formula> or field:<path>, got {text!r}")
    return kind, payload


def bind_coefficient(spec, element, mesh):
    """Turn one spec string into a coefficient source for an element."""
    kind, payload = _split_spec(spec)
    if kind == "const":
        try:
            values = [float(p) for p in payload.split(",")]
        except ValueError:
            raise SpecError(f"bad constant {payload!r}") from None
        if element.value_size == 1:
            if len(values) != 1:
                raise SpecError(f"scalar coefficient got {len(values)} "
                                f"components")
            return as_coefficient_source(values[0])
        if len(values) != element.value_size:
            raise SpecError(f"coefficient needs {element.value_size} "
                            f"components, got {len(values)}")
        return as_coefficient_source(tuple(values))
    if kind == "expr":
        if element.value_size != 1:
            raise SpecError("expr: yields a scalar; use const:v1,v2 "
                            "for vector coefficients")
        func, max_index = parse_expression(payload)
        if max_index >= mesh.geometric_dimension:
            raise SpecError(f"expression uses x[{max_index}] but the mesh "
                            f"is {mesh.geometric_dimension}-dimensional")
        return as_coefficient_source(func)
    vector = read_vector_text(payload)
    return DiscreteField(vector, init_dofmap(element, mesh.dimensions()))


# -- shared plumbing -------------------------------------------------------------

def _read_form_file(ref):
    """Contents of a form file path, or of a built-in form by name."""
    if os.path.exists(ref):
        with open(ref) as handle:
            return handle.read()
    name = ref[:-4] if ref.endswith(".frm") else ref
    if name in builtin_form_names():
        return builtin_form_source(name)
    raise SpecError(f"no form file {ref!r} (and no built-in of that name; "
                    f"built-ins: {', '.join(builtin_form_names())})")


def _pick_form(formfile, wanted, ref):
    names = [name for name, _ in formfile.forms]
    if wanted is None:
        if len(names) == 1:
            return names[0]
        raise UsageError(f"{ref} defines {', '.join(names)}; "
                         f"pick one with --form")
    if wanted not in names:
        raise SpecError(f"{ref} defines no form named {wanted!r} "
                        f"(has: {', '.join(names)})")
    return wanted


def _bound_sources(descriptor, specs, mesh):
    elements = dict(zip(descriptor.coefficient_names,
                        descriptor.coefficient_elements))
    sources = {}
    for item in specs:
        name, sep, spec = item.partition("=")
        if not sep:
            raise UsageError(f"coefficient binding must look like "
                             f"name=spec, got {item!r}")
        if name not in elements:
            raise SpecError(f"form {descriptor.name!r} has no coefficient "
                            f"named {name!r}")
        sources[name] = bind_coefficient(spec, elements[name], mesh)
    return sources


_POISSON_SOURCE = """\
element = FiniteElement("Lagrange", "{shape}", {degree})

v = TestFunction(element)
u = TrialFunction(element)
f = Function(element)

a = dot(grad(v), grad(u))*dx
L = v*f*dx
"""


def _poisson_descriptors(shape_name, degree):
    source = _POISSON_SOURCE.format(shape=shape_name, degree=degree)
    formfile = parse_forms(source)
    return analyze(formfile, "a"), analyze(formfile, "L")


# -- commands --------------------------------------------------------------------

_UNIT_MESHES = {"unit-interval": unit_interval_mesh,
                "unit-square": unit_square_mesh,
                "unit-cube": unit_cube_mesh}


def cmd_mesh(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    mesh = _UNIT_MESHES[args.kind](args.n)
    if args.out is None:
        sys.stdout.write(format_mesh(mesh))
    else:
        write_mesh(mesh, args.out)
    return 0


_KIND_LABELS = (("cell", "cell integral"),
                ("exterior_facet", "exterior facet integral"),
                ("interior_facet", "interior facet integral"))


def cmd_compile(args):
    formfile = parse_forms(_read_form_file(args.form_file))
    names = [name for name, _ in formfile.forms]
    if args.form is not None:
        names = [_pick_form(formfile, args.form, args.form_file)]
    for name in names:
        descriptor = analyze(formfile, name)
        clauses = [f"form {name}: rank {descriptor.rank}",
                   f"coefficients {descriptor.num_coefficients}"]
        for kind, label in _KIND_LABELS:
            for subdomain, terms in descriptor.integrals(kind):
                clauses.append(f"{label} (subdomain {subdomain})")
                clauses.append("representation: "
                               + _representation_text(descriptor, kind,
                                                      terms, args))
        print(", ".join(clauses))
        for role, group in (("argument", "argument"),
                            ("coefficient", "coefficient")):
            names_attr = getattr(descriptor, f"{group}_names")
            elements = getattr(descriptor, f"{group}_elements")
            for fname, element in zip(names_attr, elements):
                print(f"  {role} {fname}: {_describe(element)}")
    return 0


def _describe(element):
    text = f"{element.family} {element.shape.name} degree {element.degree}"
    if element.value_size > 1:
        text += f", {element.value_size} components"
    return text


def _representation_text(descriptor, kind, terms, args):
    kernel = make_kernel(descriptor, kind, terms, args.representation,
                         args.quadrature_degree)
    if kernel.representation == "contraction":
        return "contraction"
    if integrand_polynomial_degree(terms, descriptor) is None:
        return "quadrature (non-polynomial)"
    return f"quadrature (degree {kernel.degree})"


def cmd_assemble(args):
    formfile = parse_forms(_read_form_file(args.form_file))
    name = _pick_form(formfile, args.form, args.form_file)
    descriptor = analyze(formfile, name)
    mesh = read_mesh(args.mesh)
    sources = _bound_sources(descriptor, args.coefficient, mesh)
    job = build_job(descriptor, mesh, sources,
                    representation=args.representation,
                    quadrature_degree=args.quadrature_degree)
    tensor = assemble(job)
    if descriptor.rank == 0:
        print(f"{float(tensor):.17g}")
        return 0
    if args.out is None:
        raise UsageError(f"rank {descriptor.rank} result needs --out")
    if descriptor.rank == 1:
        write_vector_text(tensor, args.out)
    else:
        write_matrix_market(tensor, args.out)
    return 0


def _dirichlet_values(spec, dofmap, mesh, dofs):
    """Prescribed values at the given global dofs."""
    kind, payload = _split_spec(spec)
    if kind == "const":
        try:
            return np.full(len(dofs), float(payload))
        except ValueError:
            raise SpecError(f"bad constant {payload!r}") from None
    if kind == "expr":
        func, max_index = parse_expression(payload)
        if max_index >= mesh.geometric_dimension:
            raise SpecError(f"expression uses x[{max_index}] but the mesh "
                            f"is {mesh.geometric_dimension}-dimensional")
        return interpolate(func, dofmap, mesh)[dofs]
    vector = read_vector_text(payload)
    if vector.shape != (dofmap.global_dimension,):
        raise SpecError(f"boundary field has {len(vector)} values, the "
                        f"space has {dofmap.global_dimension} dofs")
    return vector[dofs]


def _split_marker_prefix(spec):
    head, sep, rest = spec.partition("=")
    if sep and head.isdigit():
        return int(head), rest
    return None, spec


def cmd_solve_poisson(args):
    mesh = read_mesh(args.mesh)
    bilinear, linear = _poisson_descriptors(mesh.shape.name, args.degree)
    f_source = bind_coefficient(args.f, linear.coefficient_elements[0], mesh)
    matrix = assemble(build_job(bilinear, mesh))
    rhs = assemble(build_job(linear, mesh, {"f": f_source}))
    dofmap = init_dofmap(bilinear.argument_elements[0], mesh.dimensions())

    constraints = []
    for item in args.g:
        marker, spec = _split_marker_prefix(item)
        if marker is None:
            marker = args.marker
        dofs = boundary_dofs(dofmap, mesh, marker)
        constraints.append((dofs, _dirichlet_values(spec, dofmap, mesh,
                                                    dofs)))
    all_dofs = np.concatenate([c[0] for c in constraints])
    all_values = np.concatenate([c[1] for c in constraints])
    seed = apply_dirichlet(matrix, rhs, all_dofs, all_values)
    x = cg_solve(matrix, rhs.array, tol=args.tol, x0=seed)
    write_vector_text(x, args.out)
    return 0


_EXACT_SINE = "sin(pi*x[0])*sin(pi*x[1])"
_SINE_SOURCE = "2*pi^2*sin(pi*x[0])*sin(pi*x[1])"

_ERROR_SOURCE = """\
fine = FiniteElement("Lagrange", "triangle", {fine})
coarse = FiniteElement("Lagrange", "triangle", {coarse})

u = Function(fine)
uh = Function(coarse)

l2 = (u - uh)**2*dx
h1 = inner(grad(u - uh), grad(u - uh))*dx
"""


def _solve_manufactured(mesh, degree, tol=1e-10):
    bilinear, linear = _poisson_descriptors("triangle", degree)
    f, _ = parse_expression(_SINE_SOURCE)
    matrix = assemble(build_job(bilinear, mesh))
    rhs = assemble(build_job(linear, mesh, {"f": f}))
    dofmap = init_dofmap(bilinear.argument_elements[0], mesh.dimensions())
    dofs = boundary_dofs(dofmap, mesh)
    seed = apply_dirichlet(matrix, rhs, dofs, np.zeros(len(dofs)))
    return cg_solve(matrix, rhs.array, tol=tol, x0=seed), dofmap


def _solution_errors(mesh, degree, solution, dofmap):
    """L2 and H1-seminorm errors against the interpolated exact sine."""
    formfile = parse_forms(_ERROR_SOURCE.format(fine=degree + 1,
                                                coarse=degree))
    exact, _ = parse_expression(_EXACT_SINE)
    fine_map = init_dofmap(make_element("Lagrange", "triangle", degree + 1),
                           mesh.dimensions())
    sources = {"u": DiscreteField(interpolate(exact, fine_map, mesh),
                                  fine_map),
               "uh": DiscreteField(solution, dofmap)}
    out = []
    for name in ("l2", "h1"):
        descriptor = analyze(formfile, name)
        value = assemble(build_job(descriptor, mesh, sources,
                                   quadrature_degree=2 * degree + 3))
        out.append(math.sqrt(max(float(value), 0.0)))
    return out


def cmd_convergence(args):
    if args.levels < 3:
        raise UsageError("--levels must be at least 3")
    rows = []
    for level in range(args.levels):
        n = 8 << level
        mesh = unit_square_mesh(n)
        solution, dofmap = _solve_manufactured(mesh, args.degree)
        l2, h1 = _solution_errors(mesh, args.degree, solution, dofmap)
        rows.append((n, 1.0 / n, l2, h1))

    print("n\th\tL2_error\tL2_rate\tH1_error\tH1_rate")
    for i, (n, h, l2, h1) in enumerate(rows):
        if i == 0:
            rates = ("-", "-")
        else:
            rates = (f"{math.log2(rows[i - 1][2] / l2):.3f}",
                     f"{math.log2(rows[i - 1][3] / h1):.3f}")
        print(f"{n}\t{h:.6e}\t{l2:.6e}\t{rates[0]}\t{h1:.6e}\t{rates[1]}")

    if args.plot is not None:
        _plot_convergence(rows, args.degree, args.plot)
    return 0


def _plot_convergence(rows, degree, path):
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot

    h = [row[1] for row in rows]
    figure, axes = pyplot.subplots(figsize=(5.0, 4.0))
    axes.loglog(h, [row[2] for row in rows], "o-", label="L2 error")
    axes.loglog(h, [row[3] for row in rows], "s-", label="H1 error")
    for slope, style in ((degree + 1, "--"), (degree, ":")):
        scale = rows[0][2] / h[0] ** slope
        axes.loglog(h, [scale * x ** slope for x in h], style,
                    color="gray", label=f"slope {slope}")
    axes.set_xlabel("h")
    axes.set_ylabel("error")
    axes.legend()
    axes.grid(True, which="both", alpha=0.3)
    figure.tight_layout()
    figure.savefig(path, dpi=150)
    pyplot.close(figure)


_CHECK_SHAPES = ("interval", "triangle", "tetrahedron")


def _nodal_duality_check():
    """Basis functions against their own dofs: tabulating at the dof
    points must give the identity pattern."""
    worst, count = 0.0, 0
    catalogue = [("Lagrange", shape, degree)
                 for shape in _CHECK_SHAPES for degree in (1, 2, 3)]
    catalogue += [("DiscontinuousLagrange", shape, 0)
                  for shape in _CHECK_SHAPES]
    catalogue += [("VectorLagrange", shape, degree)
                  for shape in ("triangle", "tetrahedron")
                  for degree in (1, 2, 3)]
    for family, shape, degree in catalogue:
        element = make_element(family, shape, degree)
        points = np.array([d.reference_point
                           for d in element.dof_descriptors])
        values = element.tabulate(points)
        n = element.space_dimension
        if element.value_size == 1:
            applied = values
        else:
            # dof p reads one component of the value at its point
            comps = np.array([d.component for d in element.dof_descriptors])
            applied = values[np.arange(n), :, comps]
        worst = max(worst, float(np.max(np.abs(applied - np.eye(n)))))
        count += 1
    return count, worst


def _quadrature_exactness_check():
    """Cell rules against the closed-form simplex monomial integrals."""
    worst, count = 0.0, 0
    for name in _CHECK_SHAPES:
        for degree in range(7):
            rule = quadrature_rule(reference_shape(name), degree)
            tdim = rule.points.shape[1]
            for exps in itertools.product(range(degree + 1), repeat=tdim):
                if sum(exps) > degree:
                    continue
                approx = float(rule.weights
                               @ np.prod(rule.points ** exps, axis=1))
                numer = 1
                for a in exps:
                    numer *= math.factorial(a)
                exact = numer / math.factorial(sum(exps) + tdim)
                worst = max(worst, abs(approx - exact))
            count += 1
    return count, worst


def cmd_selfcheck(args):
    failed = False
    for label, check in (("nodal duality", _nodal_duality_check),
                         ("quadrature exactness",
                          _quadrature_exactness_check)):
        count, worst = check()
        verdict = "pass" if worst <= 1e-12 else "fail"
        failed = failed or verdict == "fail"
        print(f"{label}: {count} checks, max deviation {worst:.1e}: "
              f"{verdict}")
    return 3 if failed else 0


# -- argument parsing ------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="femform",
                     description="assemble variational forms on "
                                 "simplicial meshes")
    commands = parser.add_subparsers(dest="command", required=True)

    mesh = commands.add_parser("mesh", help="generate a unit mesh")
    mesh.add_argument("kind", choices=sorted(_UNIT_MESHES))
    mesh.add_argument("--n", type=int, required=True,
                      help="subdivisions per direction")
    mesh.add_argument("--out", help="output path (default: stdout)")
    mesh.set_defaults(run=cmd_mesh)

    compile_ = commands.add_parser("compile",
                                   help="inspect a form file")
    compile_.add_argument("form_file",
                          help="form file path or built-in name")
    compile_.add_argument("--form", help="only this form")
    compile_.add_argument("--representation", default="auto",
                          choices=("auto", "contraction", "quadrature"))
    compile_.add_argument("--quadrature-degree", type=int, default=None)
    compile_.set_defaults(run=cmd_compile)

    assemble_ = commands.add_parser("assemble",
                                    help="assemble a form over a mesh")
    assemble_.add_argument("form_file")
    assemble_.add_argument("--form", default=None)
    assemble_.add_argument("--mesh", required=True, help="mesh file")
    assemble_.add_argument("-c", "--coefficient", action="append",
                           default=[], metavar="NAME=SPEC",
                           help="bind a coefficient (const:v | "
                                "expr:formula | field:path)")
    assemble_.add_argument("--representation", default="auto",
                           choices=("auto", "contraction", "quadrature"))
    assemble_.add_argument("--quadrature-degree", type=int, default=None)
    assemble_.add_argument("--out", default=None,
                           help="matrix or vector output path")
    assemble_.set_defaults(run=cmd_assemble)

    solve = commands.add_parser("solve-poisson",
                                help="solve -Δu = f with Dirichlet data")
    solve.add_argument("--mesh", required=True)
    solve.add_argument("--degree", type=int, default=1, choices=(1, 2))
    solve.add_argument("--f", required=True, metavar="SPEC",
                       help="source term spec")
    solve.add_argument("--g", required=True, action="append",
                       metavar="[MARKER=]SPEC",
                       help="Dirichlet value; prefix with a facet marker "
                            "to constrain only that part")
    solve.add_argument("--marker", type=int, default=None,
                       help="apply unprefixed --g only on facets with "
                            "this marker")
    solve.add_argument("--tol", type=float, default=1e-10)
    solve.add_argument("--out", required=True, help="solution dof vector")
    solve.set_defaults(run=cmd_solve_poisson)

    conv = commands.add_parser("convergence",
                               help="refinement study for the "
                                    "manufactured Poisson problem")
    conv.add_argument("--degree", type=int, default=1, choices=(1, 2))
    conv.add_argument("--levels", type=int, default=4,
                      help="refinements, n = 8, 16, ... (at least 3)")
    conv.add_argument("--plot", default=None, metavar="PATH",
                      help="also draw the error curves to this file")
    conv.set_defaults(run=cmd_convergence)

    check = commands.add_parser("selfcheck",
                                help="run the built-in sanity suites")
    check.set_defaults(run=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormError, FormAnalysisError, MeshError, ElementError,
            DofMapError, AssemblyError, LinalgError, SpecError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
