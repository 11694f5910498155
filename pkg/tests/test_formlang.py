"""Form language tests: parsing, analysis, lowering.

The bundled form files under src/femform/forms double as parser
fixtures here.  Descriptor oracles (rank, coefficient order, integral
kinds) and the lowered monomials of the simplest forms are worked out
by hand and frozen.
"""

from collections import Counter

import pytest

from femform.formfiles import (builtin_form_names, builtin_form_source,
                               load_form_file)
from femform.formlang import (FormAnalysisError, FormSyntaxError, Terminal,
                              analyze, expand_monomials,
                              integrand_polynomial_degree, lower_integrand,
                              parse_forms, pretty, pretty_file)

SCALAR_P1 = """\
element = FiniteElement("Lagrange", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
w = Function(element)
"""

VECTOR_P1 = """\
vec = VectorElement("Lagrange", "triangle", 1)
v = TestFunction(vec)
u = TrialFunction(vec)
w = Function(vec)
"""


def analyzed(source, form="a"):
    return analyze(parse_forms(source), form)


def single_cell_terms(descriptor):
    assert len(descriptor.cell_integrals) == 1
    subdomain, terms = descriptor.cell_integrals[0]
    assert subdomain == 0
    return terms


def builtin(name, form):
    return analyzed(builtin_form_source(name), form)


# -- parsing ------------------------------------------------------------------

def test_poisson_source_parses_unmodified():
    ast = parse_forms(builtin_form_source("poisson"))
    assert ast.form_names == ("a", "L")
    assert [f.name for f in ast.functions] == ["v", "u", "f"]
    assert [f.role for f in ast.functions] == ["test", "trial", "coefficient"]
    decl = ast.element("element")
    assert (decl.family, decl.shape_name, decl.degree) == \
        ("Lagrange", "triangle", 1)
    assert not decl.is_vector
    assert pretty(ast.form("a")) == "dot(grad(v), grad(u))*dx"
    assert pretty(ast.form("L")) == "v*f*dx"


def test_index_notation_source_parses_unmodified():
    ast = parse_forms(builtin_form_source("convection"))
    assert ast.form_names == ("a",)
    assert ast.element("vector_element").is_vector
    assert not ast.element("scalar_element").is_vector
    assert pretty(ast.form("a")) == "rho*v[i]*w[j]*u[i].dx(j)*dx"


def test_every_builtin_form_file_round_trips():
    names = builtin_form_names()
    assert "poisson" in names and "convection" in names
    for name in names:
        ast = parse_forms(builtin_form_source(name))
        assert parse_forms(pretty_file(ast)) == ast, name


def test_number_literals_round_trip():
    src = SCALAR_P1 + "a = 2*v*u*dx + 0.5*v*u*dx + 1e-3*v*u*dx\n"
    ast = parse_forms(src)
    assert parse_forms(pretty_file(ast)) == ast


def test_power_of_difference_round_trips():
    src = SCALAR_P1 + "a = (w - u)**2*v*dx\n"
    ast = parse_forms(src)
    assert pretty(ast.form("a")) == "(w - u)**2*v*dx"
    assert parse_forms(pretty_file(ast)) == ast


def test_comments_and_blank_lines_are_skipped():
    src = "# heading\n\n" + SCALAR_P1 + "a = v*u*dx  # mass\n"
    assert analyzed(src).rank == 2


def test_builtin_form_lookup_errors():
    with pytest.raises(KeyError) as err:
        builtin_form_source("missing")
    assert "poisson" in str(err.value)


def test_load_form_file(tmp_path):
    path = tmp_path / "mass.frm"
    path.write_text(SCALAR_P1 + "a = v*u*dx\n", encoding="utf-8")
    assert load_form_file(path).form_names == ("a",)


# -- parse errors -------------------------------------------------------------

def test_dangling_product_names_position_and_expectation():
    with pytest.raises(FormSyntaxError) as err:
        parse_forms(SCALAR_P1 + "a = v*u*\n")
    message = str(err.value)
    assert "(dx, ds, dS)" in message
    assert "end of line" in message
    assert err.value.loc.line == 5
    assert err.value.loc.column == 9


def test_unknown_identifier():
    with pytest.raises(FormSyntaxError, match="unknown identifier 'q'"):
        parse_forms(SCALAR_P1 + "a = v*q*dx\n")


def test_function_from_undeclared_element():
    with pytest.raises(FormSyntaxError, match="unknown element"):
        parse_forms('v = TestFunction(element)\n')


def test_reserved_and_duplicate_names():
    with pytest.raises(FormSyntaxError, match="reserved"):
        parse_forms('dx = FiniteElement("Lagrange", "triangle", 1)\n')
    with pytest.raises(FormSyntaxError, match="already declared"):
        parse_forms(SCALAR_P1 + "v = TrialFunction(element)\n")


def test_exponent_must_be_a_literal():
    with pytest.raises(FormSyntaxError, match="real number literal"):
        parse_forms(SCALAR_P1 + "a = v**u*dx\n")
    # a negative literal is fine
    ast = parse_forms(SCALAR_P1 + "a = (1 + w*w)**-1*v*u*dx\n")
    assert parse_forms(pretty_file(ast)) == ast


def test_forms_cannot_be_referenced():
    with pytest.raises(FormSyntaxError, match="forms cannot be used"):
        parse_forms(SCALAR_P1 + "a = v*u*dx\nb = a*v*dx\n")


def test_index_outside_brackets():
    with pytest.raises(FormSyntaxError, match="outside"):
        parse_forms(VECTOR_P1 + "a = i*dot(v, u)*dx\n")


# -- descriptors --------------------------------------------------------------

def test_arity_catalogue():
    # (file, form) -> (rank, coefficient names)
    catalogue = {
        ("poisson", "a"): (2, ()),
        ("poisson", "L"): (1, ("f",)),
        ("poisson_action", "a"): (1, ("w", "u0")),
        ("divergence", "a"): (2, ()),
        ("convection", "a"): (2, ("w", "rho")),
        ("powerlaw", "F"): (1, ("w", "mu", "rho")),
        ("h1_error", "e"): (0, ("u", "uh")),
        ("weighted_poisson", "a"): (2, ("w",)),
        ("mass", "a"): (2, ()),
        ("dg_jump", "a"): (2, ()),
    }
    for (name, form), (rank, coefficients) in catalogue.items():
        d = builtin(name, form)
        assert d.rank == rank, (name, form)
        assert d.coefficient_names == coefficients, (name, form)


def test_mixed_scalar_vector_arguments():
    d = builtin("divergence", "a")
    assert d.argument_names == ("q", "u")
    assert d.argument_elements[0].value_shape == ()
    assert d.argument_elements[1].value_shape == (2,)
    assert d.shape.name == "triangle"


def test_integral_kinds():
    d = builtin("dg_jump", "a")
    assert d.cell_integrals == ()
    assert d.exterior_facet_integrals == ()
    assert len(d.interior_facet_integrals) == 1


def test_positions():
    d = builtin("convection", "a")
    assert d.position("v") == ("argument", 0)
    assert d.position("u") == ("argument", 1)
    assert d.position("w") == ("coefficient", 0)
    assert d.position("rho") == ("coefficient", 1)
    assert d.element_of("rho").value_shape == ()
    with pytest.raises(KeyError):
        d.position("nope")


def test_descriptors_equal_under_term_reordering():
    one = analyzed(SCALAR_P1 + "a = v*u*dx + dot(grad(v), grad(u))*dx\n")
    two = analyzed(SCALAR_P1 + "a = dot(grad(v), grad(u))*dx + v*u*dx\n")
    assert one == two
    terms = single_cell_terms(one)
    assert [pretty(t) for t in terms] == sorted(pretty(t) for t in terms)


def test_subdomain_ids_split_integrals():
    d = analyzed(SCALAR_P1 + "a = v*u*dx(2) + dot(grad(v), grad(u))*dx\n")
    assert [sub for sub, _ in d.cell_integrals] == [0, 2]
    assert [pretty(t) for t in d.cell_integrals[1][1]] == ["v*u"]


def test_default_subdomain_is_zero():
    one = analyzed(SCALAR_P1 + "a = v*u*dx\n")
    two = analyzed(SCALAR_P1 + "a = v*u*dx(0)\n")
    assert one == two


def test_unknown_form_name_lists_declared():
    with pytest.raises(FormAnalysisError, match="declared: a, L"):
        analyze(parse_forms(builtin_form_source("poisson")), "M")


def test_form_without_functions():
    with pytest.raises(FormAnalysisError, match="uses no functions"):
        analyzed(SCALAR_P1 + "a = 2*dx\n")


def test_at_most_one_test_and_trial():
    two_tests = SCALAR_P1 + "v2 = TestFunction(element)\na = v*v2*dx\n"
    with pytest.raises(FormAnalysisError, match="2 test functions"):
        analyzed(two_tests)
    trial_only = SCALAR_P1 + "a = u*w*dx\n"
    with pytest.raises(FormAnalysisError, match="no test function"):
        analyzed(trial_only)


def test_arguments_must_appear_linearly():
    with pytest.raises(FormAnalysisError, match="linear in 'u'"):
        analyzed(SCALAR_P1 + "a = v*u*u*dx\n")
    with pytest.raises(FormAnalysisError, match="appears under a power"):
        analyzed(SCALAR_P1 + "a = v*u**2*dx\n")


def test_every_term_must_use_every_argument():
    # after distributing, the second branch has no test function in it
    with pytest.raises(FormAnalysisError, match="0 to 1 times"):
        analyzed(SCALAR_P1 + "a = (v + w)*u*dx\n")
    with pytest.raises(FormAnalysisError, match="uses it 0 time"):
        analyzed(SCALAR_P1 + "a = v*u*dx + w*u*dx\n")


def test_unused_functions_do_not_count():
    # u and w are declared but unused, so this is a linear form in v
    d = analyzed(SCALAR_P1 + "a = v*dx\n")
    assert d.rank == 1
    assert d.num_coefficients == 0


# -- shape and index errors ---------------------------------------------------

def test_star_of_two_vectors_suggests_contraction():
    with pytest.raises(FormAnalysisError,
                       match="use dot or inner to contract"):
        analyzed(VECTOR_P1 + "a = v*u*dx\n")


def test_vector_integrand_rejected():
    with pytest.raises(FormAnalysisError, match="not scalar"):
        analyzed(VECTOR_P1 + "a = dot(v, u)*w*dx\n")
    # fixed up with an explicit contraction it passes
    d = analyzed(VECTOR_P1 + "a = dot(v, u)*dot(w, w)*dx\n")
    assert d.rank == 2


def test_div_needs_a_vector():
    with pytest.raises(FormAnalysisError, match="div needs a vector"):
        analyzed(SCALAR_P1 + "a = div(u)*v*dx\n")


def test_inner_needs_equal_shapes():
    with pytest.raises(FormAnalysisError, match="inner needs"):
        analyzed(VECTOR_P1 + "a = inner(v, grad(u))*dx\n")


def test_component_bounds_checked():
    with pytest.raises(FormAnalysisError, match="out of range"):
        analyzed(VECTOR_P1 + "a = v[2]*u[0]*dx\n")
    with pytest.raises(FormAnalysisError, match="needs a vector"):
        analyzed(SCALAR_P1 + "a = v[0]*u*dx\n")


def test_dx_coordinate_bounds_checked():
    with pytest.raises(FormAnalysisError, match="out of range"):
        analyzed(SCALAR_P1 + "a = v*u.dx(2)*dx\n")


def test_addition_shape_mismatch():
    with pytest.raises(FormAnalysisError, match="cannot add"):
        analyzed(VECTOR_P1 + "a = dot(v + div(u), v)*u[0]*dx\n")


def test_index_used_once_is_an_error():
    with pytest.raises(FormAnalysisError, match="appears 1 time"):
        analyzed(VECTOR_P1 + "a = v[i]*u[0]*dx\n")


def test_index_used_three_times_is_an_error():
    with pytest.raises(FormAnalysisError, match="appears 3 time"):
        analyzed(VECTOR_P1 + "a = v[i]*u[i]*w[i]*dx\n")


def test_sum_operands_must_use_indices_identically():
    with pytest.raises(FormAnalysisError, match="identically"):
        analyzed(VECTOR_P1 + "a = (v[i]*u[i] + v[j]*u[i])*dx\n")


def test_indices_cannot_hide_under_a_power():
    with pytest.raises(FormAnalysisError, match="under a power"):
        analyzed(VECTOR_P1 + "a = (v[i]*u[i])**2*w[0]*dx\n")


def test_index_form_equals_builtin_contractions():
    spelled = analyzed(VECTOR_P1 + "a = v[i]*u[i]*dx\n")
    assert spelled.rank == 2
    # same monomials as dot(v, u) once lowered
    contracted = analyzed(VECTOR_P1 + "a = dot(v, u)*dx\n")
    mono_a = expand_monomials(
        lower_integrand(single_cell_terms(spelled)[0], spelled))
    mono_b = expand_monomials(
        lower_integrand(single_cell_terms(contracted)[0], contracted))
    assert Counter(mono_a) == Counter(mono_b)


# -- measures and restrictions ------------------------------------------------

def test_term_without_measure():
    with pytest.raises(FormAnalysisError, match="lacks a measure"):
        analyzed(SCALAR_P1 + "a = v*u*dx + v*u\n")


def test_two_measures_in_one_term():
    with pytest.raises(FormAnalysisError, match="more than one measure"):
        analyzed(SCALAR_P1 + "a = v*u*dx*dx\n")


def test_measure_inside_an_operator():
    with pytest.raises(FormAnalysisError, match="factor of a whole term"):
        analyzed(SCALAR_P1 + "a = dot(grad(v), grad(u*dx))*dx\n")


def test_restrictions_require_interior_facets():
    with pytest.raises(FormAnalysisError, match="interior facet"):
        analyzed(SCALAR_P1 + "a = jump(v)*jump(u)*dx\n")
    with pytest.raises(FormAnalysisError, match="interior facet"):
        analyzed(SCALAR_P1 + "a = avg(v)*avg(u)*ds\n")


def test_interior_facet_integrands_must_be_restricted():
    with pytest.raises(FormAnalysisError, match="'v' must be restricted"):
        analyzed(SCALAR_P1 + "a = v*jump(u)*dS\n")


def test_nested_restrictions_rejected():
    with pytest.raises(FormAnalysisError, match="nested restriction"):
        analyzed(SCALAR_P1 + "a = jump(pos(v))*jump(u)*dS\n")


def test_mixed_cell_shapes_rejected():
    src = ('tri = FiniteElement("Lagrange", "triangle", 1)\n'
           'tet = FiniteElement("Lagrange", "tetrahedron", 1)\n'
           'v = TestFunction(tri)\nu = TrialFunction(tet)\n'
           'a = v*u*dx\n')
    with pytest.raises(FormAnalysisError, match="mixes cell shapes"):
        analyzed(src)


# -- polynomial degree --------------------------------------------------------

def test_integrand_degrees():
    expected = {
        ("poisson", "a"): 0,   # constant gradients
        ("poisson", "L"): 2,
        ("mass", "a"): 2,
        ("convection", "a"): 3,
        ("weighted_poisson", "a"): 0,
        ("powerlaw", "F"): None,
        ("h1_error", "e"): 6,
    }
    for (name, form), degree in expected.items():
        d = builtin(name, form)
        terms = single_cell_terms(d)
        assert integrand_polynomial_degree(terms, d) == degree, (name, form)


def test_jump_degree():
    d = builtin("dg_jump", "a")
    _, terms = d.interior_facet_integrals[0]
    assert integrand_polynomial_degree(terms, d) == 0


# -- lowering -----------------------------------------------------------------

def test_poisson_lowers_to_two_gradient_monomials():
    d = builtin("poisson", "a")
    term, = single_cell_terms(d)
    mono = expand_monomials(lower_integrand(term, d))
    expected = [
        (1.0, (Terminal("argument", 0, 0, 0), Terminal("argument", 1, 0, 0))),
        (1.0, (Terminal("argument", 0, 0, 1), Terminal("argument", 1, 0, 1))),
    ]
    assert Counter(mono) == Counter(expected)


def test_load_vector_lowering():
    d = builtin("poisson", "L")
    term, = single_cell_terms(d)
    mono = expand_monomials(lower_integrand(term, d))
    assert mono == [(1.0, (Terminal("argument", 0),
                           Terminal("coefficient", 0)))]


def test_index_notation_lowers_to_four_monomials():
    d = builtin("convection", "a")
    term, = single_cell_terms(d)
    mono = expand_monomials(lower_integrand(term, d))
    expected = []
    for ci in range(2):
        for cj in range(2):
            expected.append((1.0, (
                Terminal("coefficient", 1),             # rho
                Terminal("argument", 0, ci),            # v[i]
                Terminal("coefficient", 0, cj),         # w[j]
                Terminal("argument", 1, ci, cj),        # u[i].dx(j)
            )))
    assert Counter(mono) == Counter(expected)


def test_jump_desugars_to_signed_side_products():
    d = builtin("dg_jump", "a")
    _, (term,) = d.interior_facet_integrals[0]
    mono = expand_monomials(lower_integrand(term, d))
    v = [Terminal("argument", 0, restriction=s) for s in "+-"]
    u = [Terminal("argument", 1, restriction=s) for s in "+-"]
    expected = [(1.0, (v[0], u[0])), (-1.0, (v[0], u[1])),
                (-1.0, (v[1], u[0])), (1.0, (v[1], u[1]))]
    assert Counter(mono) == Counter(expected)


def test_average_weights_sides_by_half():
    d = analyzed(SCALAR_P1 + "a = avg(v)*avg(u)*dS\n")
    _, (term,) = d.interior_facet_integrals[0]
    mono = expand_monomials(lower_integrand(term, d))
    assert len(mono) == 4
    assert all(c == pytest.approx(0.25) for c, _ in mono)


def test_squared_difference_expands():
    d = builtin("h1_error", "e")
    terms = single_cell_terms(d)
    squared = [t for t in terms if integrand_polynomial_degree(t, d) == 6]
    assert len(squared) == 1
    mono = expand_monomials(lower_integrand(squared[0], d))
    u, uh = Terminal("coefficient", 0), Terminal("coefficient", 1)
    expected = [(1.0, (u, u)), (-1.0, (u, uh)),
                (-1.0, (uh, u)), (1.0, (uh, uh))]
    assert Counter(mono) == Counter(expected)


def test_constant_scaling_survives_lowering():
    d = analyzed(SCALAR_P1 + "a = 3*v*u*dx - v*u*dx\n")
    terms = single_cell_terms(d)
    mono = []
    for t in terms:
        mono.extend(expand_monomials(lower_integrand(t, d)))
    coefficients = sorted(c for c, _ in mono)
    assert coefficients == [-1.0, 3.0]


def test_fractional_power_lowers_but_has_no_monomials():
    d = builtin("powerlaw", "F")
    terms = single_cell_terms(d)
    for term in terms:
        if integrand_polynomial_degree(term, d) is not None:
            continue
        lowered = lower_integrand(term, d)  # lowering itself is fine
        with pytest.raises(FormAnalysisError, match="no monomial expansion"):
            expand_monomials(lowered)
        break
    else:
        pytest.fail("no non-polynomial term found")


def test_second_derivatives_rejected():
    d = analyzed(SCALAR_P1 + "a = v*u.dx(0).dx(1)*dx\n")
    term, = single_cell_terms(d)
    with pytest.raises(FormAnalysisError, match="second derivatives"):
        lower_integrand(term, d)


def test_derivative_of_varying_product_rejected():
    d = analyzed(SCALAR_P1 + "a = (w*u).dx(0)*v*dx\n")
    term, = single_cell_terms(d)
    with pytest.raises(FormAnalysisError, match="expand the derivative"):
        lower_integrand(term, d)


def test_derivative_of_constant_times_function_is_fine():
    d = analyzed(SCALAR_P1 + "a = (2*u).dx(0)*v*dx\n")
    term, = single_cell_terms(d)
    mono = expand_monomials(lower_integrand(term, d))
    assert Counter(mono) == Counter([
        (2.0, (Terminal("argument", 1, 0, 0), Terminal("argument", 0)))])
