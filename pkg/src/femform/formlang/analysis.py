"""Semantic analysis: classify a parsed form into a descriptor.

The descriptor records the arity (rank = number of test/trial
arguments, plus the referenced coefficients in declaration order) and
the integrands grouped by measure kind and subdomain.  Analysis also
performs all the checking that makes later compilation straightforward:
scalar integrands, consistent implicit summation indices, restrictions
exactly in interior facet integrals, a single shared cell shape.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..element import ElementError, make_element
from .nodes import (Add, Average, Component, Div, Dot, FunctionRef, Grad,
                    IndexName, Inner, Jump, MEASURE_KINDS, Measure, Mul, Neg,
                    NegRestrict, Number, PosRestrict, Pow, SpatialDerivative,
                    Sub, pretty)
from .parser import FormError

_RESTRICTIONS = (PosRestrict, NegRestrict, Jump, Average)


class FormAnalysisError(FormError):
    def __init__(self, message, loc=None):
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


@dataclass(frozen=True)
class FormDescriptor:
    """Arity, function spaces and integrals of one analyzed form.

    Integral fields are tuples of (subdomain, terms) pairs sorted by
    subdomain id; terms are individual summands of the integrand in a
    canonical order, so descriptors of rearranged but equivalent
    sources compare equal.
    """

    name: str
    rank: int
    argument_names: tuple
    argument_elements: tuple
    coefficient_names: tuple
    coefficient_elements: tuple
    cell_integrals: tuple
    exterior_facet_integrals: tuple
    interior_facet_integrals: tuple

    def integrals(self, kind):
        return {"cell": self.cell_integrals,
                "exterior_facet": self.exterior_facet_integrals,
                "interior_facet": self.interior_facet_integrals}[kind]

    @property
    def num_coefficients(self):
        return len(self.coefficient_names)

    @property
    def shape(self):
        for e in self.argument_elements + self.coefficient_elements:
            return e.shape
        raise FormAnalysisError("form has no functions")

    def position(self, name):
        if name in self.argument_names:
            return "argument", self.argument_names.index(name)
        if name in self.coefficient_names:
            return "coefficient", self.coefficient_names.index(name)
        raise KeyError(name)

    def element_of(self, name):
        kind, pos = self.position(name)
        elements = self.argument_elements if kind == "argument" \
            else self.coefficient_elements
        return elements[pos]


def _build_element(decl):
    family = decl.family
    try:
        if decl.is_vector:
            from ..mesh import reference_shape
            length = decl.vector_length
            if length is None:
                length = reference_shape(decl.shape_name).topological_dimension
            return make_element("VectorLagrange" if family in ("Lagrange", "CG", "P")
                                else family,
                                decl.shape_name, decl.degree, vector_length=length)
        return make_element(family, decl.shape_name, decl.degree)
    except ElementError as exc:
        raise FormAnalysisError(str(exc), decl.loc) from None


# -- expression walks -------------------------------------------------------

def value_shape(expr, element_of, tdim):
    """Value shape of an expression: () scalar, (m,) vector, (m, n) matrix."""
    if isinstance(expr, Number):
        return ()
    if isinstance(expr, FunctionRef):
        return element_of(expr.name).value_shape
    if isinstance(expr, (Add, Sub)):
        sa = value_shape(expr.a, element_of, tdim)
        sb = value_shape(expr.b, element_of, tdim)
        if sa != sb:
            raise FormAnalysisError(
                f"cannot add shapes {sa} and {sb}", expr.loc)
        return sa
    if isinstance(expr, Neg):
        return value_shape(expr.a, element_of, tdim)
    if isinstance(expr, Mul):
        sa = value_shape(expr.a, element_of, tdim)
        sb = value_shape(expr.b, element_of, tdim)
        if sa != () and sb != ():
            raise FormAnalysisError(
                "'*' multiplies by scalars; use dot or inner to contract",
                expr.loc)
        return sa if sb == () else sb
    if isinstance(expr, Pow):
        if value_shape(expr.base, element_of, tdim) != ():
            raise FormAnalysisError("powers apply to scalars only", expr.loc)
        return ()
    if isinstance(expr, Dot):
        sa = value_shape(expr.a, element_of, tdim)
        sb = value_shape(expr.b, element_of, tdim)
        if len(sa) == 1 and len(sb) == 1 and sa == sb:
            return ()
        if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
            return (sa[0],)
        if len(sa) == 1 and len(sb) == 2 and sa[0] == sb[0]:
            return (sb[1],)
        raise FormAnalysisError(f"cannot contract shapes {sa} and {sb}",
                                expr.loc)
    if isinstance(expr, Inner):
        sa = value_shape(expr.a, element_of, tdim)
        sb = value_shape(expr.b, element_of, tdim)
        if sa != sb or sa == ():
            raise FormAnalysisError(
                f"inner needs two equal non-scalar shapes, got {sa} and {sb}",
                expr.loc)
        return ()
    if isinstance(expr, Grad):
        s = value_shape(expr.a, element_of, tdim)
        if len(s) > 1:
            raise FormAnalysisError("cannot take grad of a matrix", expr.loc)
        return s + (tdim,)
    if isinstance(expr, Div):
        s = value_shape(expr.a, element_of, tdim)
        if s != (tdim,):
            raise FormAnalysisError(
                f"div needs a vector of length {tdim}, got shape {s}", expr.loc)
        return ()
    if isinstance(expr, Component):
        s = value_shape(expr.a, element_of, tdim)
        if len(s) != 1:
            raise FormAnalysisError(
                f"component access needs a vector, got shape {s}", expr.loc)
        if isinstance(expr.index, int) and not 0 <= expr.index < s[0]:
            raise FormAnalysisError(
                f"component {expr.index} out of range for shape {s}", expr.loc)
        return ()
    if isinstance(expr, SpatialDerivative):
        if isinstance(expr.index, int) and not 0 <= expr.index < tdim:
            raise FormAnalysisError(
                f"coordinate {expr.index} out of range in {tdim} dimensions",
                expr.loc)
        return value_shape(expr.a, element_of, tdim)
    if isinstance(expr, _RESTRICTIONS):
        return value_shape(expr.a, element_of, tdim)
    if isinstance(expr, Measure):
        raise FormAnalysisError(
            "a measure may only appear as a factor of a whole term", expr.loc)
    raise FormAnalysisError(f"unexpected node {type(expr).__name__}", expr.loc)


def _index_counts(expr):
    """Occurrences of each summation index, with the summation rules:
    the two sides of + and - must use indices identically, and indexed
    expressions cannot sit under a power."""
    if isinstance(expr, (Number, FunctionRef)):
        return {}
    if isinstance(expr, (Add, Sub)):
        ca, cb = _index_counts(expr.a), _index_counts(expr.b)
        if ca != cb:
            raise FormAnalysisError(
                "the terms of a sum must use summation indices identically",
                expr.loc)
        return ca
    if isinstance(expr, (Mul, Dot, Inner)):
        ca, cb = _index_counts(expr.a), _index_counts(expr.b)
        return {n: ca.get(n, 0) + cb.get(n, 0) for n in set(ca) | set(cb)}
    if isinstance(expr, Pow):
        if _index_counts(expr.base):
            raise FormAnalysisError(
                "summation indices cannot appear under a power", expr.loc)
        return {}
    if isinstance(expr, (Neg, Grad, Div, *_RESTRICTIONS)):
        return _index_counts(expr.a)
    if isinstance(expr, (Component, SpatialDerivative)):
        counts = dict(_index_counts(expr.a))
        if isinstance(expr.index, IndexName):
            counts[expr.index.name] = counts.get(expr.index.name, 0) + 1
        return counts
    if isinstance(expr, Measure):
        raise FormAnalysisError(
            "a measure may only appear as a factor of a whole term", expr.loc)
    raise FormAnalysisError(f"unexpected node {type(expr).__name__}",
                            getattr(expr, "loc", None))


def _index_ranges(expr, element_of, tdim, ranges):
    """Assign each summation index its range (component count or tdim)."""
    if isinstance(expr, (Component, SpatialDerivative)):
        if isinstance(expr.index, IndexName):
            if isinstance(expr, Component):
                extent = value_shape(expr.a, element_of, tdim)[0]
            else:
                extent = tdim
            name = expr.index.name
            if ranges.setdefault(name, extent) != extent:
                raise FormAnalysisError(
                    f"index {name!r} is used with ranges {ranges[name]} "
                    f"and {extent}", expr.loc)
        _index_ranges(expr.a, element_of, tdim, ranges)
    elif isinstance(expr, (Add, Sub, Mul, Dot, Inner)):
        _index_ranges(expr.a, element_of, tdim, ranges)
        _index_ranges(expr.b, element_of, tdim, ranges)
    elif isinstance(expr, Pow):
        _index_ranges(expr.base, element_of, tdim, ranges)
    elif isinstance(expr, (Neg, Grad, Div, *_RESTRICTIONS)):
        _index_ranges(expr.a, element_of, tdim, ranges)
    return ranges


def _function_names(expr, out):
    if isinstance(expr, FunctionRef):
        out.append(expr.name)
    for attr in ("a", "b", "base"):
        child = getattr(expr, attr, None)
        if isinstance(child, (Number, FunctionRef, Add, Sub, Neg, Mul, Pow,
                              Grad, Div, Dot, Inner, Component,
                              SpatialDerivative, *_RESTRICTIONS)):
            _function_names(child, out)
    return out


def _check_restrictions(expr, kind, restricted=False):
    if isinstance(expr, _RESTRICTIONS):
        if kind != "interior_facet":
            raise FormAnalysisError(
                "restrictions (pos/neg/jump/avg) are only meaningful in "
                "interior facet integrals (dS)", expr.loc)
        if restricted:
            raise FormAnalysisError("nested restriction", expr.loc)
        _check_restrictions(expr.a, kind, True)
        return
    if isinstance(expr, FunctionRef):
        if kind == "interior_facet" and not restricted:
            raise FormAnalysisError(
                f"{expr.name!r} must be restricted (pos/neg/jump/avg) in an "
                "interior facet integral", expr.loc)
        return
    for attr in ("a", "b", "base"):
        child = getattr(expr, attr, None)
        if child is not None and not isinstance(child, (int, float, str)):
            _check_restrictions(child, kind, restricted)


def _argument_use(expr, names):
    """How often each name in names occurs as a factor of expr, as a
    (lowest, highest) range over the additive branches.  A form is
    assemblable only if every branch of every term uses each test and
    trial function exactly once."""
    if isinstance(expr, FunctionRef):
        return {expr.name: (1, 1)} if expr.name in names else {}
    if isinstance(expr, (Add, Sub)):
        ca, cb = _argument_use(expr.a, names), _argument_use(expr.b, names)
        return {n: (min(ca.get(n, (0, 0))[0], cb.get(n, (0, 0))[0]),
                    max(ca.get(n, (0, 0))[1], cb.get(n, (0, 0))[1]))
                for n in set(ca) | set(cb)}
    if isinstance(expr, (Mul, Dot, Inner)):
        ca, cb = _argument_use(expr.a, names), _argument_use(expr.b, names)
        return {n: (ca.get(n, (0, 0))[0] + cb.get(n, (0, 0))[0],
                    ca.get(n, (0, 0))[1] + cb.get(n, (0, 0))[1])
                for n in set(ca) | set(cb)}
    if isinstance(expr, Pow):
        counts = _argument_use(expr.base, names)
        if not counts or expr.exponent == 0:
            return {}
        if expr.exponent == 1:
            return counts
        name = sorted(counts)[0]
        raise FormAnalysisError(
            f"form must be linear in {name!r}, which appears under a power",
            expr.loc)
    if isinstance(expr, (Neg, Grad, Div, Component, SpatialDerivative,
                         *_RESTRICTIONS)):
        return _argument_use(expr.a, names)
    return {}


# -- term splitting ----------------------------------------------------------

def _split_terms(expr):
    """Flatten the top level sum into sign-folded terms."""
    if isinstance(expr, Add):
        return _split_terms(expr.a) + _split_terms(expr.b)
    if isinstance(expr, Sub):
        return _split_terms(expr.a) + [Neg(t) for t in _split_terms(expr.b)]
    if isinstance(expr, Neg):
        return [Neg(t) for t in _split_terms(expr.a)]
    return [expr]


def _split_measure(term):
    """Pull the unique measure factor out of one term."""
    sign = 1
    while isinstance(term, Neg):
        sign = -sign
        term = term.a
    factors = _flatten_mul(term)
    measures = [f for f in factors if isinstance(f, Measure)]
    if not measures:
        raise FormAnalysisError(
            "term lacks a measure (dx, ds or dS)", getattr(term, "loc", None))
    if len(measures) > 1:
        raise FormAnalysisError("term has more than one measure",
                                measures[1].loc)
    rest = [f for f in factors if not isinstance(f, Measure)]
    if not rest:
        integrand = Number(1.0)
    else:
        integrand = rest[0]
        for f in rest[1:]:
            integrand = Mul(integrand, f)
    if sign < 0:
        integrand = Neg(integrand)
    return measures[0], integrand


def _flatten_mul(expr):
    if isinstance(expr, Mul):
        return _flatten_mul(expr.a) + _flatten_mul(expr.b)
    return [expr]


# -- the analyzer ------------------------------------------------------------

def analyze(ast, form_name):
    """Check a named form of a parsed FormFile and build its descriptor."""
    try:
        expr = ast.form(form_name)
    except KeyError:
        known = ", ".join(ast.form_names) or "none"
        raise FormAnalysisError(
            f"no form named {form_name!r} (declared: {known})") from None

    decls = {f.name: f for f in ast.functions}
    buckets = {"cell": {}, "exterior_facet": {}, "interior_facet": {}}
    used = []
    for term in _split_terms(expr):
        measure, integrand = _split_measure(term)
        kind = MEASURE_KINDS[measure.kind]
        buckets[kind].setdefault(measure.subdomain, []).append(integrand)
        _function_names(integrand, used)

    if not used:
        raise FormAnalysisError(f"form {form_name!r} uses no functions")

    tests, trials, coefficients = [], [], []
    for f in ast.functions:
        if f.name not in used:
            continue
        {"test": tests, "trial": trials,
         "coefficient": coefficients}[decls[f.name].role].append(f.name)
    if len(tests) > 1:
        raise FormAnalysisError(
            f"form {form_name!r} uses {len(tests)} test functions; at most "
            "one is allowed")
    if len(trials) > 1:
        raise FormAnalysisError(
            f"form {form_name!r} uses {len(trials)} trial functions; at most "
            "one is allowed")
    if trials and not tests:
        raise FormAnalysisError(
            f"form {form_name!r} uses a trial function but no test function")

    argument_names = tuple(tests + trials)
    coefficient_names = tuple(coefficients)
    elements = {name: _build_element(ast.element(decls[name].element_name))
                for name in used}
    shapes = {e.shape.name for e in elements.values()}
    if len(shapes) > 1:
        raise FormAnalysisError(
            f"form {form_name!r} mixes cell shapes {sorted(shapes)}")
    tdim = next(iter(elements.values())).shape.topological_dimension

    def element_of(name):
        return elements[name]

    for kind, by_subdomain in buckets.items():
        for terms in by_subdomain.values():
            for t in terms:
                body = t.a if isinstance(t, Neg) else t
                counts = _index_counts(body)
                bad = sorted(n for n, c in counts.items() if c != 2)
                if bad:
                    raise FormAnalysisError(
                        f"summation index {bad[0]!r} appears "
                        f"{counts[bad[0]]} time(s) in a term; repeated "
                        "indices must appear exactly twice")
                _index_ranges(body, element_of, tdim, {})
                if value_shape(body, element_of, tdim) != ():
                    raise FormAnalysisError(
                        "integrand is not scalar", getattr(body, "loc", None))
                _check_restrictions(body, kind)
                use = _argument_use(body, set(argument_names))
                for name in argument_names:
                    lo, hi = use.get(name, (0, 0))
                    if (lo, hi) != (1, 1):
                        times = f"{lo} time(s)" if lo == hi \
                            else f"{lo} to {hi} times"
                        raise FormAnalysisError(
                            f"form {form_name!r} must be linear in {name!r}; "
                            f"a term uses it {times}")

    def freeze(kind):
        return tuple(sorted(
            ((sub, tuple(sorted(terms, key=pretty)))
             for sub, terms in buckets[kind].items())))

    return FormDescriptor(
        name=form_name,
        rank=len(argument_names),
        argument_names=argument_names,
        argument_elements=tuple(elements[n] for n in argument_names),
        coefficient_names=coefficient_names,
        coefficient_elements=tuple(elements[n] for n in coefficient_names),
        cell_integrals=freeze("cell"),
        exterior_facet_integrals=freeze("exterior_facet"),
        interior_facet_integrals=freeze("interior_facet"),
    )


# -- polynomial degree --------------------------------------------------------

def integrand_polynomial_degree(expr, descriptor):
    """Total polynomial degree of an integrand, or None if it is not a
    polynomial in the reference coordinates (fractional powers).

    Accepts a single expression or an iterable of terms.
    """
    if not isinstance(expr, (Number, FunctionRef, Add, Sub, Neg, Mul, Pow,
                             Grad, Div, Dot, Inner, Component,
                             SpatialDerivative, *_RESTRICTIONS)):
        degrees = [integrand_polynomial_degree(t, descriptor) for t in expr]
        return None if any(d is None for d in degrees) else max(degrees)
    return _degree(expr, descriptor)


def _degree(e, desc):
    if isinstance(e, Number):
        return 0
    if isinstance(e, FunctionRef):
        return desc.element_of(e.name).degree
    if isinstance(e, (Add, Sub)):
        da, db = _degree(e.a, desc), _degree(e.b, desc)
        return None if da is None or db is None else max(da, db)
    if isinstance(e, (Mul, Dot, Inner)):
        da, db = _degree(e.a, desc), _degree(e.b, desc)
        return None if da is None or db is None else da + db
    if isinstance(e, Pow):
        p = e.exponent
        if p != int(p) or p < 0:
            return None
        db = _degree(e.base, desc)
        return None if db is None else db * int(p)
    if isinstance(e, (Grad, Div, SpatialDerivative)):
        d = _degree(e.a, desc)
        return None if d is None else max(d - 1, 0)
    if isinstance(e, (Neg, Component, *_RESTRICTIONS)):
        return _degree(e.a, desc)
    raise FormAnalysisError(f"unexpected node {type(e).__name__}",
                            getattr(e, "loc", None))
