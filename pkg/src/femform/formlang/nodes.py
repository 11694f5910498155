"""Syntax tree of the form language.

Nodes compare structurally; source locations ride along but are
ignored by equality so that reparsing pretty-printed source gives
equal trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self):
        return f"line {self.line}, column {self.column}"


def _loc_field():
    return field(default=None, compare=False, repr=False)


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Number(Expr):
    value: float
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class FunctionRef(Expr):
    name: str
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class IndexName(Expr):
    """A summation index (i, j, k or l) in an index slot."""

    name: str
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Grad(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Dot(Expr):
    a: Expr
    b: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Inner(Expr):
    a: Expr
    b: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Component(Expr):
    """Single-index component access, u[i]."""

    a: Expr
    index: object  # int or IndexName
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class SpatialDerivative(Expr):
    """u.dx(j): derivative in the j-th coordinate."""

    a: Expr
    index: object  # int or IndexName
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class PosRestrict(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class NegRestrict(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Jump(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Average(Expr):
    a: Expr
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class Measure(Expr):
    kind: str  # "dx", "ds" or "dS"
    subdomain: int = 0
    loc: SourceLocation | None = _loc_field()


MEASURE_KINDS = {"dx": "cell", "ds": "exterior_facet", "dS": "interior_facet"}


# -- declarations ----------------------------------------------------------

@dataclass(frozen=True)
class ElementDecl:
    name: str
    family: str
    shape_name: str
    degree: int
    vector_length: int | None  # None also for VectorElement defaulting
    is_vector: bool
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    role: str  # "test", "trial" or "coefficient"
    element_name: str
    loc: SourceLocation | None = _loc_field()


@dataclass(frozen=True)
class FormFile:
    """A parsed source file: element declarations, function bindings,
    and named form expressions, all in declaration order."""

    elements: tuple  # of ElementDecl
    functions: tuple  # of FunctionDecl
    forms: tuple  # of (name, Expr)

    def element(self, name):
        for decl in self.elements:
            if decl.name == name:
                return decl
        raise KeyError(name)

    def function(self, name):
        for decl in self.functions:
            if decl.name == name:
                return decl
        raise KeyError(name)

    def form(self, name):
        for fname, expr in self.forms:
            if fname == name:
                return expr
        raise KeyError(name)

    @property
    def form_names(self):
        return tuple(name for name, _ in self.forms)


# -- pretty printing -------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_POST = 10, 20, 25, 30, 40


def format_number(value):
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _index_str(index):
    return index.name if isinstance(index, IndexName) else str(index)


def pretty(expr):
    """Render an expression as canonical source text.

    Reparsing the result yields a structurally equal tree.
    """
    return _pretty(expr, 0)


def _wrap(text, prec, context):
    return f"({text})" if prec < context else text


def _pretty(e, context):
    if isinstance(e, Number):
        text = format_number(e.value)
        return _wrap(text, _PREC_NEG if e.value < 0 else 100, context)
    if isinstance(e, (FunctionRef, IndexName)):
        return e.name
    if isinstance(e, Measure):
        return e.kind if e.subdomain == 0 else f"{e.kind}({e.subdomain})"
    if isinstance(e, Add):
        text = f"{_pretty(e.a, _PREC_ADD)} + {_pretty(e.b, _PREC_ADD + 1)}"
        return _wrap(text, _PREC_ADD, context)
    if isinstance(e, Sub):
        text = f"{_pretty(e.a, _PREC_ADD)} - {_pretty(e.b, _PREC_ADD + 1)}"
        return _wrap(text, _PREC_ADD, context)
    if isinstance(e, Mul):
        text = f"{_pretty(e.a, _PREC_MUL)}*{_pretty(e.b, _PREC_MUL + 1)}"
        return _wrap(text, _PREC_MUL, context)
    if isinstance(e, Neg):
        return _wrap(f"-{_pretty(e.a, _PREC_NEG)}", _PREC_NEG, context)
    if isinstance(e, Pow):
        text = f"{_pretty(e.base, _PREC_POW + 1)}**{format_number(e.exponent)}"
        return _wrap(text, _PREC_POW, context)
    if isinstance(e, Component):
        return f"{_pretty(e.a, _PREC_POST)}[{_index_str(e.index)}]"
    if isinstance(e, SpatialDerivative):
        return f"{_pretty(e.a, _PREC_POST)}.dx({_index_str(e.index)})"
    for cls, fn in ((Grad, "grad"), (Div, "div"), (Jump, "jump"),
                    (Average, "avg"), (PosRestrict, "pos"), (NegRestrict, "neg")):
        if isinstance(e, cls):
            return f"{fn}({_pretty(e.a, 0)})"
    for cls, fn in ((Dot, "dot"), (Inner, "inner")):
        if isinstance(e, cls):
            return f"{fn}({_pretty(e.a, 0)}, {_pretty(e.b, 0)})"
    raise TypeError(f"cannot pretty-print {type(e).__name__}")


def pretty_file(ast):
    """Render a whole FormFile back to source."""
    lines = []
    for d in ast.elements:
        if d.is_vector:
            args = f'"{d.family}", "{d.shape_name}", {d.degree}'
            if d.vector_length is not None:
                args += f", {d.vector_length}"
            lines.append(f"{d.name} = VectorElement({args})")
        else:
            lines.append(f'{d.name} = FiniteElement("{d.family}", '
                         f'"{d.shape_name}", {d.degree})')
    roles = {"test": "TestFunction", "trial": "TrialFunction",
             "coefficient": "Function"}
    for f in ast.functions:
        lines.append(f"{f.name} = {roles[f.role]}({f.element_name})")
    for name, expr in ast.forms:
        lines.append(f"{name} = {pretty(expr)}")
    return "\n".join(lines) + "\n"
