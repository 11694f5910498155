"""Tokenizer and recursive descent parser for the form language.

A source file is a sequence of single-line statements::

    P1 = FiniteElement("Lagrange", "triangle", 1)
    V  = VectorElement("Lagrange", "triangle", 1)
    v  = TestFunction(P1)
    u  = TrialFunction(P1)
    f  = Function(P1)
    a  = dot(grad(v), grad(u))*dx
    L  = v*f*dx

Expressions support +, -, scalar *, ** with a literal real exponent,
the operators grad/div/dot/inner, facet restrictions pos/neg/jump/avg,
component access u[i], coordinate derivatives u.dx(j) with implicit
summation over the index names i, j, k, l, and the measures dx, ds,
dS with an optional integer subdomain.
"""

from __future__ import annotations

import re

from .nodes import (Add, Average, Component, Div, Dot, ElementDecl, FormFile,
                    FunctionDecl, FunctionRef, Grad, IndexName, Inner, Jump,
                    Measure, Mul, Neg, NegRestrict, Number, PosRestrict, Pow,
                    SourceLocation, Sub, SpatialDerivative)


class FormError(Exception):
    """Base class for form language errors."""


class FormSyntaxError(FormError):
    def __init__(self, message, loc):
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


INDEX_NAMES = ("i", "j", "k", "l")
MEASURE_NAMES = ("dx", "ds", "dS")
_BUILTINS = ("grad", "div", "dot", "inner", "jump", "avg", "pos", "neg")
_DECL_HEADS = ("FiniteElement", "VectorElement",
               "TestFunction", "TrialFunction", "Function")
RESERVED = set(INDEX_NAMES) | set(MEASURE_NAMES) | set(_BUILTINS) \
    | set(_DECL_HEADS) | {"dx"}

_TOKEN_RE = re.compile(r"""
    (?P<NUMBER>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?
              |\d+(?:[eE][+-]?\d+)?)
  | (?P<NAME>[A-Za-z_]\w*)
  | (?P<STRING>"[^"\n]*")
  | (?P<OP>\*\*|[-+*=(),.\[\]])
  | (?P<WS>[ \t]+)
  | (?P<COMMENT>\#[^\n]*)
  | (?P<BAD>.)
""", re.VERBOSE)


class _Token:
    __slots__ = ("kind", "text", "loc")

    def __init__(self, kind, text, loc):
        self.kind = kind
        self.text = text
        self.loc = loc

    def __repr__(self):
        return f"_Token({self.kind}, {self.text!r})"


def _tokenize_line(line, lineno):
    tokens = []
    for m in _TOKEN_RE.finditer(line):
        kind = m.lastgroup
        if kind in ("WS", "COMMENT"):
            continue
        loc = SourceLocation(lineno, m.start() + 1)
        if kind == "BAD":
            raise FormSyntaxError(f"unexpected character {m.group()!r}", loc)
        tokens.append(_Token(kind, m.group(), loc))
    tokens.append(_Token("END", "", SourceLocation(lineno, len(line) + 1)))
    return tokens


class _LineParser:
    """Parses one statement; scope maps are shared across lines."""

    def __init__(self, tokens, elements, functions, forms):
        self.tokens = tokens
        self.pos = 0
        self.elements = elements
        self.functions = functions
        self.forms = forms

    # -- token plumbing --------------------------------------------------

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        if tok.kind != "END":
            self.pos += 1
        return tok

    def expect(self, kind, text=None, what=None):
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = what or (repr(text) if text else kind.lower())
            got = repr(tok.text) if tok.text else "end of line"
            raise FormSyntaxError(f"expected {want}, got {got}", tok.loc)
        return self.advance()

    def at(self, kind, text=None):
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    # -- statements ------------------------------------------------------

    def parse_statement(self):
        name_tok = self.expect("NAME", what="a name to bind")
        name = name_tok.text
        if name in RESERVED:
            raise FormSyntaxError(f"{name!r} is a reserved name", name_tok.loc)
        if name in self.elements or name in self.functions or name in self.forms:
            raise FormSyntaxError(f"{name!r} is already declared", name_tok.loc)
        self.expect("OP", "=")
        head = self.peek()
        if head.kind == "NAME" and head.text in ("FiniteElement", "VectorElement"):
            decl = self.parse_element_decl(name)
            self.elements[name] = decl
        elif head.kind == "NAME" and head.text in ("TestFunction", "TrialFunction",
                                                   "Function"):
            decl = self.parse_function_decl(name)
            self.functions[name] = decl
        else:
            expr = self.parse_expression()
            self.forms[name] = expr
        end = self.peek()
        if end.kind != "END":
            raise FormSyntaxError(f"unexpected {end.text!r} after the statement",
                                  end.loc)

    def parse_element_decl(self, name):
        head = self.advance()
        is_vector = head.text == "VectorElement"
        self.expect("OP", "(")
        family = self.expect("STRING", what="an element family string").text[1:-1]
        self.expect("OP", ",")
        shape = self.expect("STRING", what="a cell shape string").text[1:-1]
        self.expect("OP", ",")
        degree = self._integer("an element degree")
        length = None
        if is_vector and self.at("OP", ","):
            self.advance()
            length = self._integer("a vector length")
        self.expect("OP", ")")
        return ElementDecl(name, family, shape, degree, length, is_vector,
                           loc=head.loc)

    def parse_function_decl(self, name):
        head = self.advance()
        role = {"TestFunction": "test", "TrialFunction": "trial",
                "Function": "coefficient"}[head.text]
        self.expect("OP", "(")
        elem_tok = self.expect("NAME", what="an element name")
        if elem_tok.text not in self.elements:
            raise FormSyntaxError(f"unknown element {elem_tok.text!r}",
                                  elem_tok.loc)
        self.expect("OP", ")")
        return FunctionDecl(name, role, elem_tok.text, loc=head.loc)

    def _integer(self, what):
        tok = self.expect("NUMBER", what=what)
        value = float(tok.text)
        if value != int(value):
            raise FormSyntaxError(f"expected an integer for {what}", tok.loc)
        return int(value)

    # -- expressions -----------------------------------------------------

    def parse_expression(self):
        expr = self.parse_term()
        while self.at("OP", "+") or self.at("OP", "-"):
            op = self.advance()
            rhs = self.parse_term()
            cls = Add if op.text == "+" else Sub
            expr = cls(expr, rhs, loc=op.loc)
        return expr

    def parse_term(self):
        expr = self.parse_unary()
        while self.at("OP", "*"):
            op = self.advance()
            rhs = self.parse_unary()
            expr = Mul(expr, rhs, loc=op.loc)
        return expr

    def parse_unary(self):
        if self.at("OP", "-"):
            op = self.advance()
            return Neg(self.parse_unary(), loc=op.loc)
        return self.parse_power()

    def parse_power(self):
        base = self.parse_postfix()
        if self.at("OP", "**"):
            op = self.advance()
            exponent = self.parse_unary()
            value = _literal_value(exponent)
            if value is None:
                raise FormSyntaxError("the exponent must be a real number literal",
                                      op.loc)
            return Pow(base, value, loc=op.loc)
        return base

    def parse_postfix(self):
        expr = self.parse_atom()
        while True:
            if self.at("OP", "["):
                op = self.advance()
                index = self.parse_index()
                self.expect("OP", "]")
                expr = Component(expr, index, loc=op.loc)
            elif self.at("OP", "."):
                op = self.advance()
                name = self.expect("NAME", what="'dx'")
                if name.text != "dx":
                    raise FormSyntaxError(
                        f"only '.dx(index)' may follow an expression, "
                        f"got .{name.text}", name.loc)
                self.expect("OP", "(")
                index = self.parse_index()
                self.expect("OP", ")")
                expr = SpatialDerivative(expr, index, loc=op.loc)
            else:
                return expr

    def parse_index(self):
        tok = self.peek()
        if tok.kind == "NUMBER":
            return self._integer("an index")
        if tok.kind == "NAME" and tok.text in INDEX_NAMES:
            self.advance()
            return IndexName(tok.text, loc=tok.loc)
        raise FormSyntaxError(
            "expected an integer or one of the index names "
            + ", ".join(INDEX_NAMES), tok.loc)

    def parse_atom(self):
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Number(float(tok.text), loc=tok.loc)
        if tok.kind == "OP" and tok.text == "(":
            self.advance()
            expr = self.parse_expression()
            self.expect("OP", ")")
            return expr
        if tok.kind == "NAME":
            if tok.text in MEASURE_NAMES:
                return self.parse_measure()
            if tok.text in _BUILTINS:
                return self.parse_call()
            if tok.text in INDEX_NAMES:
                raise FormSyntaxError(
                    f"index {tok.text!r} used outside [] or .dx()", tok.loc)
            if tok.text in self.functions:
                self.advance()
                return FunctionRef(tok.text, loc=tok.loc)
            if tok.text in self.elements:
                raise FormSyntaxError(
                    f"{tok.text!r} is an element, not a function", tok.loc)
            if tok.text in self.forms:
                raise FormSyntaxError(
                    f"forms cannot be used inside expressions", tok.loc)
            raise FormSyntaxError(f"unknown identifier {tok.text!r}", tok.loc)
        got = repr(tok.text) if tok.text else "end of line"
        raise FormSyntaxError(
            "expected a number, a function name, '(' or a measure "
            f"(dx, ds, dS), got {got}", tok.loc)

    def parse_measure(self):
        tok = self.advance()
        subdomain = 0
        if self.at("OP", "("):
            self.advance()
            subdomain = self._integer("a subdomain id")
            if subdomain < 0:
                raise FormSyntaxError("subdomain ids must be non-negative",
                                      tok.loc)
            self.expect("OP", ")")
        return Measure(tok.text, subdomain, loc=tok.loc)

    _CALL_ARITY = {"grad": 1, "div": 1, "jump": 1, "avg": 1, "pos": 1,
                   "neg": 1, "dot": 2, "inner": 2}
    _CALL_NODE = {"grad": Grad, "div": Div, "jump": Jump, "avg": Average,
                  "pos": PosRestrict, "neg": NegRestrict, "dot": Dot,
                  "inner": Inner}

    def parse_call(self):
        head = self.advance()
        self.expect("OP", "(")
        args = [self.parse_expression()]
        while self.at("OP", ","):
            self.advance()
            args.append(self.parse_expression())
        self.expect("OP", ")")
        arity = self._CALL_ARITY[head.text]
        if len(args) != arity:
            raise FormSyntaxError(
                f"{head.text} takes {arity} argument{'s' * (arity > 1)}, "
                f"got {len(args)}", head.loc)
        return self._CALL_NODE[head.text](*args, loc=head.loc)


def _literal_value(expr):
    if isinstance(expr, Number):
        return expr.value
    if isinstance(expr, Neg):
        inner = _literal_value(expr.a)
        return None if inner is None else -inner
    return None


def parse_forms(source):
    """Parse form language source text into a FormFile."""
    elements, functions, forms = {}, {}, {}
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        tokens = _tokenize_line(line, lineno)
        _LineParser(tokens, elements, functions, forms).parse_statement()
    return FormFile(tuple(elements.values()), tuple(functions.values()),
                    tuple(forms.items()))
