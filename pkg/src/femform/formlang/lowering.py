"""Lowering of analyzed integrands to scalar terminal trees.

Kernels do not want vectors, implicit sums or sugar; they want a
scalar expression over +, -, *, powers, literals and terminals, where
a terminal is one function with a component, at most one spatial
derivative, and (on interior facets) a side.  This module gets them
there in three steps: rewrite jump/avg into explicit side
restrictions, expand the implicit index sums, then push components
and derivatives down onto the function references.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .analysis import FormAnalysisError, value_shape
from .nodes import (Add, Average, Component, Div, Dot, FunctionRef, Grad,
                    IndexName, Inner, Jump, Mul, Neg, NegRestrict, Number,
                    PosRestrict, Pow, SpatialDerivative, Sub)


@dataclass(frozen=True)
class Terminal:
    """One function evaluation in a lowered integrand."""

    kind: str                 # "argument" or "coefficient"
    position: int
    component: int = 0
    derivative: int | None = None   # physical coordinate, or None
    restriction: str | None = None  # "+", "-" or None
    loc: object = field(default=None, compare=False, repr=False)


def lower_integrand(term, descriptor):
    """Lower one analyzed term to a scalar tree over Terminals."""
    term = _desugar(term)
    term = _expand_indices(term, descriptor)
    return _scalar(term, (), (), None, descriptor)


def _desugar(e):
    if isinstance(e, Jump):
        a = _desugar(e.a)
        return Sub(PosRestrict(a), NegRestrict(a), loc=e.loc)
    if isinstance(e, Average):
        a = _desugar(e.a)
        return Mul(Number(0.5), Add(PosRestrict(a), NegRestrict(a)), loc=e.loc)
    return _rebuild(e, _desugar)


def _rebuild(e, fn):
    if isinstance(e, (Number, FunctionRef, Terminal)):
        return e
    if isinstance(e, (Add, Sub, Mul, Dot, Inner)):
        return type(e)(fn(e.a), fn(e.b), loc=e.loc)
    if isinstance(e, (Neg, Grad, Div, PosRestrict, NegRestrict, Jump, Average)):
        return type(e)(fn(e.a), loc=e.loc)
    if isinstance(e, Pow):
        return Pow(fn(e.base), e.exponent, loc=e.loc)
    if isinstance(e, (Component, SpatialDerivative)):
        return type(e)(fn(e.a), e.index, loc=e.loc)
    raise FormAnalysisError(f"unexpected node {type(e).__name__}",
                            getattr(e, "loc", None))


# -- implicit summation -------------------------------------------------------

def _expand_indices(term, descriptor):
    tdim = descriptor.shape.topological_dimension
    ranges = _collect_ranges(term, descriptor, tdim, {})
    if not ranges:
        return term
    names = sorted(ranges)
    expansion = None
    for values in itertools.product(*(range(ranges[n]) for n in names)):
        bound = dict(zip(names, values))
        summand = _substitute(term, bound)
        expansion = summand if expansion is None else Add(expansion, summand)
    return expansion


def _collect_ranges(e, descriptor, tdim, ranges):
    if isinstance(e, (Component, SpatialDerivative)):
        if isinstance(e.index, IndexName):
            if isinstance(e, Component):
                extent = value_shape(e.a, descriptor.element_of, tdim)[0]
            else:
                extent = tdim
            ranges.setdefault(e.index.name, extent)
        _collect_ranges(e.a, descriptor, tdim, ranges)
    elif isinstance(e, (Add, Sub, Mul, Dot, Inner)):
        _collect_ranges(e.a, descriptor, tdim, ranges)
        _collect_ranges(e.b, descriptor, tdim, ranges)
    elif isinstance(e, Pow):
        _collect_ranges(e.base, descriptor, tdim, ranges)
    elif isinstance(e, (Neg, Grad, Div, PosRestrict, NegRestrict, Jump, Average)):
        _collect_ranges(e.a, descriptor, tdim, ranges)
    return ranges


def _substitute(e, bound):
    if isinstance(e, (Component, SpatialDerivative)):
        index = e.index
        if isinstance(index, IndexName):
            index = bound[index.name]
        return type(e)(_substitute(e.a, bound), index, loc=e.loc)
    return _rebuild(e, lambda child: _substitute(child, bound))


# -- scalarization ------------------------------------------------------------

def _is_constant(e):
    """Spatially constant: built from literals alone."""
    if isinstance(e, Number):
        return True
    if isinstance(e, (Add, Sub, Mul)):
        return _is_constant(e.a) and _is_constant(e.b)
    if isinstance(e, Neg):
        return _is_constant(e.a)
    if isinstance(e, Pow):
        return _is_constant(e.base)
    return False


def _scalar(e, idx, derivs, side, desc):
    """Component idx of e, differentiated along derivs, on a facet side."""
    tdim = desc.shape.topological_dimension

    if isinstance(e, Number):
        if derivs:
            return Number(0.0)
        return e
    if isinstance(e, FunctionRef):
        kind, pos = desc.position(e.name)
        element = desc.element_of(e.name)
        component = 0
        if element.value_shape:
            component = idx[0]
        if len(derivs) > 1:
            raise FormAnalysisError(
                "second derivatives are not supported", e.loc)
        return Terminal(kind, pos, component,
                        derivs[0] if derivs else None, side, loc=e.loc)
    if isinstance(e, (Add, Sub, Neg)):
        return _rebuild(e, lambda c: _scalar(c, idx, derivs, side, desc))
    if isinstance(e, Mul):
        sa = value_shape(e.a, desc.element_of, tdim)
        sb = value_shape(e.b, desc.element_of, tdim)
        if sa == () and sb == ():
            # keep a constant factor on the scalar side so a derivative
            # falls on the varying one
            if _is_constant(e.a) or not _is_constant(e.b):
                scalar_side, tensor_side = e.a, e.b
            else:
                scalar_side, tensor_side = e.b, e.a
        elif sa == ():
            scalar_side, tensor_side = e.a, e.b
        else:
            scalar_side, tensor_side = e.b, e.a
        if derivs:
            if not _is_constant(scalar_side):
                raise FormAnalysisError(
                    "cannot differentiate a product of varying factors; "
                    "expand the derivative by hand", e.loc)
            return Mul(_scalar(scalar_side, (), (), side, desc),
                       _scalar(tensor_side, idx, derivs, side, desc), loc=e.loc)
        return Mul(_scalar(scalar_side, (), (), side, desc),
                   _scalar(tensor_side, idx, (), side, desc), loc=e.loc)
    if isinstance(e, Pow):
        if derivs:
            if _is_constant(e.base):
                return Number(0.0)
            raise FormAnalysisError(
                "cannot differentiate a power; expand the derivative by hand",
                e.loc)
        return Pow(_scalar(e.base, (), (), side, desc), e.exponent, loc=e.loc)
    if isinstance(e, (Dot, Inner)):
        if derivs:
            raise FormAnalysisError(
                "cannot differentiate a contraction; expand the derivative "
                "by hand", e.loc)
        return _lower_contraction(e, idx, side, desc)
    if isinstance(e, Grad):
        return _scalar(e.a, idx[:-1], derivs + (idx[-1],), side, desc)
    if isinstance(e, Div):
        parts = [_scalar(e.a, (t,), derivs + (t,), side, desc)
                 for t in range(tdim)]
        return _sum(parts)
    if isinstance(e, SpatialDerivative):
        return _scalar(e.a, idx, derivs + (e.index,), side, desc)
    if isinstance(e, Component):
        return _scalar(e.a, (e.index,) + idx, derivs, side, desc)
    if isinstance(e, PosRestrict):
        return _scalar(e.a, idx, derivs, "+", desc)
    if isinstance(e, NegRestrict):
        return _scalar(e.a, idx, derivs, "-", desc)
    raise FormAnalysisError(f"unexpected node {type(e).__name__}",
                            getattr(e, "loc", None))


def _lower_contraction(e, idx, side, desc):
    tdim = desc.shape.topological_dimension
    sa = value_shape(e.a, desc.element_of, tdim)
    sb = value_shape(e.b, desc.element_of, tdim)
    if isinstance(e, Inner):
        parts = [Mul(_scalar(e.a, t, (), side, desc),
                     _scalar(e.b, t, (), side, desc))
                 for t in itertools.product(*(range(m) for m in sa))]
        return _sum(parts)
    if len(sa) == 1 and len(sb) == 1:
        parts = [Mul(_scalar(e.a, (t,), (), side, desc),
                     _scalar(e.b, (t,), (), side, desc))
                 for t in range(sa[0])]
    elif len(sa) == 2:
        parts = [Mul(_scalar(e.a, (idx[0], t), (), side, desc),
                     _scalar(e.b, (t,), (), side, desc))
                 for t in range(sb[0])]
    else:
        parts = [Mul(_scalar(e.a, (t,), (), side, desc),
                     _scalar(e.b, (t, idx[0]), (), side, desc))
                 for t in range(sa[0])]
    return _sum(parts)


def _sum(parts):
    out = parts[0]
    for p in parts[1:]:
        out = Add(out, p)
    return out


# -- monomial expansion --------------------------------------------------------

def expand_monomials(lowered):
    """Distribute a lowered tree into a list of (coefficient, factors).

    Each entry is a float scale and a tuple of Terminals whose product,
    scaled and summed over entries, equals the tree.  Raises
    FormAnalysisError on fractional powers, which have no monomial
    expansion.
    """
    if isinstance(lowered, Number):
        return [(lowered.value, ())]
    if isinstance(lowered, Terminal):
        return [(1.0, (lowered,))]
    if isinstance(lowered, Neg):
        return [(-c, f) for c, f in expand_monomials(lowered.a)]
    if isinstance(lowered, Add):
        return expand_monomials(lowered.a) + expand_monomials(lowered.b)
    if isinstance(lowered, Sub):
        return expand_monomials(lowered.a) \
            + [(-c, f) for c, f in expand_monomials(lowered.b)]
    if isinstance(lowered, Mul):
        out = []
        right = expand_monomials(lowered.b)
        for ca, fa in expand_monomials(lowered.a):
            for cb, fb in right:
                out.append((ca * cb, fa + fb))
        return out
    if isinstance(lowered, Pow):
        p = lowered.exponent
        if p != int(p) or p < 0:
            raise FormAnalysisError(
                f"no monomial expansion for exponent {p}",
                getattr(lowered, "loc", None))
        out = [(1.0, ())]
        base = expand_monomials(lowered.base)
        for _ in range(int(p)):
            out = [(c1 * c2, f1 + f2) for c1, f1 in out for c2, f2 in base]
        return out
    raise FormAnalysisError(
        f"unexpected node {type(lowered).__name__} in lowered tree",
        getattr(lowered, "loc", None))
