"""Quadrature on reference simplices.

Rules are built by collapsing a tensor product of Gauss-Legendre
points onto the simplex (the Duffy substitution), with the point
count per direction chosen from the target degree so the stated
polynomial degree is integrated exactly.  Rules are deterministic:
the same shape and degree always produce the same points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import ReferenceShape


@dataclass(frozen=True)
class QuadratureRule:
    """Points (npts, tdim) and weights (npts,) on a reference shape,
    exact for polynomials up to the stated degree."""

    shape: ReferenceShape
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def num_points(self):
        return self.points.shape[0]


def _gauss_01(n):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def quadrature_rule(shape, degree):
    """Build a rule on the reference cell of the given shape.

    The collapsed coordinates pick up the simplex Jacobian factors
    (1-v), (1-w)..., which raises the needed one dimensional degree;
    ceil((degree + tdim) / 2) Gauss points per direction cover it.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be non-negative, got {degree}")
    tdim = shape.topological_dimension
    n = max(1, math.ceil((degree + tdim) / 2))
    x, w = _gauss_01(n)

    if tdim == 1:
        points = x.reshape(-1, 1)
        weights = w
    elif tdim == 2:
        u, v = np.meshgrid(x, x, indexing="ij")
        wu, wv = np.meshgrid(w, w, indexing="ij")
        points = np.column_stack([(u * (1.0 - v)).ravel(), v.ravel()])
        weights = (wu * wv * (1.0 - v)).ravel()
    elif tdim == 3:
        u, v, t = np.meshgrid(x, x, x, indexing="ij")
        wu, wv, wt = np.meshgrid(w, w, w, indexing="ij")
        points = np.column_stack([
            (u * (1.0 - v) * (1.0 - t)).ravel(),
            (v * (1.0 - t)).ravel(),
            t.ravel(),
        ])
        weights = (wu * wv * wt * (1.0 - v) * (1.0 - t) ** 2).ravel()
    else:
        raise ValueError(f"unsupported shape {shape.name}")
    return QuadratureRule(shape, degree, points, weights)


def facet_quadrature(shape, local_facet, degree):
    """Rule on one facet of the reference cell.

    Returns (points, weights): points (npts, tdim) embedded in the
    cell's reference coordinates, weights summing to the reference
    facet measure.  For interval cells the facet is a point and the
    rule is a single unit weight.
    """
    tdim = shape.topological_dimension
    facet_vertices = shape.facet_local_vertices(local_facet)
    ref = shape.reference_vertices
    origin = ref[facet_vertices[0]]
    if tdim == 1:
        return origin.reshape(1, 1).copy(), np.array([1.0])
    from .mesh import _SHAPES_BY_DIM
    facet_rule = quadrature_rule(_SHAPES_BY_DIM[tdim - 1], degree)
    spans = ref[list(facet_vertices[1:])] - origin      # (tdim-1, tdim)
    points = origin + facet_rule.points @ spans
    return points, facet_rule.weights.copy()
