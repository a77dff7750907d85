"""Composable piecewise homeomorphisms of the plane and finite-difference Jacobians."""
from __future__ import annotations

import numpy as np

from .errors import DomainError


class Layer:
    """One homeomorphism in a stack.  Identity outside its region of action."""

    name = "layer"

    def __call__(self, pts):
        raise NotImplementedError

    def domain(self, pts):
        return np.ones(len(np.atleast_2d(pts)), dtype=bool)


class IdentityLayer(Layer):
    name = "identity"

    def __call__(self, pts):
        return np.array(pts, dtype=float, copy=True)


class LinearLayer(Layer):
    name = "linear"

    def __init__(self, matrix, offset=(0.0, 0.0)):
        self.matrix = np.asarray(matrix, dtype=float)
        self.offset = np.asarray(offset, dtype=float)

    def __call__(self, pts):
        return np.atleast_2d(pts) @ self.matrix.T + self.offset


class FunctionLayer(Layer):
    def __init__(self, fn, domain=None, name="function"):
        self.fn = fn
        self._domain = domain
        self.name = name

    def __call__(self, pts):
        return self.fn(np.atleast_2d(np.asarray(pts, dtype=float)))

    def domain(self, pts):
        if self._domain is None:
            return super().domain(pts)
        return self._domain(np.atleast_2d(pts))


class PlaneMap:
    """Stack of layers applied first to last: PlaneMap([a, b])(x) == b(a(x))."""

    def __init__(self, layers=(), name=""):
        self.layers = list(layers)
        self.name = name

    @classmethod
    def identity(cls):
        return cls([], name="identity")

    def __call__(self, pts):
        out = np.atleast_2d(np.asarray(pts, dtype=float))
        for layer in self.layers:
            out = layer(out)
        return out

    def then(self, other: "PlaneMap") -> "PlaneMap":
        return PlaneMap(self.layers + list(other.layers), name=(self.name + "+" + other.name).strip("+"))

    def domain(self, pts):
        if not self.layers:
            return np.ones(len(np.atleast_2d(pts)), dtype=bool)
        return self.layers[0].domain(pts)

    def prefix(self, k: int) -> "PlaneMap":
        return PlaneMap(self.layers[:k], name=self.name)


def as_plane_map(obj) -> PlaneMap:
    if isinstance(obj, PlaneMap):
        return obj
    if isinstance(obj, Layer):
        return PlaneMap([obj])
    if callable(obj):
        return PlaneMap([FunctionLayer(obj)])
    raise TypeError("cannot treat %r as a plane map" % (obj,))


def numerical_jacobian(plane_map, x, h=1e-5, retries: int = 1, return_matrix: bool = False):
    """Central-difference determinant of the derivative at each point of x.

    When a stencil point leaves the map's domain the step is cut by 4 for
    that point; if that is still not enough a DomainError is raised.
    """
    pm = as_plane_map(plane_map)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(x),)).copy()
    for attempt in range(retries + 1):
        stencil = _stencil(x, h)
        inside = pm.domain(stencil.reshape(-1, 2)).reshape(4, -1).all(axis=0)
        if inside.all():
            break
        if attempt == retries:
            raise DomainError("finite-difference stencil leaves the domain at %d points" % int((~inside).sum()))
        h = np.where(inside, h, h / 4.0)
    vals = pm(stencil.reshape(-1, 2)).reshape(4, -1, 2)
    dx = (vals[0] - vals[1]) / (2 * h[:, None])
    dy = (vals[2] - vals[3]) / (2 * h[:, None])
    det = dx[:, 0] * dy[:, 1] - dx[:, 1] * dy[:, 0]
    if return_matrix:
        return det, np.stack([dx, dy], axis=-1)
    return det


def _stencil(x, h):
    e1 = np.zeros_like(x)
    e2 = np.zeros_like(x)
    e1[:, 0] = h
    e2[:, 1] = h
    return np.stack([x + e1, x - e1, x + e2, x - e2])


def residual_summary(values) -> dict:
    v = np.abs(np.asarray(values, dtype=float))
    if len(v) == 0:
        return {"median": float("nan"), "p90": float("nan"), "max": float("nan"), "count": 0}
    return {"median": float(np.median(v)), "p90": float(np.percentile(v, 90)), "max": float(v.max()),
            "count": int(len(v))}
