"""Linear moments of velocity fields used by the projection operators.

Every operator in this package touches an input field ``v`` only through

* ``tri``:  ``int_T v_c l^alpha dx`` for the degree-``k`` monomials,
* ``div``:  ``int_T div(v) l^alpha dx`` for the degree-``k-1`` monomials,
* ``edge``: ``int_e v_c l_a^m l_b^(k-m) ds`` with ``(a, b) = mesh.edges[e]``.

These are exact for discrete fields and use collapsed Gauss rules for
closed-form fields.  Moments are linear in the field, so differences of
moment sets represent differences of fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Triangulation
from .polynomials import (
    dim,
    edge_binomial,
    edge_mass_matrix,
    edge_restriction,
    eval_matrix,
    gradient_matrices,
    graded_line_quadrature,
    graded_triangle_quadrature,
    line_quadrature,
    mass_matrix,
    PiecewisePolynomialField,
    multinomial,
    triangle_quadrature,
)

DEFAULT_QUAD = 12


@dataclass(frozen=True)
class FieldMoments:
    k: int
    tri: np.ndarray
    div: np.ndarray
    edge: np.ndarray

    def __add__(self, other: "FieldMoments") -> "FieldMoments":
        return FieldMoments(self.k, self.tri + other.tri, self.div + other.div, self.edge + other.edge)

    def __sub__(self, other: "FieldMoments") -> "FieldMoments":
        return FieldMoments(self.k, self.tri - other.tri, self.div - other.div, self.edge - other.edge)

    def __rmul__(self, s: float) -> "FieldMoments":
        return FieldMoments(self.k, s * self.tri, s * self.div, s * self.edge)

    def edge_flux(self, mesh: Triangulation) -> np.ndarray:
        """``int_e v . n_e ds`` with ``n_e = mesh.edge_normals[e]``."""
        w = edge_binomial(self.k)
        integ = self.edge @ w
        return np.einsum("ec,ec->e", integ, mesh.edge_normals)

    def div_means(self) -> np.ndarray:
        """``int_T div v dx`` per triangle (weights of ``(l1+l2+l3)^(k-1)``)."""
        return self.div @ multinomial(self.k - 1)


def discrete_moments(mesh: Triangulation, k: int, coeffs: np.ndarray) -> FieldMoments:
    """Exact moments of a piecewise ``P^k`` vector field ``(nT, 2, dim(k))``."""
    A = mesh.areas
    tri = A[:, None, None] * (coeffs @ mass_matrix(k, k).T)
    Dx, Dy = gradient_matrices(k, mesh.bary_grads)
    dv = np.einsum("tij,tj->ti", Dx, coeffs[:, 0]) + np.einsum("tij,tj->ti", Dy, coeffs[:, 1])
    div = A[:, None] * (dv @ mass_matrix(k - 1, k - 1).T)
    edge = np.empty((mesh.n_edges, 2, k + 1))
    Me = edge_mass_matrix(k, k)
    t0 = mesh.edge_triangles[:, 0]
    for e in range(mesh.n_edges):
        t = int(t0[e])
        a = mesh.local_index(t, int(mesh.edges[e, 0]))
        b = mesh.local_index(t, int(mesh.edges[e, 1]))
        c1 = coeffs[t] @ edge_restriction(k, a, b).T
        edge[e] = mesh.edge_lengths[e] * (c1 @ Me.T)
    return FieldMoments(k, tri, div, edge)


def _collapse_vertex(field, mesh: Triangulation) -> np.ndarray:
    """Per triangle, the local vertex at the field's singular point, else -1."""
    out = np.full(mesh.n_triangles, -1, dtype=np.int64)
    sp_ = getattr(field, "singular_point", None)
    if sp_ is None:
        return out
    d = np.hypot(*(mesh.vertices - np.asarray(sp_)).T)
    z = int(np.argmin(d))
    if d[z] > 1e-12:
        return out
    for t in mesh.vertex_to_triangles[z]:
        out[t] = mesh.local_index(int(t), z)
    return out


def triangle_rule_groups(mesh: Triangulation, field, n: int = DEFAULT_QUAD, tris=None):
    """Yield ``(triangles, bary, weights, points)`` groups sharing one rule.

    Triangles with a vertex at the field's ``singular_point`` get a rule
    graded toward that vertex; weights sum to one per triangle.
    """
    cv = _collapse_vertex(field, mesh)
    P = mesh.vertices[mesh.triangles]
    keep = np.ones(mesh.n_triangles, dtype=bool)
    if tris is not None:
        keep[:] = False
        keep[np.asarray(tris, dtype=np.int64)] = True
    for s in (-1, 0, 1, 2):
        sel = np.flatnonzero((cv == s) & keep)
        if not len(sel):
            continue
        if s < 0:
            b, w = triangle_quadrature(n)
        else:
            b0, w = graded_triangle_quadrature(n)
            b = np.empty_like(b0)
            b[:, np.roll(np.arange(3), -s)] = b0
        yield sel, b, w, np.einsum("qi,tij->tqj", b, P[sel])


def quadrature_moments(mesh: Triangulation, k: int, field, n: int = DEFAULT_QUAD) -> FieldMoments:
    """Moments of a closed-form field with ``values`` and ``divergence`` methods.

    Triangles and edges touching the field's ``singular_point`` (when it is a
    mesh vertex) use rules graded toward that vertex.
    """
    nT = mesh.n_triangles
    tri = np.empty((nT, 2, dim(k)))
    div = np.empty((nT, dim(k - 1)))
    for sel, b, w, X in triangle_rule_groups(mesh, field, n):
        Ek, Ek1 = eval_matrix(k, b), eval_matrix(k - 1, b)
        x, y = X[..., 0].ravel(), X[..., 1].ravel()
        vals = np.asarray(field.values(x, y)).reshape(2, len(sel), -1)
        dvals = np.asarray(field.divergence(x, y)).reshape(len(sel), -1)
        A = mesh.areas[sel]
        tri[sel] = A[:, None, None] * np.einsum("ctq,q,qa->tca", vals, w, Ek)
        div[sel] = A[:, None] * np.einsum("tq,q,qa->ta", dvals, w, Ek1)

    edge = np.empty((mesh.n_edges, 2, k + 1))
    ms = np.arange(k, -1, -1)
    sp_ = getattr(field, "singular_point", None)
    Va = mesh.vertices[mesh.edges[:, 0]]
    Vb = mesh.vertices[mesh.edges[:, 1]]
    # orientation: 0 plain, 1 singular at b (t -> 0), 2 singular at a (t -> 1)
    kind = np.zeros(mesh.n_edges, dtype=np.int64)
    if sp_ is not None:
        kind[np.hypot(*(Vb - sp_).T) < 1e-12] = 1
        kind[np.hypot(*(Va - sp_).T) < 1e-12] = 2
    for o in (0, 1, 2):
        sel = np.flatnonzero(kind == o)
        if not len(sel):
            continue
        if o == 0:
            tl, wl = line_quadrature(n)
        else:
            tl, wl = graded_line_quadrature(n)
            if o == 2:
                tl = 1.0 - tl
        basis = tl[:, None] ** ms[None, :] * (1.0 - tl[:, None]) ** (k - ms)[None, :]
        X = tl[None, :, None] * Va[sel, None, :] + (1.0 - tl)[None, :, None] * Vb[sel, None, :]
        vals = np.asarray(field.values(X[..., 0].ravel(), X[..., 1].ravel())).reshape(2, len(sel), -1)
        edge[sel] = mesh.edge_lengths[sel, None, None] * np.einsum("ceq,q,qm->ecm", vals, wl, basis)
    return FieldMoments(k, tri, div, edge)


def moments_of(mesh: Triangulation, k: int, v, n: int = DEFAULT_QUAD) -> FieldMoments:
    """Dispatch on the field type.

    ``v`` may be a :class:`FieldMoments`, a ``(nT, 2, dim(k))`` coefficient
    array, a :class:`PiecewisePolynomialField`, or a closed-form field.
    """
    if isinstance(v, FieldMoments):
        return v
    if isinstance(v, PiecewisePolynomialField):
        return discrete_moments(mesh, k, v.elevate(k).coeffs)
    if isinstance(v, np.ndarray):
        return discrete_moments(mesh, k, v)
    return quadrature_moments(mesh, k, v, n)


def field_values_on(mesh: Triangulation, field, t: int, bary) -> np.ndarray:
    """Closed-form field values ``(2, npts)`` at barycentric points of ``t``."""
    X = np.asarray(bary) @ mesh.vertices[mesh.triangles[t]]
    return np.asarray(field.values(X[:, 0], X[:, 1]))


def _pointwise(vals: np.ndarray) -> np.ndarray:
    """Euclidean (Frobenius) magnitude over the leading component axes."""
    return np.sqrt((vals.reshape(-1, vals.shape[-2], vals.shape[-1]) ** 2).sum(axis=0))


def _combine(local: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return float(local.max()) if len(local) else 0.0
    return float((local ** p).sum() ** (1.0 / p))


def error_norms(mesh: Triangulation, k: int, coeffs: np.ndarray, field, p: float = 2, j: int = 0,
                n: int = DEFAULT_QUAD, tris=None) -> tuple[float, np.ndarray]:
    """``||grad^j (v - v_h)||_{L^p}`` globally and per triangle.

    ``coeffs`` are ``(nT, 2, dim(k))`` coefficients of ``v_h``; ``field`` is a
    closed-form field (``None`` means ``v = 0``).  ``p = inf`` is the maximum
    over the quadrature points.  Returns ``(global, local)`` where ``local``
    has one entry per triangle (zero outside ``tris``).
    """
    local = np.zeros(mesh.n_triangles)
    gx, gy = gradient_matrices(k, mesh.bary_grads) if j == 1 else (None, None)
    for sel, b, w, X in triangle_rule_groups(mesh, field, n, tris):
        x, y = X[..., 0].ravel(), X[..., 1].ravel()
        if j == 0:
            vh = np.einsum("tca,qa->ctq", coeffs[sel], eval_matrix(k, b))
            v = np.zeros_like(vh) if field is None else np.asarray(field.values(x, y)).reshape(vh.shape)
        else:
            Ek1 = eval_matrix(k - 1, b)
            dx = np.einsum("tab,tcb,qa->ctq", gx[sel], coeffs[sel], Ek1)
            dy = np.einsum("tab,tcb,qa->ctq", gy[sel], coeffs[sel], Ek1)
            vh = np.stack([dx, dy], axis=1)
            v = np.zeros_like(vh) if field is None else \
                np.asarray(field.jacobian(x, y)).reshape(vh.shape)
        mag = _pointwise(v - vh)
        if np.isinf(p):
            local[sel] = mag.max(axis=1)
        else:
            local[sel] = (mesh.areas[sel] * (mag ** p @ w)) ** (1.0 / p)
    return _combine(local, p), local


def field_norms(mesh: Triangulation, field, tris, p: float = 2, n: int = DEFAULT_QUAD) -> tuple[float, float, float]:
    """``(||v||, ||grad v||, ||div v||)`` in ``L^p`` of a closed-form field on a triangle set."""
    tris = np.asarray(tris, dtype=np.int64)
    if len(tris) == 0:
        return 0.0, 0.0, 0.0
    parts: list[list[np.ndarray]] = [[], [], []]
    for sel, b, w, X in triangle_rule_groups(mesh, field, n, tris):
        x, y = X[..., 0].ravel(), X[..., 1].ravel()
        arrs = (np.asarray(field.values(x, y)).reshape(2, len(sel), -1),
                np.asarray(field.jacobian(x, y)).reshape(2, 2, len(sel), -1),
                np.asarray(field.divergence(x, y)).reshape(1, len(sel), -1))
        for arr, out in zip(arrs, parts):
            mag = _pointwise(arr)
            if np.isinf(p):
                out.append(mag.max(axis=1))
            else:
                out.append((mesh.areas[sel] * (mag ** p @ w)) ** (1.0 / p))
    a, g, d = (_combine(np.concatenate(o), p) for o in parts)
    return a, g, d


def sobolev_norm(mesh: Triangulation, field, tris, p: float = 2, n: int = DEFAULT_QUAD) -> float:
    """``||v||_{W^{1,p}} = (||v||^p + ||grad v||^p)^(1/p)`` (maximum for ``p = inf``)."""
    a, g, _ = field_norms(mesh, field, tris, p, n)
    return max(a, g) if np.isinf(p) else float((a ** p + g ** p) ** (1.0 / p))
