"""Exact polynomial algebra on triangles in barycentric monomial form.

A polynomial of degree ``d`` on a triangle is stored as a dense coefficient
vector over the monomials ``l1**a * l2**b * l3**c`` with ``a + b + c == d``.
Because ``l1 + l2 + l3 == 1`` every polynomial of degree ``<= d`` has a unique
homogeneous representation of this kind, and all integrals over triangles and
edges reduce to factorial formulas.  The coefficient form is independent of the
triangle geometry; geometry only enters through the area and the gradients of
the barycentric coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np


def dim(d: int) -> int:
    """Number of monomials of homogeneous degree ``d`` in three variables."""
    if d < 0:
        return 0
    return (d + 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def exponents(d: int) -> np.ndarray:
    """Exponent triples of degree ``d`` as an ``(dim(d), 3)`` integer array.

    Ordering: ``a`` descending, then ``b`` descending.  The first entry is
    ``(d, 0, 0)``.
    """
    rows = [(a, b, d - a - b) for a in range(d, -1, -1) for b in range(d - a, -1, -1)]
    out = np.array(rows, dtype=np.int64).reshape(-1, 3)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _index(d: int) -> dict:
    return {tuple(int(x) for x in row): i for i, row in enumerate(exponents(d))}


def monomial_index(a: int, b: int, c: int) -> int:
    return _index(a + b + c)[(a, b, c)]


def vertex_monomial(d: int, i: int) -> int:
    """Index of ``l_i**d``, the only monomial that is nonzero at vertex ``i``."""
    e = [0, 0, 0]
    e[i] = d
    return monomial_index(*e)


def _fact3(e) -> float:
    return float(factorial(int(e[0])) * factorial(int(e[1])) * factorial(int(e[2])))


def integrate_monomial(area: float, a: int, b: int, c: int) -> float:
    """``int_T l1**a l2**b l3**c dx = 2|T| a! b! c! / (a+b+c+2)!``."""
    if min(a, b, c) < 0:
        raise ValueError("exponents must be nonnegative")
    return 2.0 * area * _fact3((a, b, c)) / factorial(a + b + c + 2)


@lru_cache(maxsize=None)
def integral_weights(d: int) -> np.ndarray:
    """Integrals of the degree-``d`` monomials over a triangle of unit area."""
    w = np.array([2.0 * _fact3(e) / factorial(d + 2) for e in exponents(d)])
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def mass_matrix(d1: int, d2: int) -> np.ndarray:
    """``M[i, j] = int_T l^{e_i} l^{e_j} dx / |T|`` for degrees ``d1`` and ``d2``."""
    E1, E2 = exponents(d1), exponents(d2)
    M = np.empty((len(E1), len(E2)))
    denom = factorial(d1 + d2 + 2)
    for i, e in enumerate(E1):
        for j, f in enumerate(E2):
            M[i, j] = 2.0 * _fact3(e + f) / denom
    M.setflags(write=False)
    return M


@lru_cache(maxsize=None)
def multinomial(d: int) -> np.ndarray:
    """Coefficients of ``1 = (l1 + l2 + l3)**d`` in the degree-``d`` basis."""
    c = np.array([factorial(d) / _fact3(e) for e in exponents(d)])
    c.setflags(write=False)
    return c


@lru_cache(maxsize=None)
def deriv_matrix(d: int, i: int) -> np.ndarray:
    """Partial derivative with respect to ``l_i``: degree ``d`` to ``d-1``."""
    D = np.zeros((dim(d - 1), dim(d)))
    if d == 0:
        return D
    idx = _index(d - 1)
    for j, e in enumerate(exponents(d)):
        if e[i] > 0:
            f = list(int(x) for x in e)
            f[i] -= 1
            D[idx[tuple(f)], j] = e[i]
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def elevate_matrix(d: int, times: int = 1) -> np.ndarray:
    """Degree elevation, i.e. multiplication by ``(l1 + l2 + l3)**times``."""
    if times == 0:
        return np.eye(dim(d))
    E = np.zeros((dim(d + 1), dim(d)))
    idx = _index(d + 1)
    for j, e in enumerate(exponents(d)):
        for i in range(3):
            f = list(int(x) for x in e)
            f[i] += 1
            E[idx[tuple(f)], j] += 1.0
    if times > 1:
        E = elevate_matrix(d + 1, times - 1) @ E
    E.setflags(write=False)
    return E


def eval_matrix(d: int, bary: np.ndarray) -> np.ndarray:
    """Vandermonde-type matrix ``(npts, dim(d))`` of monomial values."""
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    E = exponents(d)
    return np.prod(bary[:, None, :] ** E[None, :, :], axis=2)


@lru_cache(maxsize=None)
def product_tensor(d1: int, d2: int) -> np.ndarray:
    """Sparse-in-spirit tensor ``P[k, i, j]`` with ``l^{e_i} l^{f_j} = l^{g_k}``."""
    idx = _index(d1 + d2)
    P = np.zeros((dim(d1 + d2), dim(d1), dim(d2)))
    for i, e in enumerate(exponents(d1)):
        for j, f in enumerate(exponents(d2)):
            P[idx[tuple(int(x) for x in e + f)], i, j] = 1.0
    P.setflags(write=False)
    return P


def multiply(p: np.ndarray, d1: int, q: np.ndarray, d2: int) -> np.ndarray:
    return np.einsum("kij,i,j->k", product_tensor(d1, d2), p, q)


# -- edges ---------------------------------------------------------------

LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))
"""Local edge ``i`` joins the two vertices other than vertex ``i`` (CCW)."""


@lru_cache(maxsize=None)
def edge_restriction(d: int, a: int, b: int) -> np.ndarray:
    """Restrict a triangle polynomial to the edge joining local vertices a, b.

    The result is expressed in the 1D basis ``l_a**m * l_b**(d-m)`` for
    ``m = d, d-1, ..., 0`` (coefficient of the monomial that equals one at
    ``a`` first).
    """
    opp = 3 - a - b
    R = np.zeros((d + 1, dim(d)))
    for j, e in enumerate(exponents(d)):
        if e[opp] == 0:
            R[d - e[a], j] = 1.0
    R.setflags(write=False)
    return R


@lru_cache(maxsize=None)
def edge_integral_weights(d: int) -> np.ndarray:
    """``int_e l_a**m l_b**(d-m) ds / |e| = m! (d-m)! / (d+1)!``."""
    w = np.array([factorial(m) * factorial(d - m) / factorial(d + 1) for m in range(d, -1, -1)])
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def edge_binomial(d: int) -> np.ndarray:
    """Coefficients of ``1 = (l_a + l_b)**d`` in the 1D edge basis."""
    c = np.array([factorial(d) / (factorial(m) * factorial(d - m)) for m in range(d, -1, -1)])
    c.setflags(write=False)
    return c


@lru_cache(maxsize=None)
def edge_mass_matrix(d1: int, d2: int) -> np.ndarray:
    M = np.empty((d1 + 1, d2 + 1))
    for i, m in enumerate(range(d1, -1, -1)):
        for j, n in enumerate(range(d2, -1, -1)):
            M[i, j] = factorial(m + n) * factorial(d1 + d2 - m - n) / factorial(d1 + d2 + 1)
    M.setflags(write=False)
    return M


def edge_eval_matrix(d: int, t: np.ndarray) -> np.ndarray:
    """Values of the 1D edge monomials at edge barycentric ``l_a = t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ms = np.arange(d, -1, -1)
    return t[:, None] ** ms[None, :] * (1.0 - t[:, None]) ** (d - ms)[None, :]


# -- geometry --------------------------------------------------------------

def triangle_geometry(P: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed area and barycentric gradients ``(3, 2)`` of a triangle ``(3, 2)``."""
    P = np.asarray(P, dtype=float)
    area, grads = batch_geometry(P[None])
    return float(area[0]), grads[0]


def batch_geometry(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`triangle_geometry` for an ``(n, 3, 2)`` array."""
    x0, x1, x2 = P[:, 0], P[:, 1], P[:, 2]
    e1 = x1 - x0
    e2 = x2 - x0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    grads = np.empty((len(P), 3, 2))
    # grad l_i = rot90(opposite edge vector) / det
    for i in range(3):
        a, b = LOCAL_EDGES[i]
        e = P[:, b] - P[:, a]
        grads[:, i, 0] = -e[:, 1] / det
        grads[:, i, 1] = e[:, 0] / det
    return 0.5 * det, grads


def gradient_matrices(d: int, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of ``d/dx`` and ``d/dy`` from degree ``d`` to ``d-1``.

    ``grads`` has shape ``(3, 2)`` or ``(n, 3, 2)``; the result has a matching
    leading batch axis.
    """
    D = np.stack([deriv_matrix(d, i) for i in range(3)])
    Dx = np.tensordot(grads[..., 0], D, axes=([-1], [0]))
    Dy = np.tensordot(grads[..., 1], D, axes=([-1], [0]))
    return Dx, Dy


# -- value types -----------------------------------------------------------

@dataclass(frozen=True)
class TrianglePoly:
    """A polynomial on one triangle, homogenized to a fixed degree."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (dim(self.degree),):
            raise ValueError(f"expected {dim(self.degree)} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, degree: int) -> "TrianglePoly":
        return cls(degree, np.zeros(dim(degree)))

    @classmethod
    def constant(cls, value: float, degree: int = 0) -> "TrianglePoly":
        return cls(degree, value * multinomial(degree))

    @classmethod
    def from_affine(cls, values_at_vertices) -> "TrianglePoly":
        """Degree-1 polynomial with prescribed vertex values."""
        v = np.asarray(values_at_vertices, dtype=float)
        return cls(1, np.array([v[0], v[1], v[2]]))

    def elevate(self, degree: int) -> "TrianglePoly":
        if degree < self.degree:
            raise ValueError("cannot lower the degree")
        return TrianglePoly(degree, elevate_matrix(self.degree, degree - self.degree) @ self.coeffs)

    def __add__(self, other: "TrianglePoly") -> "TrianglePoly":
        d = max(self.degree, other.degree)
        return TrianglePoly(d, self.elevate(d).coeffs + other.elevate(d).coeffs)

    def __sub__(self, other: "TrianglePoly") -> "TrianglePoly":
        return self + (-1.0) * other

    def __rmul__(self, s: float) -> "TrianglePoly":
        return TrianglePoly(self.degree, s * self.coeffs)

    def __mul__(self, other):
        if isinstance(other, TrianglePoly):
            return TrianglePoly(self.degree + other.degree,
                                multiply(self.coeffs, self.degree, other.coeffs, other.degree))
        return TrianglePoly(self.degree, self.coeffs * other)

    def __call__(self, bary) -> np.ndarray:
        return eval_matrix(self.degree, bary) @ self.coeffs

    def integrate(self, area: float) -> float:
        return float(area * integral_weights(self.degree) @ self.coeffs)

    def dlambda(self, i: int) -> "TrianglePoly":
        return TrianglePoly(max(self.degree - 1, 0), deriv_matrix(self.degree, i) @ self.coeffs
                            if self.degree > 0 else np.zeros(1))

    def grad(self, grads: np.ndarray) -> tuple["TrianglePoly", "TrianglePoly"]:
        if self.degree == 0:
            return TrianglePoly.zeros(0), TrianglePoly.zeros(0)
        Dx, Dy = gradient_matrices(self.degree, grads)
        return TrianglePoly(self.degree - 1, Dx @ self.coeffs), TrianglePoly(self.degree - 1, Dy @ self.coeffs)

    def value_at_vertex(self, i: int) -> float:
        return float(self.coeffs[vertex_monomial(self.degree, i)])


def divergence(v1: TrianglePoly, v2: TrianglePoly, grads: np.ndarray) -> TrianglePoly:
    """Divergence of the vector polynomial ``(v1, v2)`` on a triangle."""
    d = max(v1.degree, v2.degree)
    if d < 1:
        raise ValueError("divergence needs degree >= 1")
    Dx, Dy = gradient_matrices(d, grads)
    return TrianglePoly(d - 1, Dx @ v1.elevate(d).coeffs + Dy @ v2.elevate(d).coeffs)


def edge_moment(f: tuple[TrianglePoly, TrianglePoly], P: np.ndarray, edge: tuple[int, int],
                q: np.ndarray | None = None) -> float:
    """Exact ``int_e (f . n_e) q ds`` with ``n_e`` the outward unit normal of T.

    ``edge`` is a pair of local vertex indices; ``q`` holds 1D coefficients in
    the :func:`edge_restriction` basis for that vertex order (default: ``q = 1``).
    """
    P = np.asarray(P, dtype=float)
    a, b = edge
    t = P[b] - P[a]
    length = float(np.hypot(*t))
    opp = 3 - a - b
    n = np.array([t[1], -t[0]]) / length
    if np.dot(n, P[opp] - P[a]) > 0:
        n = -n
    d = max(f[0].degree, f[1].degree)
    R = edge_restriction(d, a, b)
    fn = R @ (n[0] * f[0].elevate(d).coeffs + n[1] * f[1].elevate(d).coeffs)
    if q is None:
        return float(length * edge_integral_weights(d) @ fn)
    q = np.asarray(q, dtype=float)
    return float(length * fn @ edge_mass_matrix(d, len(q) - 1) @ q)


# -- Lagrange basis --------------------------------------------------------

@dataclass(frozen=True)
class LagrangeBasis:
    """Nodal basis on the uniform principal lattice of degree ``k``.

    ``coeffs[:, j]`` are the monomial coefficients of basis function ``j``,
    which is dual to ``nodes[j]`` (barycentric coordinates).  Node ``j`` sits at
    ``exponents(k)[j] / k``.  ``kind[j]`` is 0 (vertex), 1 (edge), 2 (interior);
    ``entity[j]`` is the local vertex index, local edge index, or -1.
    """

    k: int
    nodes: np.ndarray
    coeffs: np.ndarray
    kind: np.ndarray
    entity: np.ndarray

    @property
    def size(self) -> int:
        return len(self.nodes)

    def polys(self) -> list[TrianglePoly]:
        return [TrianglePoly(self.k, self.coeffs[:, j]) for j in range(self.size)]


@lru_cache(maxsize=None)
def lagrange_basis(k: int) -> LagrangeBasis:
    if k < 1:
        raise ValueError("Lagrange basis needs k >= 1")
    E = exponents(k)
    nodes = E / k
    V = eval_matrix(k, nodes)
    C = np.linalg.solve(V, np.eye(len(E)))
    kind = np.empty(len(E), dtype=np.int64)
    entity = np.full(len(E), -1, dtype=np.int64)
    for j, e in enumerate(E):
        nz = int(np.count_nonzero(e))
        if nz == 1:
            kind[j] = 0
            entity[j] = int(np.argmax(e))
        elif nz == 2:
            kind[j] = 1
            entity[j] = int(np.argmin(e))
        else:
            kind[j] = 2
    for arr in (nodes, C, kind, entity):
        arr.setflags(write=False)
    return LagrangeBasis(k, nodes, C, kind, entity)


@lru_cache(maxsize=None)
def edge_lagrange_weights(k: int) -> np.ndarray:
    """``int_e phi_m ds / |e|`` for the 1D uniform-node Lagrange basis, m = k..0.

    Entry ``m`` corresponds to the node with ``l_a = m / k``.
    """
    t = np.arange(k, -1, -1) / k
    V = edge_eval_matrix(k, t)
    C = np.linalg.solve(V, np.eye(k + 1))
    w = edge_integral_weights(k) @ C
    w.setflags(write=False)
    return w


# -- sampling and quadrature helpers --------------------------------------

@lru_cache(maxsize=None)
def lattice_points(m: int) -> np.ndarray:
    pts = exponents(m) / m
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=None)
def triangle_quadrature(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss-Legendre rule with ``n*n`` points.

    Returns barycentric points ``(n*n, 3)`` and weights summing to one (to be
    multiplied by the triangle area).  Exact for polynomials of degree
    ``2n - 2``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    # collapse at vertex 0: l1 = S*(1-T), l2 = S*T, l0 = 1 - S
    l1 = S * (1.0 - T)
    l2 = S * T
    l0 = 1.0 - S
    bary = np.stack([l0.ravel(), l1.ravel(), l2.ravel()], axis=1)
    weights = (2.0 * WS * WT * S).ravel()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


@lru_cache(maxsize=None)
def line_quadrature(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1]: points ``t`` (value of ``l_a``) and weights."""
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (1.0 - x)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _graded_nodes(n: int, levels: int, ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [0, 1] refined geometrically toward 0."""
    x, w = np.polynomial.legendre.leggauss(n)
    cuts = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
    pts, wts = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        pts.append(a + (b - a) * 0.5 * (x + 1.0))
        wts.append((b - a) * 0.5 * w)
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=None)
def graded_triangle_quadrature(n: int, levels: int = 14, ratio: float = 0.15):
    """Collapsed rule graded toward vertex 0, for integrands singular there."""
    s, ws = _graded_nodes(n, levels, ratio)
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    S, T = np.meshgrid(s, t, indexing="ij")
    WS, WT = np.meshgrid(ws, wt, indexing="ij")
    bary = np.stack([(1.0 - S).ravel(), (S * (1.0 - T)).ravel(), (S * T).ravel()], axis=1)
    weights = (2.0 * WS * WT * S).ravel()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


@lru_cache(maxsize=None)
def graded_line_quadrature(n: int, levels: int = 14, ratio: float = 0.15):
    """Rule on [0, 1] in ``t = l_a`` graded toward the endpoint ``b`` (t = 0)."""
    t, w = _graded_nodes(n, levels, ratio)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


# -- piecewise fields --------------------------------------------------------

class PiecewisePolynomialField:
    """Scalar or 2-vector polynomial data per triangle.

    ``coeffs`` has shape ``(n_triangles, components, dim(degree))``.
    """

    def __init__(self, mesh, degree: int, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[:, None, :]
        if c.shape[0] != mesh.n_triangles or c.shape[2] != dim(degree) or c.shape[1] not in (1, 2):
            raise ValueError(f"coefficient array of shape {c.shape} does not fit degree {degree} "
                             f"on {mesh.n_triangles} triangles")
        self.mesh = mesh
        self.degree = degree
        self.coeffs = c

    @property
    def components(self) -> int:
        return self.coeffs.shape[1]

    def poly(self, t: int, comp: int = 0) -> TrianglePoly:
        return TrianglePoly(self.degree, self.coeffs[t, comp])

    def evaluate(self, t: int, bary) -> np.ndarray:
        """Values ``(components, npts)`` on triangle ``t``."""
        return self.coeffs[t] @ eval_matrix(self.degree, bary).T

    def __add__(self, other: "PiecewisePolynomialField") -> "PiecewisePolynomialField":
        d = max(self.degree, other.degree)
        return PiecewisePolynomialField(self.mesh, d, self.elevate(d).coeffs + other.elevate(d).coeffs)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, s: float) -> "PiecewisePolynomialField":
        return PiecewisePolynomialField(self.mesh, self.degree, s * self.coeffs)

    def elevate(self, degree: int) -> "PiecewisePolynomialField":
        if degree == self.degree:
            return self
        E = elevate_matrix(self.degree, degree - self.degree)
        return PiecewisePolynomialField(self.mesh, degree, self.coeffs @ E.T)

    def gradient(self) -> np.ndarray:
        """Coefficients ``(nT, components, 2, dim(degree-1))`` of the gradient."""
        Dx, Dy = gradient_matrices(self.degree, self.mesh.bary_grads)
        gx = np.einsum("tij,tcj->tci", Dx, self.coeffs)
        gy = np.einsum("tij,tcj->tci", Dy, self.coeffs)
        return np.stack([gx, gy], axis=2)

    def divergence(self) -> "PiecewisePolynomialField":
        if self.components != 2:
            raise ValueError("divergence needs a vector field")
        g = self.gradient()
        return PiecewisePolynomialField(self.mesh, self.degree - 1, g[:, 0, 0] + g[:, 1, 1])

    def integrals(self) -> np.ndarray:
        """Per-triangle integrals ``(nT, components)``."""
        return self.mesh.areas[:, None] * (self.coeffs @ integral_weights(self.degree))

    def vertex_value(self, t: int, z: int, comp: int = 0) -> float:
        p = self.mesh.local_index(t, z)
        return float(self.coeffs[t, comp, vertex_monomial(self.degree, p)])

    def l2_inner(self, other: "PiecewisePolynomialField", tris=None) -> float:
        M = mass_matrix(self.degree, other.degree)
        tris = np.arange(self.mesh.n_triangles) if tris is None else np.asarray(tris)
        return float(np.einsum("t,tci,ij,tcj->", self.mesh.areas[tris], self.coeffs[tris], M,
                               other.coeffs[tris]))

    def lp_norm(self, p: float = 2, tris=None) -> float:
        return piecewise_lp_norm(self.mesh, self.degree, self.coeffs, p, tris)

    def grad_lp_norm(self, p: float = 2, tris=None) -> float:
        if self.degree == 0:
            return 0.0
        g = self.gradient()
        nT = g.shape[0]
        return piecewise_lp_norm(self.mesh, self.degree - 1, g.reshape(nT, -1, g.shape[-1]), p, tris)

    def csv_rows(self):
        E = exponents(self.degree)
        for t in range(self.coeffs.shape[0]):
            for c in range(self.components):
                for j, e in enumerate(E):
                    yield t, c, int(e[0]), int(e[1]), int(e[2]), float(self.coeffs[t, c, j])


def piecewise_lp_norm(mesh, degree: int, coeffs: np.ndarray, p: float = 2, tris=None) -> float:
    """L^p norm of piecewise polynomial data ``(nT, ncomp, dim(degree))``.

    The pointwise norm of a vector is Euclidean (Frobenius for gradients).
    ``p = 2`` is exact.  ``p = inf`` samples a lattice of order ``4 * max(degree, 1)``;
    other ``p`` use a collapsed Gauss rule on ``|f|^p``.
    """
    tris = np.arange(mesh.n_triangles) if tris is None else np.asarray(tris, dtype=np.int64)
    if len(tris) == 0:
        return 0.0
    c = coeffs[tris]
    if p == 2:
        M = mass_matrix(degree, degree)
        val = np.einsum("t,tci,ij,tcj->", mesh.areas[tris], c, M, c)
        return float(np.sqrt(max(val, 0.0)))
    if np.isinf(p):
        pts = lattice_points(4 * max(degree, 1))
        vals = np.einsum("tci,qi->tcq", c, eval_matrix(degree, pts))
        return float(np.sqrt((vals ** 2).sum(axis=1)).max())
    bary, w = triangle_quadrature(max(degree + 4, 8))
    vals = np.einsum("tci,qi->tcq", c, eval_matrix(degree, bary))
    mag = np.sqrt((vals ** 2).sum(axis=1))
    return float((mesh.areas[tris] @ (mag ** p @ w)) ** (1.0 / p))
