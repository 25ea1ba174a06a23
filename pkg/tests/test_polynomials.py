from math import factorial

import numpy as np
import pytest

from svfortin.polynomials import (PiecewisePolynomialField, TrianglePoly, dim, divergence, edge_moment,
                                  edge_restriction, elevate_matrix, eval_matrix, exponents,
                                  integrate_monomial, lagrange_basis, monomial_index, multinomial,
                                  triangle_geometry)
from svfortin.mesh import Triangulation, generate_mesh

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SKEW = np.array([[0.2, -0.1], [1.3, 0.4], [0.5, 1.1]])


def _bary(P, xy):
    """Barycentric coordinates of points ``xy`` (n, 2) in triangle ``P``."""
    T = np.column_stack([P[1] - P[0], P[2] - P[0]])
    l12 = np.linalg.solve(T, (np.asarray(xy) - P[0]).T)
    return np.column_stack([1 - l12.sum(0), l12[0], l12[1]])


def _affine(P, d, f):
    """Degree-``d`` coefficients of a polynomial ``f(x, y)`` by exact interpolation."""
    nodes = exponents(d) / max(d, 1)
    xy = nodes @ P
    vals = f(xy[:, 0], xy[:, 1])
    return TrianglePoly(d, np.linalg.solve(eval_matrix(d, nodes), vals))


def test_integrate_monomial_examples():
    assert integrate_monomial(0.5, 0, 0, 0) == pytest.approx(0.5)
    assert integrate_monomial(0.5, 1, 0, 0) == pytest.approx(0.5 / 3)
    assert integrate_monomial(0.5, 1, 1, 0) == pytest.approx(0.5 / 12)


@pytest.mark.parametrize("e", [(2, 1, 0), (3, 0, 2), (1, 1, 1), (4, 2, 0)])
def test_integrate_monomial_against_quadrature(e):
    from scipy import integrate
    a, b, c = e
    val, _ = integrate.dblquad(lambda y, x: x ** b * y ** c * (1 - x - y) ** a, 0, 1, 0, lambda x: 1 - x)
    assert integrate_monomial(0.5, a, b, c) == pytest.approx(val, rel=1e-10)
    assert integrate_monomial(1.0, a, b, c) == pytest.approx(
        2 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2))


def test_divergence_examples():
    area, grads = triangle_geometry(SKEW)
    vx = _affine(SKEW, 1, lambda x, y: x)
    vy = _affine(SKEW, 1, lambda x, y: y)
    d = divergence(vx, vy, grads)
    assert np.allclose(d.coeffs, 2 * multinomial(0))
    d = divergence(-1.0 * vy, vx, grads)
    assert np.allclose(d.coeffs, 0, atol=1e-14)
    _, g = triangle_geometry(REF)
    v1 = _affine(REF, 2, lambda x, y: x ** 2)
    d = divergence(v1, TrianglePoly.zeros(2), g)
    pts = np.array([[0.2, 0.2], [0.1, 0.6], [0.5, 0.3], [0.3, 0.1], [0.25, 0.5]])
    h = 1e-6
    fd = ((pts[:, 0] + h) ** 2 - (pts[:, 0] - h) ** 2) / (2 * h)
    assert np.allclose(d(_bary(REF, pts)), fd, atol=1e-8)
    assert np.allclose(d(_bary(REF, pts)), 2 * pts[:, 0], atol=1e-13)


def test_edge_moment_examples():
    one = TrianglePoly.constant(1.0)
    zero = TrianglePoly.zeros(0)
    assert edge_moment((one, zero), REF, (2, 0)) == pytest.approx(-1.0)
    # bubble l0 * l2 on the edge between local vertices 0 and 2, times its normal
    b = TrianglePoly(2, np.eye(dim(2))[monomial_index(1, 0, 1)])
    n = np.array([-1.0, 0.0])
    m = edge_moment((n[0] * b, n[1] * b), REF, (0, 2))
    assert m == pytest.approx(1 / 6)
    P = SKEW
    t = P[2] - P[0]
    tx, ty = t / np.linalg.norm(t)
    m = edge_moment((tx * b, ty * b), P, (0, 2), q=np.array([0.3, -1.2, 2.0]))
    assert m == pytest.approx(0.0, abs=1e-14)


def test_lagrange_basis_examples():
    b1 = lagrange_basis(1)
    assert b1.size == 3 and list(b1.kind) == [0, 0, 0]
    b4 = lagrange_basis(4)
    assert b4.size == 15
    assert [int((b4.kind == i).sum()) for i in range(3)] == [3, 9, 3]
    assert np.allclose(b4.coeffs.sum(axis=1), multinomial(4))
    assert np.allclose(eval_matrix(4, b4.nodes) @ b4.coeffs, np.eye(15), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 4, 5])
def test_lagrange_reproduces_polynomials(k, rng):
    p = TrianglePoly(k, rng.standard_normal(dim(k)))
    b = lagrange_basis(k)
    back = b.coeffs @ p(b.nodes)
    assert np.allclose(back, p.coeffs, atol=1e-11)


def test_divergence_of_gradient_is_laplacian(rng):
    _, g = triangle_geometry(SKEW)
    p = TrianglePoly(4, rng.standard_normal(dim(4)))
    gx, gy = p.grad(g)
    lap = gx.grad(g)[0] + gy.grad(g)[1]
    assert np.allclose(divergence(gx, gy, g).coeffs, lap.coeffs, atol=1e-10)


def test_edge_moments_cancel_across_interior_edge(rng):
    m = generate_mesh("crisscross", 1)
    f = PiecewisePolynomialField(m, 1, np.zeros((4, 2, 3)))
    from svfortin.fespaces import VelocitySpace
    V = VelocitySpace(m, 3)
    u = rng.standard_normal(V.ambient_dim)
    c = V.coefficients(u)
    for e in np.flatnonzero(~m.boundary_edge):
        tot = 0.0
        for t in m.edge_triangles[e]:
            a, b = (m.local_index(t, int(z)) for z in m.edges[e])
            tot += edge_moment((TrianglePoly(3, c[t, 0]), TrianglePoly(3, c[t, 1])),
                               m.vertices[m.triangles[t]], (a, b))
        assert abs(tot) < 1e-13
    assert f.components == 2


def test_edge_restriction_orientation():
    p = TrianglePoly(2, np.eye(dim(2))[monomial_index(2, 0, 0)])
    R = edge_restriction(2, 0, 1)
    assert np.allclose(R @ p.coeffs, [1, 0, 0])


def test_elevation_preserves_values(rng):
    p = TrianglePoly(3, rng.standard_normal(dim(3)))
    b = rng.dirichlet(np.ones(3), size=6)
    assert np.allclose(p.elevate(6)(b), p(b))
    assert elevate_matrix(3, 3).shape == (dim(6), dim(3))


def test_piecewise_field_csv_rows():
    m = Triangulation(REF, [(0, 1, 2)])
    f = PiecewisePolynomialField(m, 1, np.arange(6.0).reshape(1, 2, 3))
    rows = list(f.csv_rows())
    assert len(rows) == 6
    assert rows[0] == (0, 0, 1, 0, 0, 0.0)
