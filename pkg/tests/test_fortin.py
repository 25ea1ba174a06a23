import numpy as np
import pytest
import sympy as sp
from conftest import fortin_of, mesh_of

from svfortin.catalog import BumpField, CatalogField, SumField, X, Y, catalog_field
from svfortin.fespaces import VelocitySpace
from svfortin.fields import discrete_moments, error_norms, moments_of
from svfortin.fortin import (OperatorReport, apply_fortin, apply_fortin_slip,
                             approximation_study, fitted_order, observed_orders)
from svfortin.harness import interior_bump, random_discrete
from svfortin.polynomials import dim, integral_weights, mass_matrix
from svfortin.singularity import covering_sets

EXAMPLE = CatalogField("example", (sp.sin(sp.pi * X) * sp.sin(sp.pi * Y), X * (1 - X) * Y * (1 - Y)))


def test_linearity(rng):
    F = fortin_of("diagonal", 2)
    for _ in range(3):
        a, b = rng.standard_normal(2)
        u = random_discrete(VelocitySpace(F.mesh, 4, "none"), rng)
        v = catalog_field("trig_mixed")
        mu, mv = discrete_moments(F.mesh, 4, u), moments_of(F.mesh, 4, v)
        lhs = F.apply(a * mu + b * mv)
        rhs = a * F.apply(mu) + b * F.apply(mv)
        assert np.abs(lhs - rhs).max() <= 1e-11 * max(np.abs(rhs).max(), 1.0)


@pytest.mark.parametrize("kind,n", [("crisscross", 2), ("diagonal", 3), ("boundary_chain", 3)])
def test_projection(kind, n, rng):
    F = fortin_of(kind, n)
    c = random_discrete(F.V, rng)
    fld, rep = apply_fortin(F, c)
    assert rep.projection_residual <= 1e-10
    assert np.abs(fld.coeffs - c).max() <= 1e-10 * np.abs(c).max()


def test_example_divergence_pairing():
    F = fortin_of("crisscross", 2)
    _, rep = apply_fortin(F, EXAMPLE)
    assert isinstance(rep, OperatorReport)
    assert rep.divergence_residual <= 1e-9


@pytest.mark.parametrize("kind,n", [("diagonal", 1), ("diagonal", 2), ("boundary_chain", 3),
                                    ("perturbed_crisscross", 2)])
def test_full_basis_pairing(kind, n):
    F = fortin_of(kind, n)
    for name in ("trig", "exp", "stream", "rotation"):
        u1, u, m = F.stages(catalog_field(name))
        assert F.divergence_residual(u, m) <= 1e-9


def test_pairing_by_hand(rng):
    # int div(Pi v - v) q for a random pressure, from P^{k-1} mass matrices
    F = fortin_of("diagonal", 2)
    v = catalog_field("trig")
    u1, u, m = F.stages(v)
    q = F.Q.basis @ rng.standard_normal(F.Q.dim)
    dv = F.V.divergence(u)
    M = mass_matrix(3, 3)
    nq = dim(3)
    qc = q.reshape(-1, nq)
    lhs = sum(F.mesh.areas[t] * dv[t] @ M @ qc[t] for t in range(F.mesh.n_triangles))
    rhs = float(np.sum(m.div * qc))
    assert abs(lhs - rhs) <= 1e-10 * np.abs(m.div).max()


def test_q0_part_vanishes_for_pi1():
    # with w = Pi1 v - v and q0 the region means of q, int div w q0 = 0
    F = fortin_of("crisscross", 2)
    u1, u, m = F.stages(EXAMPLE)
    m1 = discrete_moments(F.mesh, 4, F.V.coefficients(u1))
    dw = (m1 - m).div_means()
    w = integral_weights(3)
    nq = dim(3)
    B = F.Q.basis.reshape(F.mesh.n_triangles, nq, -1)
    for j in range(F.Q.dim):
        total = 0.0
        for r in F.regions:
            area = F.mesh.areas[r.triangles].sum()
            q0 = sum(F.mesh.areas[t] * B[t, :, j] @ w for t in r.triangles) / area
            total += q0 * dw[r.triangles].sum()
        assert abs(total) <= 1e-12 * max(np.abs(m.div_means()).max(), 1.0)
    assert np.abs(dw).max() <= 1e-12 * np.abs(m.edge_flux(F.mesh)).max()


@pytest.mark.parametrize("kind,n", [("crisscross", 2), ("diagonal", 2), ("boundary_chain", 3)])
def test_trace_preserved(kind, n, rng):
    F = fortin_of(kind, n)
    Vn = VelocitySpace(F.mesh, 4, "none")
    x = Vn.E @ rng.standard_normal(Vn.E.shape[1])
    c = Vn.coefficients(x)
    v = discrete_moments(F.mesh, 4, c) + moments_of(F.mesh, 4, interior_bump(F.mesh, rng))
    u1, u, m = F.stages(v)
    b = F.V.boundary_node
    assert np.abs(u.reshape(-1, 2)[b] - x.reshape(-1, 2)[b]).max() <= 1e-11 * np.abs(x).max()
    assert F.trace_residual(u, m) <= 1e-11 * np.abs(x).max()


def test_locality_bitwise():
    F = fortin_of("crisscross", 8)
    assert not F.balance.active
    M = F.mesh
    t = int(np.argmin(M.vertices[M.triangles].mean(axis=1).sum(axis=1)))
    _, _, PQ = covering_sets(F.decomposition, t)
    assert M.vertices[M.vertices_of(PQ)].max() <= 0.5
    f = catalog_field("trig")
    far = SumField([(1.0, f), (2.0, BumpField((0.8, 0.8), 0.15, (1.0, -1.0)))])
    a = F.V.coefficients(F.apply(f))[t]
    b = F.V.coefficients(F.apply(far))[t]
    assert np.array_equal(a, b)
    # sanity: the perturbation does change the output where the bump lives
    s = int(np.argmax(M.vertices[M.triangles].mean(axis=1).sum(axis=1)))
    assert not np.array_equal(F.V.coefficients(F.apply(f))[s], F.V.coefficients(F.apply(far))[s])


def test_balance_stage_only_on_odd_meshes():
    assert not fortin_of("crisscross", 2).balance.active
    assert fortin_of("diagonal", 2).balance.active


def test_dirichlet_entry_rejects_slip_operator():
    with pytest.raises(ValueError):
        apply_fortin(fortin_of("crisscross", 1, variant="slip"), catalog_field("slip"))
    with pytest.raises(ValueError):
        apply_fortin_slip(fortin_of("crisscross", 1), catalog_field("slip"))


# -- slip ----------------------------------------------------------------------

def test_slip_projection(rng):
    F = fortin_of("boundary_chain", 3, variant="slip")
    c = random_discrete(F.V, rng)
    _, rep = apply_fortin_slip(F, c)
    assert rep.projection_residual <= 1e-10


def test_slip_normal_trace(rng):
    F = fortin_of("boundary_chain", 3, variant="slip")
    x = F.V.E @ rng.standard_normal(F.V.dim)
    v = discrete_moments(F.mesh, 4, F.V.coefficients(x)) + moments_of(F.mesh, 4,
                                                                     interior_bump(F.mesh, rng))
    u1, u, m = F.stages(v)
    assert F.trace_residual(u, m) <= 1e-11 * np.abs(x).max()
    _, rep = apply_fortin_slip(F, catalog_field("slip"), trace=True)
    assert rep.trace_residual <= 1e-11


def test_slip_pairing_on_boundary_chain():
    D = fortin_of("boundary_chain", 3)
    F = fortin_of("boundary_chain", 3, variant="slip")
    assert F.Q.dim > D.Q.dim
    _, rep = apply_fortin_slip(F, catalog_field("slip"))
    assert rep.divergence_residual <= 1e-9


# -- approximation -------------------------------------------------------------

def test_polynomial_reproduction_all_levels():
    levels = approximation_study([mesh_of("crisscross", n) for n in (1, 2, 4)], catalog_field("poly4"))
    assert all(lv.error <= 1e-10 for lv in levels)
    levels = approximation_study([mesh_of("diagonal", n) for n in (1, 2)], catalog_field("poly4"))
    assert all(lv.error <= 1e-10 for lv in levels)


def test_observed_orders_helpers():
    h = np.array([0.5, 0.25, 0.125])
    e = 3.0 * h ** 4
    assert np.allclose(observed_orders(h, e), 4.0)
    assert fitted_order(h, e) == pytest.approx(4.0)


@pytest.mark.slow
def test_smooth_order():
    levels = approximation_study([mesh_of("crisscross", n) for n in (4, 8, 16)], catalog_field("trig"))
    assert abs(levels[-1].order - 5.0) <= 0.2


def test_gradient_stability_plateau():
    # r = 1, j = 1: the H1 error of a rough field does not grow under refinement
    f = catalog_field("singular")
    errs = [lv.error for lv in approximation_study([mesh_of("crisscross", n) for n in (2, 4, 8)], f,
                                                   j=1)]
    assert np.all(np.isfinite(errs))
    assert max(errs[1:]) <= 1.1 * errs[0]


def test_stability_ratios_report():
    F = fortin_of("crisscross", 2)
    _, rep = apply_fortin(F, catalog_field("trig"), stability=True)
    assert rep.stability.shape == (F.mesh.n_triangles,)
    assert np.all(np.isfinite(rep.stability)) and np.all(rep.stability > 0)
    # crisscross regions have only singular or Theta = 1 vertices
    assert np.allclose(rep.C_Q, 2.0)


def test_stability_ratio_levels():
    # r = 1 field: the normalized gradient ratio settles from the second level on
    out = []
    for n in (2, 4, 8):
        F = fortin_of("crisscross", n)
        _, rep = apply_fortin(F, catalog_field("singular"), stability=True)
        out.append(rep.stability.max() / rep.C_Q.max())
    assert np.all(np.isfinite(out))
    assert abs(out[2] / out[1] - 1) <= 0.1


def test_error_norms_local_max_bounds_global():
    F = fortin_of("diagonal", 2)
    f = catalog_field("exp")
    err, local = error_norms(F.mesh, 4, F.V.coefficients(F.apply(f)), f)
    assert local.max() <= err + 1e-15
    assert err <= np.sqrt(F.mesh.n_triangles) * local.max() + 1e-15
