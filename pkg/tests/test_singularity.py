import numpy as np
import pytest
from conftest import H, I, J, K, mesh_of

from svfortin.mesh import Triangulation, generate_mesh
from svfortin.singularity import (DecompositionError, RegionKind, VertexClass, boundary_singular_chains,
                                  build_decomposition, check_isolation, classify_vertices,
                                  covering_sets, theta_from_angles, theta_vertex)

FAMILIES = [("diagonal", 1), ("diagonal", 3), ("crisscross", 1), ("crisscross", 2), ("crisscross", 3),
            ("perturbed_crisscross", 2), ("boundary_chain", 1), ("boundary_chain", 4)]


def test_theta_from_angles_examples():
    assert theta_from_angles([np.pi / 2] * 4, interior=True) == pytest.approx(0, abs=1e-15)
    assert theta_from_angles([np.pi / 3] * 6, interior=True) == pytest.approx(np.sqrt(3) / 2)
    assert theta_from_angles([np.pi / 4, 3 * np.pi / 4], interior=False) == pytest.approx(0, abs=1e-15)
    assert theta_from_angles([np.pi / 2], interior=False) == 0.0


def test_theta_wraps_around_for_interior_vertices():
    # only the pair (last, first) is non-degenerate
    ang = [np.pi / 2, np.pi / 2, np.pi / 2, np.pi / 4, np.pi / 4]
    assert theta_from_angles(ang, interior=True) == pytest.approx(1.0)
    assert theta_from_angles(ang, interior=False) == pytest.approx(1.0)


def test_theta_vertex_on_meshes():
    m = generate_mesh("crisscross", 1)
    assert theta_vertex(m, 4) == pytest.approx(0, abs=1e-15)
    assert theta_vertex(generate_mesh("diagonal", 1), 0) == 0.0


def test_classification_examples():
    c = classify_vertices(generate_mesh("crisscross", 2))
    assert sorted(c.interior_singular) == [9, 10, 11, 12]
    assert len(c.boundary_singular) == 0
    c = classify_vertices(generate_mesh("diagonal", 2))
    assert len(c.interior_singular) == 0
    c = classify_vertices(generate_mesh("perturbed_crisscross", 1, 0.1))
    assert c.cls[4] == VertexClass.NONSINGULAR
    assert c.theta[4] > c.singular_tolerance
    # Theta at the moved center from the coordinates: max |sin(a_i + a_{i+1})|
    m = generate_mesh("perturbed_crisscross", 1, 0.1)
    z = m.vertices[4]
    corners = m.vertices[[0, 1, 3, 2]]
    ang = []
    for i in range(4):
        a, b = corners[i] - z, corners[(i + 1) % 4] - z
        ang.append(np.arccos(a @ b / np.linalg.norm(a) / np.linalg.norm(b)))
    expect = max(abs(np.sin(ang[i] + ang[(i + 1) % 4])) for i in range(4))
    assert c.theta[4] == pytest.approx(expect, rel=1e-12)


def test_file_tolerance_is_looser():
    m = generate_mesh("perturbed_crisscross", 1, 1e-11)
    assert classify_vertices(m).cls[4] == VertexClass.NONSINGULAR
    assert classify_vertices(m, 1e-9).cls[4] == VertexClass.INTERIOR_SINGULAR


def test_chains():
    assert boundary_singular_chains(generate_mesh("crisscross", 2),
                                    classify_vertices(generate_mesh("crisscross", 2))) == []
    m = generate_mesh("boundary_chain", 3)
    ch = boundary_singular_chains(m, classify_vertices(m))
    assert len(ch) == 1 and len(ch[0]) == 3
    # a plain vertex between two flat boundary vertices splits the chain
    V = [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (1, 1), (3, 1), (2, 2)]
    T = [(0, 1, 5), (1, 2, 5), (2, 7, 5), (2, 6, 7), (2, 3, 6), (3, 4, 6)]
    m = Triangulation(V, T)
    c = classify_vertices(m)
    ch = boundary_singular_chains(m, c)
    assert c.cls[2] == VertexClass.NONSINGULAR
    assert c.cls[1] == c.cls[3] == VertexClass.BOUNDARY_SINGULAR
    assert len(ch) == 2
    assert all(2 not in x for x in ch)
    assert any(1 in x for x in ch) and any(3 in x for x in ch)


def test_decomposition_examples(fig1_mesh):
    dec = build_decomposition(generate_mesh("crisscross", 2))
    assert len(dec) == 4
    assert all(r.kind == RegionKind.INTERIOR_SINGULAR_PATCH for r in dec.regions)
    dec = build_decomposition(fig1_mesh)
    assert len(dec) == 5
    kinds = [r.kind for r in dec.regions]
    assert kinds.count(RegionKind.SINGLE_TRIANGLE) == 3
    assert dec.regions[3].anchor == K
    assert sorted(int(z) for z in dec.chains[0]) == sorted([H, I, J])


def test_diagonal_one_has_corner_chains():
    # both L = 1 corners are boundary singular, so the two triangles are chain patches
    dec = build_decomposition(generate_mesh("diagonal", 1))
    assert [r.kind for r in dec.regions] == [RegionKind.BOUNDARY_CHAIN_PATCH] * 2
    dec = build_decomposition(generate_mesh("diagonal", 4))
    assert sum(r.kind == RegionKind.SINGLE_TRIANGLE for r in dec.regions) == 30


@pytest.mark.parametrize("kind,n", FAMILIES)
@pytest.mark.parametrize("variant", ["dirichlet", "slip"])
def test_decomposition_invariants(kind, n, variant):
    m = mesh_of(kind, n)
    c = classify_vertices(m)
    dec = build_decomposition(m, c, variant)
    tris = np.concatenate([r.triangles for r in dec.regions])
    assert np.array_equal(np.sort(tris), np.arange(m.n_triangles))
    assert check_isolation(m, c) == []
    for i, r in enumerate(dec.regions):
        assert set(r.triangles) <= set(r.patch_triangles)
        assert r.theta_D > 0
        vs = m.vertices_of(r.triangles)
        ns = vs[c.nonsingular_mask[vs]]
        assert np.all(r.theta_D <= c.theta[ns] + 1e-15)
        if r.kind == RegionKind.SINGLE_TRIANGLE:
            assert len(r.triangles) == 1
            if variant == "dirichlet":
                assert np.all(c.nonsingular_mask[vs])
        assert np.all(dec.owner[r.triangles] == i)
    assert max(len(x) for x in dec.covering) <= 16
    if variant == "slip":
        assert all(r.kind != RegionKind.BOUNDARY_CHAIN_PATCH for r in dec.regions)


def test_slip_region_count_differs_on_chain_mesh():
    m = generate_mesh("boundary_chain", 3)
    d = build_decomposition(m, variant="dirichlet")
    s = build_decomposition(m, variant="slip")
    assert [r.kind for r in d.regions].count(RegionKind.BOUNDARY_CHAIN_PATCH) == 1
    assert len(d) == 4
    assert len(s) == m.n_triangles


def test_regions_sorted_by_kind_then_anchor():
    dec = build_decomposition(generate_mesh("boundary_chain", 2))
    keys = [(int(r.kind), -1 if r.anchor is None else r.anchor) for r in dec.regions]
    assert keys == sorted(keys)


def test_neighbouring_centers_keep_disjoint_patches():
    # two crisscross squares side by side: the centers are singular, patches touch only along an edge
    V = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (2, 0), (2, 1), (1.5, 0.5)]
    T = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4), (1, 5, 7), (5, 6, 7), (6, 2, 7), (2, 1, 7)]
    m = Triangulation(V, T)
    c = classify_vertices(m)
    assert len(c.interior_singular) == 2 and check_isolation(m, c) == []
    dec = build_decomposition(m, c)
    assert len(dec) == 2
    V2 = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    m2 = Triangulation(V2, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])
    c2 = classify_vertices(m2)
    assert len(c2.interior_singular) == 1


def test_overlap_detection_on_shared_triangle():
    # with every vertex declared singular, neighbouring interior patches overlap
    m = generate_mesh("diagonal", 3)
    c = classify_vertices(m, tol=2.0)
    assert check_isolation(m, c)
    with pytest.raises(DecompositionError):
        build_decomposition(m, c)


def test_covering_sets():
    m = Triangulation([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    dec = build_decomposition(m)
    C, Q, P = covering_sets(dec, 0)
    assert list(C) == [0] and list(Q) == [0] and list(P) == [0]
    m = generate_mesh("crisscross", 2)
    dec = build_decomposition(m)
    C, Q, _ = covering_sets(dec, 0)
    assert dec.owner[0] in C
    for i in C:
        assert 0 in dec.regions[i].patch_triangles
    assert set(Q) == set(np.concatenate([dec.regions[i].patch_triangles for i in C]))
    m = generate_mesh("diagonal", 4)
    dec = build_decomposition(m)
    centre = [t for t in range(m.n_triangles) if np.allclose(m.vertices[m.triangles[t]].mean(0), 0.5, atol=0.1)]
    assert any(len(covering_sets(dec, t)[0]) >= 1 for t in centre)


@pytest.mark.parametrize("kind,n", FAMILIES)
def test_theta_invariant_under_triangle_permutation(kind, n, rng):
    m = mesh_of(kind, n)
    perm = rng.permutation(m.n_triangles)
    T = m.triangles[perm]
    shift = rng.integers(0, 3, size=len(T))
    T = np.array([np.roll(t, s) for t, s in zip(T, shift)])
    m2 = Triangulation(m.vertices, T)
    assert np.allclose(classify_vertices(m).theta, classify_vertices(m2).theta, atol=1e-14)
