import numpy as np
import pytest

from svfortin.mesh import (DuplicateVertexError, MeshParseError, MeshTopologyError, Triangulation,
                           generate_mesh, load_mesh, mesh_quality, refine_uniform, save_mesh,
                           vertex_patch)
from svfortin.singularity import VertexClass, classify_vertices

KINDS = [("diagonal", 3, 0.0), ("crisscross", 2, 0.0), ("perturbed_crisscross", 2, 0.1),
         ("boundary_chain", 3, 0.0)]


def _write(tmp_path, text):
    p = tmp_path / "m.txt"
    p.write_text(text)
    return p


def test_load_single_triangle(tmp_path):
    m = load_mesh(_write(tmp_path, "# one\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n"))
    assert m.n_triangles == 1
    assert m.n_edges == 3
    assert m.boundary_edge.sum() == 3


def test_load_reorients_clockwise(tmp_path):
    m = load_mesh(_write(tmp_path, "v 0 0\nv 1 0\nv 0 1\nt 0 2 1\n"))
    assert m.areas[0] > 0
    assert sorted(m.triangles[0]) == [0, 1, 2]
    P = m.vertices[m.triangles[0]]
    cross = (P[1, 0] - P[0, 0]) * (P[2, 1] - P[0, 1]) - (P[2, 0] - P[0, 0]) * (P[1, 1] - P[0, 1])
    assert cross > 0


def test_load_rejects_nonmanifold_edge(tmp_path):
    text = "v 0 0\nv 1 0\nv 0 1\nv 0 -1\nv 1 1\nt 0 1 2\nt 1 0 3\nt 0 1 4\n"
    with pytest.raises(MeshTopologyError):
        load_mesh(_write(tmp_path, text))


def test_load_errors(tmp_path):
    with pytest.raises(MeshParseError):
        load_mesh(_write(tmp_path, "v 0 0\nv 1 zero\n"))
    with pytest.raises(DuplicateVertexError):
        load_mesh(_write(tmp_path, "v 0 0\nv 0 0\nv 0 1\nt 0 1 2\n"))
    with pytest.raises(MeshTopologyError):
        load_mesh(_write(tmp_path, "v 0 0\nv 1 0\nv 2 0\nt 0 1 2\n"))


def test_hanging_vertex_rejected():
    V = [(0, 0), (2, 0), (0, 2), (1, 0), (1, -1)]
    with pytest.raises(MeshTopologyError):
        Triangulation(V, [(0, 1, 2), (0, 4, 3), (3, 4, 1)])


@pytest.mark.parametrize("kind,n,eps", KINDS)
def test_round_trip(tmp_path, kind, n, eps):
    m = generate_mesh(kind, n, eps)
    save_mesh(m, tmp_path / "a.txt")
    m2 = load_mesh(tmp_path / "a.txt")
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.triangles, m2.triangles)


def test_generator_counts():
    m = generate_mesh("crisscross", 2)
    assert (m.n_triangles, m.n_vertices) == (16, 13)
    assert (~m.boundary_vertex).sum() == 5
    m = generate_mesh("diagonal", 1)
    assert (m.n_triangles, m.n_vertices) == (2, 4)


def test_perturbed_center_and_areas():
    m = generate_mesh("perturbed_crisscross", 1, 0.1)
    assert m.n_triangles == 4
    assert np.allclose(m.vertices[4], (0.6, 0.5))
    P = m.vertices[m.triangles]
    cross = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) \
        - (P[:, 2, 0] - P[:, 0, 0]) * (P[:, 1, 1] - P[:, 0, 1])
    assert np.all(cross > 0)
    assert np.allclose(0.5 * cross, m.areas)


@pytest.mark.parametrize("kind,n,eps", [("crisscross", 0, 0.0), ("perturbed_crisscross", 1, 0.5),
                                        ("hexagonal", 2, 0.0), ("diagonal", 2, -1.0)])
def test_generator_errors(kind, n, eps):
    with pytest.raises(ValueError):
        generate_mesh(kind, n, eps)


def test_vertex_patch_examples():
    m = generate_mesh("crisscross", 1)
    tris, h = vertex_patch(m, 4)
    assert sorted(tris) == [0, 1, 2, 3]
    assert h == pytest.approx(np.sqrt(2))
    tris, _ = vertex_patch(generate_mesh("diagonal", 1), 0)
    assert len(tris) == 1
    m = generate_mesh("crisscross", 2)
    tris, _ = vertex_patch(m, 0)
    assert len(tris) == 2
    assert len(set(m.tri_edges[tris[0]]) & set(m.tri_edges[tris[1]])) == 1


@pytest.mark.parametrize("kind,n,eps", KINDS)
def test_fan_order_and_edge_counts(kind, n, eps):
    m = generate_mesh(kind, n, eps)
    nadj = (m.edge_triangles >= 0).sum(axis=1)
    assert np.all(nadj[m.boundary_edge] == 1)
    assert np.all(nadj[~m.boundary_edge] == 2)
    for z in range(m.n_vertices):
        fan = m.vertex_to_triangles[z]
        pairs = list(zip(fan[:-1], fan[1:]))
        if not m.boundary_vertex[z]:
            pairs.append((fan[-1], fan[0]))
            assert fan[0] == min(fan)
        for s, t in pairs:
            assert len(set(m.tri_edges[s]) & set(m.tri_edges[t])) == 1
        if m.boundary_vertex[z]:
            for t in (fan[0], fan[-1]):
                assert m.boundary_edge[m.tri_edges[t]].any()


def test_refine_counts_and_h():
    m = Triangulation([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    r = refine_uniform(m)
    assert r.n_triangles == 4
    assert np.allclose(r.areas, 0.125)
    c = generate_mesh("crisscross", 1)
    rc = refine_uniform(c)
    assert rc.n_triangles == 16
    assert mesh_quality(rc).h_max == pytest.approx(mesh_quality(c).h_max / 2)


@pytest.mark.parametrize("kind,n,eps", KINDS)
def test_refine_preserves_singularity(kind, n, eps):
    m = generate_mesh(kind, n, eps)
    r = refine_uniform(m)
    a = classify_vertices(m).cls
    b = classify_vertices(r).cls[: m.n_vertices]
    assert np.array_equal(a, b)


def test_refined_crisscross_center_stays_singular():
    r = refine_uniform(generate_mesh("crisscross", 1))
    assert classify_vertices(r).cls[4] == VertexClass.INTERIOR_SINGULAR


def test_quality():
    q = mesh_quality(Triangulation([(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)], [(0, 1, 2)]))
    assert q.shape_regularity == pytest.approx(2 * np.sqrt(3))
    assert q.h_max == pytest.approx(1.0)
    q = mesh_quality(generate_mesh("diagonal", 2))
    assert q.shape_regularity >= 2
    assert np.allclose(q.h_T, np.sqrt(2) / 2)
