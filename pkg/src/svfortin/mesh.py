"""Conforming 2D triangulations: data structure, text I/O, generators, quality."""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polynomials import batch_geometry


class MeshError(ValueError):
    """Base class for invalid mesh input."""


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


class DuplicateVertexError(MeshError):
    pass


class Triangulation:
    """An immutable conforming triangulation with derived adjacency tables.

    Parameters
    ----------
    vertices : (N, 2) array_like
        Vertex coordinates.
    triangles : (M, 3) array_like of int
        Vertex indices per triangle.  Clockwise triangles are reoriented.

    Attributes
    ----------
    edges : (E, 2) int array
        Vertex pairs with ``edges[:, 0] < edges[:, 1]``.
    edge_triangles : (E, 2) int array
        Adjacent triangles; the second entry is -1 on boundary edges.
    tri_edges : (M, 3) int array
        ``tri_edges[t, i]`` is the edge opposite local vertex ``i``.
    boundary_edge, boundary_vertex : bool arrays
    vertex_to_triangles : list of int arrays
        Triangles around each vertex in counterclockwise order; consecutive
        entries share an edge.  Boundary lists start and end at triangles with a
        boundary edge; interior lists start at the lowest triangle index and are
        cyclic.
    """

    def __init__(self, vertices, triangles):
        V = np.array(vertices, dtype=float).reshape(-1, 2)
        T = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(V)):
            raise MeshError("vertex coordinates must be finite")
        if len(T) == 0:
            raise MeshTopologyError("triangulation has no triangles")
        if T.min() < 0 or T.max() >= len(V):
            raise MeshTopologyError("triangle references a nonexistent vertex")
        if np.any((T[:, 0] == T[:, 1]) | (T[:, 1] == T[:, 2]) | (T[:, 0] == T[:, 2])):
            raise MeshTopologyError("triangle with repeated vertex")
        _check_duplicates(V)

        with np.errstate(divide="ignore", invalid="ignore"):
            area, _ = batch_geometry(V[T])
        scale = max(np.ptp(V[:, 0]), np.ptp(V[:, 1]), 1e-300) ** 2
        if np.any(np.abs(area) <= 1e-14 * scale):
            raise MeshTopologyError("degenerate (zero-area) triangle")
        flip = area < 0
        T[flip] = T[flip][:, [0, 2, 1]]

        V.setflags(write=False)
        T.setflags(write=False)
        self.vertices = V
        self.triangles = T
        self._build_edges()
        self._build_vertex_fans()
        self._check_hanging()

    # -- construction helpers ----------------------------------------------

    def _build_edges(self):
        T = self.triangles
        M = len(T)
        directed = {}
        edge_index: dict[tuple[int, int], int] = {}
        edges = []
        adj: list[list[int]] = []
        tri_edges = np.empty((M, 3), dtype=np.int64)
        for t in range(M):
            for i in range(3):
                a, b = int(T[t, (i + 1) % 3]), int(T[t, (i + 2) % 3])
                if (a, b) in directed:
                    raise MeshTopologyError(
                        f"edge ({a}, {b}) traversed twice in the same direction (overlapping triangles)")
                directed[(a, b)] = t
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append(key)
                    adj.append([])
                adj[e].append(t)
                if len(adj[e]) > 2:
                    raise MeshTopologyError(f"edge {key} is shared by more than two triangles")
                tri_edges[t, i] = e
        et = np.full((len(edges), 2), -1, dtype=np.int64)
        for e, ts in enumerate(adj):
            et[e, : len(ts)] = ts
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_triangles = et
        self.tri_edges = tri_edges
        self.boundary_edge = et[:, 1] < 0
        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[self.edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = bv
        self._edge_index = edge_index
        for arr in (self.edges, self.edge_triangles, self.tri_edges, self.boundary_edge, self.boundary_vertex):
            arr.setflags(write=False)

    def _build_vertex_fans(self):
        T = self.triangles
        N = len(self.vertices)
        around: list[dict[int, tuple[int, int]]] = [dict() for _ in range(N)]
        for t in range(len(T)):
            for p in range(3):
                z = int(T[t, p])
                a, b = int(T[t, (p + 1) % 3]), int(T[t, (p + 2) % 3])
                around[z][a] = (t, b)
        fans = []
        for z in range(N):
            if not around[z]:
                raise MeshTopologyError(f"vertex {z} is not used by any triangle")
            succ = around[z]
            targets = {b for (_, b) in succ.values()}
            starts = [a for a in succ if a not in targets]
            if self.boundary_vertex[z]:
                if len(starts) != 1:
                    raise MeshTopologyError(f"vertex {z} is non-manifold (several boundary fans)")
                a = starts[0]
            else:
                t0 = min(t for (t, _) in succ.values())
                a = next(a for a, (t, _) in succ.items() if t == t0)
            order = []
            seen = set()
            while a in succ and succ[a][0] not in seen:
                t, b = succ[a]
                order.append(t)
                seen.add(t)
                a = b
            if len(order) != len(succ):
                raise MeshTopologyError(f"triangles around vertex {z} do not form a single fan")
            arr = np.array(order, dtype=np.int64)
            arr.setflags(write=False)
            fans.append(arr)
        self.vertex_to_triangles = fans

    def _check_hanging(self):
        V = self.vertices
        for e in np.flatnonzero(self.boundary_edge):
            a, b = self.edges[e]
            d = V[b] - V[a]
            L2 = float(d @ d)
            w = V - V[a]
            s = (w @ d) / L2
            cross = w[:, 0] * d[1] - w[:, 1] * d[0]
            inside = (s > 1e-12) & (s < 1 - 1e-12) & (np.abs(cross) <= 1e-12 * L2)
            if np.any(inside):
                raise MeshTopologyError(f"hanging vertex {int(np.flatnonzero(inside)[0])} on edge ({a}, {b})")

    # -- queries -------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_id(self, a: int, b: int) -> int:
        return self._edge_index[(a, b) if a < b else (b, a)]

    @cached_property
    def areas(self) -> np.ndarray:
        a, _ = batch_geometry(self.vertices[self.triangles])
        a.setflags(write=False)
        return a

    @cached_property
    def bary_grads(self) -> np.ndarray:
        _, g = batch_geometry(self.vertices[self.triangles])
        g.setflags(write=False)
        return g

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        out = np.hypot(d[:, 0], d[:, 1])
        out.setflags(write=False)
        return out

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normals, pointing out of ``edge_triangles[e, 0]``."""
        V = self.vertices
        d = V[self.edges[:, 1]] - V[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        t0 = self.edge_triangles[:, 0]
        inner = V[self.triangles[t0]].mean(axis=1) - V[self.edges[:, 0]]
        flip = np.einsum("ij,ij->i", n, inner) > 0
        n[flip] *= -1.0
        n.setflags(write=False)
        return n

    def triangle_vertices(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def local_index(self, t: int, z: int) -> int:
        row = self.triangles[t]
        hit = np.flatnonzero(row == z)
        if len(hit) == 0:
            raise KeyError(f"vertex {z} not in triangle {t}")
        return int(hit[0])

    def angle(self, t: int, z: int) -> float:
        """Interior angle of triangle ``t`` at its vertex ``z``."""
        p = self.local_index(t, z)
        P = self.vertices[self.triangles[t]]
        u = P[(p + 1) % 3] - P[p]
        w = P[(p + 2) % 3] - P[p]
        return float(np.arctan2(u[0] * w[1] - u[1] * w[0], u @ w))

    def angle_sincos(self, t: int, z: int) -> tuple[float, float]:
        p = self.local_index(t, z)
        P = self.vertices[self.triangles[t]]
        u = P[(p + 1) % 3] - P[p]
        w = P[(p + 2) % 3] - P[p]
        nu = np.hypot(*u) * np.hypot(*w)
        return float((u[0] * w[1] - u[1] * w[0]) / nu), float((u @ w) / nu)

    def vertices_of(self, tris) -> np.ndarray:
        return np.unique(self.triangles[np.asarray(list(tris), dtype=np.int64)].ravel())

    def star(self, vertices) -> np.ndarray:
        """Union of the vertex patches of the given vertices (sorted indices)."""
        out = set()
        for z in np.atleast_1d(vertices):
            out.update(int(t) for t in self.vertex_to_triangles[int(z)])
        return np.array(sorted(out), dtype=np.int64)

    def patch(self, tris) -> np.ndarray:
        """``P(M)``: union of the patches of all vertices of the triangle set."""
        return self.star(self.vertices_of(tris))

    def diameter(self, tris) -> float:
        P = self.vertices[self.vertices_of(tris)]
        d = P[:, None, :] - P[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def __repr__(self):
        return f"Triangulation({self.n_vertices} vertices, {self.n_triangles} triangles)"


def _check_duplicates(V: np.ndarray):
    if len(V) < 2:
        return
    order = np.lexsort((V[:, 1], V[:, 0]))
    S = V[order]
    same = np.all(S[1:] == S[:-1], axis=1)
    if np.any(same):
        i = int(np.flatnonzero(same)[0])
        raise DuplicateVertexError(f"vertices {int(order[i])} and {int(order[i + 1])} coincide")


# -- quality -----------------------------------------------------------------

@dataclass(frozen=True)
class MeshQuality:
    h_max: float
    h_T: np.ndarray
    shape_regularity: float


def mesh_quality(mesh: Triangulation) -> MeshQuality:
    L = mesh.edge_lengths[mesh.tri_edges]
    hT = L.max(axis=1)
    inradius = 2.0 * mesh.areas / L.sum(axis=1)
    return MeshQuality(float(hT.max()), hT, float((hT / inradius).max()))


def vertex_patch(mesh: Triangulation, z: int) -> tuple[np.ndarray, float]:
    """Triangles around ``z`` in cyclic order and the patch diameter."""
    tris = mesh.vertex_to_triangles[z]
    return tris, mesh.diameter(tris)


# -- refinement ------------------------------------------------------------

def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Split every triangle into four by joining edge midpoints.

    Original vertices keep their indices; the midpoint of edge ``e`` gets index
    ``n_vertices + e``.
    """
    V = mesh.vertices
    mids = 0.5 * (V[mesh.edges[:, 0]] + V[mesh.edges[:, 1]])
    newV = np.vstack([V, mids])
    nv = len(V)
    out = []
    for t in range(mesh.n_triangles):
        v0, v1, v2 = (int(x) for x in mesh.triangles[t])
        m0, m1, m2 = (nv + int(e) for e in mesh.tri_edges[t])
        out += [(v0, m2, m1), (m2, v1, m0), (m1, m0, v2), (m0, m1, m2)]
    return Triangulation(newV, out)


# -- generators --------------------------------------------------------------

MESH_KINDS = ("diagonal", "crisscross", "perturbed_crisscross", "boundary_chain")


def generate_mesh(kind: str, n: int, eps: float = 0.0) -> Triangulation:
    """Meshes of the unit square exercising every kind of region.

    ``diagonal``
        ``n x n`` squares, each cut by its SE-NW diagonal, so the corners
        (0, 0) and (1, 1) touch a single triangle.
    ``crisscross``
        ``n x n`` squares, each cut by both diagonals; every square center is an
        interior singular vertex.
    ``perturbed_crisscross``
        As ``crisscross`` with each center moved right by ``eps / n``.
    ``boundary_chain``
        A fan of ``n + 1`` triangles from the apex (1/2, 1/2) to the bottom
        side, plus three triangles filling the square.  The ``n`` inner bottom
        vertices each touch two triangles on a straight boundary and form one
        chain of boundary singular vertices.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if kind == "diagonal":
        return _diagonal(n)
    if kind == "crisscross":
        return _crisscross(n, 0.0)
    if kind == "perturbed_crisscross":
        if eps >= 0.5:
            raise ValueError(f"eps={eps} moves the square center onto or past the square side")
        return _crisscross(n, eps)
    if kind == "boundary_chain":
        return _boundary_chain(n)
    raise ValueError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")


def _grid(n: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _diagonal(n: int) -> Triangulation:
    V = _grid(n)
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = i + (n + 1) * j
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            tris += [(v00, v10, v01), (v10, v11, v01)]
    return Triangulation(V, tris)


def _crisscross(n: int, eps: float) -> Triangulation:
    V = _grid(n)
    h = 1.0 / n
    centers = []
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = i + (n + 1) * j
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            c = len(V) + len(centers)
            centers.append(((i + 0.5 + eps) * h, (j + 0.5) * h))
            tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    return Triangulation(np.vstack([V, centers]), tris)


def _boundary_chain(n: int) -> Triangulation:
    m = n + 1
    bottom = [(i / m, 0.0) for i in range(m + 1)]
    apex, tl, tr = m + 1, m + 2, m + 3
    V = bottom + [(0.5, 0.5), (0.0, 1.0), (1.0, 1.0)]
    tris = [(i, i + 1, apex) for i in range(m)]
    tris += [(0, apex, tl), (m, tr, apex), (apex, tr, tl)]
    return Triangulation(V, tris)


# -- text format -------------------------------------------------------------

def load_mesh(path: str | os.PathLike) -> Triangulation:
    """Read the ``v x y`` / ``t i j k`` line format ('#' starts a comment)."""
    verts, tris = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "v" and len(tok) == 3:
                    verts.append((float(tok[1]), float(tok[2])))
                elif tok[0] == "t" and len(tok) == 4:
                    tris.append((int(tok[1]), int(tok[2]), int(tok[3])))
                else:
                    raise ValueError(raw.rstrip())
            except ValueError as exc:
                raise MeshParseError(f"{path}:{lineno}: malformed record {raw.strip()!r}") from exc
    if not verts:
        raise MeshParseError(f"{path}: no vertices")
    return Triangulation(verts, tris)


def save_mesh(mesh: Triangulation, path: str | os.PathLike):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {mesh.n_vertices} vertices, {mesh.n_triangles} triangles\n")
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"t {a} {b} {c}\n")
