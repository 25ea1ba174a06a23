"""Singular vertices, boundary singular chains and the region decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .mesh import Triangulation

DEFAULT_TOL = 1e-12
FILE_TOL = 1e-9


class VertexClass(IntEnum):
    NONSINGULAR = 0
    INTERIOR_SINGULAR = 1
    BOUNDARY_SINGULAR = 2


class RegionKind(IntEnum):
    SINGLE_TRIANGLE = 0
    INTERIOR_SINGULAR_PATCH = 1
    BOUNDARY_CHAIN_PATCH = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class DecompositionError(RuntimeError):
    pass


def theta_from_sincos(s: np.ndarray, c: np.ndarray, interior: bool) -> float:
    """Max of ``|sin(a_j + a_{j+1})|`` over consecutive angles given by sin/cos."""
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    if interior:
        s2, c2 = np.roll(s, -1), np.roll(c, -1)
    else:
        if len(s) < 2:
            return 0.0
        s, c, s2, c2 = s[:-1], c[:-1], s[1:], c[1:]
    return float(np.max(np.abs(s * c2 + c * s2)))


def theta_from_angles(angles, interior: bool) -> float:
    a = np.asarray(angles, dtype=float)
    return theta_from_sincos(np.sin(a), np.cos(a), interior)


def theta_vertex(mesh: Triangulation, z: int) -> float:
    """Distance from singularity of vertex ``z``.

    A boundary vertex touching a single triangle gets 0.
    """
    tris = mesh.vertex_to_triangles[z]
    sc = np.array([mesh.angle_sincos(int(t), z) for t in tris])
    return theta_from_sincos(sc[:, 0], sc[:, 1], interior=not mesh.boundary_vertex[z])


@dataclass(frozen=True)
class VertexClassification:
    theta: np.ndarray
    cls: np.ndarray
    singular_tolerance: float

    @property
    def interior_singular(self) -> np.ndarray:
        return np.flatnonzero(self.cls == VertexClass.INTERIOR_SINGULAR)

    @property
    def boundary_singular(self) -> np.ndarray:
        return np.flatnonzero(self.cls == VertexClass.BOUNDARY_SINGULAR)

    @property
    def singular(self) -> np.ndarray:
        return np.flatnonzero(self.cls != VertexClass.NONSINGULAR)

    @property
    def nonsingular_mask(self) -> np.ndarray:
        return self.cls == VertexClass.NONSINGULAR

    def constrained_vertices(self, variant: str) -> np.ndarray:
        """Vertices carrying a pressure constraint in the given variant."""
        if variant == "dirichlet":
            return self.singular
        if variant == "slip":
            return self.interior_singular
        raise ValueError(f"unknown variant {variant!r}")


def classify_vertices(mesh: Triangulation, tol: float = DEFAULT_TOL) -> VertexClassification:
    theta = np.array([theta_vertex(mesh, z) for z in range(mesh.n_vertices)])
    cls = np.full(mesh.n_vertices, VertexClass.NONSINGULAR, dtype=np.int64)
    sing = theta <= tol
    cls[sing & ~mesh.boundary_vertex] = VertexClass.INTERIOR_SINGULAR
    cls[sing & mesh.boundary_vertex] = VertexClass.BOUNDARY_SINGULAR
    theta.setflags(write=False)
    cls.setflags(write=False)
    return VertexClassification(theta, cls, tol)


def boundary_singular_chains(mesh: Triangulation, cls: VertexClassification) -> list[np.ndarray]:
    """Maximal boundary-edge-connected components of the boundary singular set.

    Chains are ordered by their smallest vertex index; vertices inside a chain
    are listed in path order when the chain is a path.
    """
    bs = set(int(z) for z in cls.boundary_singular)
    nbr: dict[int, list[int]] = {z: [] for z in bs}
    for e in np.flatnonzero(mesh.boundary_edge):
        a, b = (int(x) for x in mesh.edges[e])
        if a in bs and b in bs:
            nbr[a].append(b)
            nbr[b].append(a)
    chains = []
    seen: set[int] = set()
    for z in sorted(bs):
        if z in seen:
            continue
        comp = []
        stack = [z]
        seen.add(z)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in nbr[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        comp = _path_order(comp, nbr)
        chains.append(np.array(comp, dtype=np.int64))
    chains.sort(key=lambda c: int(c.min()))
    return chains


def _path_order(comp: list[int], nbr: dict[int, list[int]]) -> list[int]:
    ends = [u for u in comp if len(nbr[u]) <= 1]
    if not ends:
        return sorted(comp)
    start = min(ends)
    order = [start]
    prev = None
    cur = start
    while True:
        nxt = [w for w in nbr[cur] if w != prev]
        if not nxt:
            break
        prev, cur = cur, nxt[0]
        order.append(cur)
    return order if len(order) == len(comp) else sorted(comp)


@dataclass(frozen=True)
class Region:
    kind: RegionKind
    triangles: np.ndarray
    patch_triangles: np.ndarray
    theta_D: float
    h_D: float
    anchor: int | None

    @property
    def label(self) -> str:
        a = f"t{int(self.triangles[0])}" if self.anchor is None else str(self.anchor)
        return f"{self.kind.label}:{a}"


@dataclass(frozen=True)
class RegionDecomposition:
    mesh: Triangulation
    classification: VertexClassification
    variant: str
    regions: list[Region]
    chains: list[np.ndarray]
    owner: np.ndarray
    covering: list[np.ndarray] = field(repr=False)

    def __len__(self):
        return len(self.regions)

    def theta_of(self, tris) -> float:
        return theta_of_set(self.mesh, self.classification, tris)


def theta_of_set(mesh: Triangulation, cls: VertexClassification, tris) -> float:
    """Minimum of ``theta`` over the non-singular vertices of a triangle set.

    Returns 1.0 when the set has no non-singular vertex.
    """
    vs = mesh.vertices_of(tris)
    th = cls.theta[vs][cls.nonsingular_mask[vs]]
    return float(th.min()) if len(th) else 1.0


def build_decomposition(mesh: Triangulation, cls: VertexClassification | None = None,
                        variant: str = "dirichlet") -> RegionDecomposition:
    """Partition the triangles into plain triangles and singular patches.

    ``variant="dirichlet"`` builds the full collection including boundary chain
    patches.  ``variant="slip"`` keeps only interior singular patches; every
    triangle without an interior singular vertex is its own region.
    """
    if cls is None:
        cls = classify_vertices(mesh)
    if variant not in ("dirichlet", "slip"):
        raise ValueError(f"unknown variant {variant!r}")
    T = mesh.triangles
    isng = cls.cls[T]
    chains = boundary_singular_chains(mesh, cls) if variant == "dirichlet" else []

    raw: list[tuple[RegionKind, int, np.ndarray]] = []
    if variant == "dirichlet":
        singles = np.flatnonzero(np.all(isng == VertexClass.NONSINGULAR, axis=1))
    else:
        singles = np.flatnonzero(np.all(isng != VertexClass.INTERIOR_SINGULAR, axis=1))
    for t in singles:
        raw.append((RegionKind.SINGLE_TRIANGLE, int(t), np.array([t], dtype=np.int64)))
    for z in cls.interior_singular:
        raw.append((RegionKind.INTERIOR_SINGULAR_PATCH, int(z), np.sort(mesh.vertex_to_triangles[z])))
    for j, chain in enumerate(chains):
        raw.append((RegionKind.BOUNDARY_CHAIN_PATCH, j, mesh.star(chain)))
    raw.sort(key=lambda r: (int(r[0]), r[1]))

    owner = np.full(mesh.n_triangles, -1, dtype=np.int64)
    regions = []
    for i, (kind, anchor, tris) in enumerate(raw):
        clash = tris[owner[tris] >= 0]
        if len(clash):
            other = regions[owner[clash[0]]]
            raise DecompositionError(
                f"triangle {int(clash[0])} lies in both {other.label} and {kind.label}:{anchor}; "
                "singular patches overlap")
        owner[tris] = i
        P = mesh.patch(tris)
        regions.append(Region(kind, tris, P, theta_of_set(mesh, cls, tris), mesh.diameter(tris),
                              None if kind == RegionKind.SINGLE_TRIANGLE else anchor))
    missing = np.flatnonzero(owner < 0)
    if len(missing):
        raise DecompositionError(f"triangles {missing[:5].tolist()} are not covered by any region")

    cover: list[list[int]] = [[] for _ in range(mesh.n_triangles)]
    for i, r in enumerate(regions):
        for t in r.patch_triangles:
            cover[int(t)].append(i)
    covering = [np.array(c, dtype=np.int64) for c in cover]
    owner.setflags(write=False)
    return RegionDecomposition(mesh, cls, variant, regions, chains, owner, covering)


def covering_sets(dec: RegionDecomposition, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``C_h(T)``, the union ``Q(T)`` of their patches, and the patch of ``Q(T)``."""
    C = dec.covering[t]
    Q = np.unique(np.concatenate([dec.regions[i].patch_triangles for i in C]))
    return C, Q, dec.mesh.patch(Q)


def check_isolation(mesh: Triangulation, cls: VertexClassification) -> list[int]:
    """Interior singular vertices whose patch touches another singular vertex."""
    bad = []
    sing = set(int(z) for z in cls.singular)
    for z in cls.interior_singular:
        vs = set(int(v) for v in mesh.vertices_of(mesh.vertex_to_triangles[z]))
        if (vs - {int(z)}) & sing:
            bad.append(int(z))
    return bad
