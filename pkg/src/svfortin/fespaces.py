"""Scott-Vogelius velocity and pressure spaces and their local subspaces.

Velocity vectors live in an *ambient* nodal layout: the value of component
``c`` at global Lagrange node ``i`` is entry ``2 * i + c``.  A boundary
condition is expressed by a sparse parametrization ``E`` whose columns span
the admissible vectors in ambient coordinates.

Pressure vectors live in the discontinuous layout ``t * dim(k-1) + alpha``:
monomial coefficients of ``P^{k-1}`` on each triangle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import RANK_RTOL, RankError, normalize_rows, null_space, rank_info
from .mesh import Triangulation
from .polynomials import (
    LOCAL_EDGES,
    PiecewisePolynomialField,
    dim,
    gradient_matrices,
    integral_weights,
    lagrange_basis,
    mass_matrix,
    multinomial,
    vertex_monomial,
)
from .singularity import Region, VertexClassification, classify_vertices

BOUNDARY_CONDITIONS = ("none", "dirichlet", "slip")
VARIANT_BC = {"dirichlet": "dirichlet", "slip": "slip"}
_FLAT_TOL = 1e-10


class VelocitySpace:
    """Continuous piecewise ``P^k`` vector fields on a triangulation.

    Parameters
    ----------
    mesh : Triangulation
    k : int
        Polynomial degree, ``k >= 1``.
    bc : {"none", "dirichlet", "slip"}
        ``dirichlet`` removes every boundary node.  ``slip`` imposes
        ``v(node) . n = 0`` at boundary nodes; nodes with two distinct
        boundary normals (corners) are pinned to zero.

    Attributes
    ----------
    tri_nodes : (nT, dim(k)) int array
        Global node of each local lattice node.
    node_xy : (n_nodes, 2) array
    node_kind, node_entity : int arrays
        0/1/2 for vertex/edge/interior nodes; the vertex, edge or triangle id.
    boundary_node : bool array
    E : scipy.sparse.csr_matrix
        Ambient-by-``dim`` parametrization of the space.
    param_node : int array
        Node carrying each parameter column.
    """

    def __init__(self, mesh: Triangulation, k: int, bc: str = "none"):
        if k < 1:
            raise ValueError(f"unsupported degree k={k}; need k >= 1")
        if bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {bc!r}")
        self.mesh = mesh
        self.k = k
        self.bc = bc
        self.basis = lagrange_basis(k)
        self._number_nodes()
        self._build_parametrization()

    # -- numbering ---------------------------------------------------------
    def _number_nodes(self):
        mesh, k, B = self.mesh, self.k, self.basis
        nV, nE, nT = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
        per_edge = k - 1
        per_tri = int(np.count_nonzero(B.kind == 2))
        self.n_nodes = nV + nE * per_edge + nT * per_tri
        E = np.asarray(B.nodes * k).round().astype(np.int64)
        tri_nodes = np.empty((nT, B.size), dtype=np.int64)
        interior_rank = np.cumsum(B.kind == 2) - 1
        for j in range(B.size):
            kind = B.kind[j]
            if kind == 0:
                tri_nodes[:, j] = mesh.triangles[:, B.entity[j]]
            elif kind == 1:
                a, b = LOCAL_EDGES[B.entity[j]]
                ga, gb = mesh.triangles[:, a], mesh.triangles[:, b]
                eid = mesh.tri_edges[:, B.entity[j]]
                m = np.where(ga < gb, E[j, a], E[j, b])
                tri_nodes[:, j] = nV + eid * per_edge + (k - 1 - m)
            else:
                tri_nodes[:, j] = nV + nE * per_edge + np.arange(nT) * per_tri + interior_rank[j]
        tri_nodes.setflags(write=False)
        self.tri_nodes = tri_nodes

        kind = np.empty(self.n_nodes, dtype=np.int64)
        ent = np.empty(self.n_nodes, dtype=np.int64)
        kind[:nV], ent[:nV] = 0, np.arange(nV)
        s = nV + nE * per_edge
        kind[nV:s], ent[nV:s] = 1, np.repeat(np.arange(nE), per_edge)
        kind[s:], ent[s:] = 2, np.repeat(np.arange(nT), per_tri)
        self.node_kind, self.node_entity = kind, ent

        xy = np.empty((self.n_nodes, 2))
        P = mesh.vertices[mesh.triangles]
        for j in range(B.size):
            xy[tri_nodes[:, j]] = np.einsum("i,tij->tj", B.nodes[j], P)
        self.node_xy = xy

        bnd = np.zeros(self.n_nodes, dtype=bool)
        bnd[:nV] = mesh.boundary_vertex
        bnd[nV:s] = np.repeat(mesh.boundary_edge, per_edge)
        self.boundary_node = bnd

        rows = tri_nodes.ravel()
        cols = np.repeat(np.arange(nT), B.size)
        S = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes, nT))
        S.data[:] = 1.0
        self.node_support = S

    def boundary_normals(self, node: int) -> np.ndarray:
        """Distinct outward unit normals ``(m, 2)`` at a boundary node."""
        mesh = self.mesh
        if self.node_kind[node] == 1:
            return mesh.edge_normals[self.node_entity[node]][None, :]
        z = self.node_entity[node]
        es = [e for e in self._vertex_boundary_edges[z]]
        ns = mesh.edge_normals[es]
        if len(ns) == 2 and abs(ns[0, 0] * ns[1, 1] - ns[0, 1] * ns[1, 0]) < _FLAT_TOL and ns[0] @ ns[1] > 0:
            return ns[:1]
        return ns

    @cached_property
    def _vertex_boundary_edges(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for e in np.flatnonzero(self.mesh.boundary_edge):
            for z in self.mesh.edges[e]:
                out.setdefault(int(z), []).append(int(e))
        return out

    def _build_parametrization(self):
        n = self.n_nodes
        rows, cols, vals, pnode = [], [], [], []
        crow, ccol, cval = [], [], []
        ncon = 0
        col = 0
        for i in range(n):
            if not self.boundary_node[i] or self.bc == "none":
                rows += [2 * i, 2 * i + 1]
                cols += [col, col + 1]
                vals += [1.0, 1.0]
                pnode += [i, i]
                col += 2
                continue
            if self.bc == "dirichlet":
                crow += [ncon, ncon + 1]
                ccol += [2 * i, 2 * i + 1]
                cval += [1.0, 1.0]
                ncon += 2
                continue
            ns = self.boundary_normals(i)
            for nv in ns:
                crow += [ncon, ncon]
                ccol += [2 * i, 2 * i + 1]
                cval += [float(nv[0]), float(nv[1])]
                ncon += 1
            if len(ns) == 1:
                t = np.array([-ns[0, 1], ns[0, 0]])
                rows += [2 * i, 2 * i + 1]
                cols += [col, col]
                vals += [float(t[0]), float(t[1])]
                pnode.append(i)
                col += 1
        self.dim = col
        self.E = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, col))
        self.param_node = np.array(pnode, dtype=np.int64)
        self.constraint_rows = sp.csr_matrix((cval, (crow, ccol)), shape=(ncon, 2 * n))

    # -- sizes -------------------------------------------------------------
    @property
    def ambient_dim(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_local(self) -> int:
        return self.basis.size

    # -- operators ---------------------------------------------------------
    @cached_property
    def coef_map(self) -> sp.csr_matrix:
        """Ambient vector to monomial coefficients, flattened as ``(t, c, alpha)``."""
        nT, nk = self.mesh.n_triangles, self.n_local
        C = self.basis.coeffs
        t, c, a, j = np.meshgrid(np.arange(nT), np.arange(2), np.arange(nk), np.arange(nk), indexing="ij")
        rows = ((t * 2 + c) * nk + a).ravel()
        cols = (2 * self.tri_nodes[t, j] + c).ravel()
        vals = C[a, j].ravel()
        keep = vals != 0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nT * 2 * nk, self.ambient_dim))

    @cached_property
    def div_map(self) -> sp.csr_matrix:
        """Ambient vector to ``P^{k-1}`` coefficients of the divergence, ``(t, alpha)``."""
        nT, nk, nq = self.mesh.n_triangles, self.n_local, dim(self.k - 1)
        Dx, Dy = gradient_matrices(self.k, self.mesh.bary_grads)
        Bx = Dx @ self.basis.coeffs
        By = Dy @ self.basis.coeffs
        t, a, j = np.meshgrid(np.arange(nT), np.arange(nq), np.arange(nk), indexing="ij")
        rows = np.concatenate([(t * nq + a).ravel()] * 2)
        cols = np.concatenate([(2 * self.tri_nodes[t, j]).ravel(), (2 * self.tri_nodes[t, j] + 1).ravel()])
        vals = np.concatenate([Bx[t, a, j].ravel(), By[t, a, j].ravel()])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nT * nq, self.ambient_dim))

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return (self.coef_map @ u).reshape(self.mesh.n_triangles, 2, self.n_local)

    def field(self, u: np.ndarray) -> PiecewisePolynomialField:
        return PiecewisePolynomialField(self.mesh, self.k, self.coefficients(u))

    def divergence(self, u: np.ndarray) -> np.ndarray:
        return (self.div_map @ u).reshape(self.mesh.n_triangles, dim(self.k - 1))

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of ``f(x, y) -> (2, n)`` as an ambient vector."""
        vals = np.asarray(f(self.node_xy[:, 0], self.node_xy[:, 1]), dtype=float)
        return vals.T.reshape(-1)

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self.E @ x

    def constraint_residual(self, u: np.ndarray) -> float:
        if self.constraint_rows.shape[0] == 0:
            return 0.0
        return float(np.abs(self.constraint_rows @ u).max())

    def _block_matrix(self, blocks: np.ndarray) -> sp.csr_matrix:
        """``coef_map^T diag(blocks) coef_map`` for per-triangle coefficient blocks."""
        nT = self.mesh.n_triangles
        nb = blocks.shape[1]
        r, c = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
        rows = (np.arange(nT)[:, None, None] * nb + r).ravel()
        cols = (np.arange(nT)[:, None, None] * nb + c).ravel()
        M = sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(nT * nb, nT * nb))
        return (self.coef_map.T @ M @ self.coef_map).tocsr()

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        """Ambient L2 Gram matrix."""
        M = mass_matrix(self.k, self.k)
        blk = np.kron(np.eye(2), M)
        blocks = self.mesh.areas[:, None, None] * blk[None]
        return self._block_matrix(blocks)

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        """Ambient H1-seminorm Gram matrix (sum over components of grad . grad)."""
        Dx, Dy = gradient_matrices(self.k, self.mesh.bary_grads)
        M = mass_matrix(self.k - 1, self.k - 1)
        K = np.einsum("tai,ab,tbj->tij", Dx, M, Dx) + np.einsum("tai,ab,tbj->tij", Dy, M, Dy)
        K = self.mesh.areas[:, None, None] * K
        blocks = np.zeros((self.mesh.n_triangles, 2 * self.n_local, 2 * self.n_local))
        nk = self.n_local
        blocks[:, :nk, :nk] = K
        blocks[:, nk:, nk:] = K
        return self._block_matrix(blocks)


def build_velocity_space(mesh: Triangulation, k: int, bc: str = "none") -> VelocitySpace:
    return VelocitySpace(mesh, k, bc)


# -- pressure -------------------------------------------------------------

def a_h_z_row(mesh: Triangulation, degree: int, z: int) -> tuple[np.ndarray, np.ndarray]:
    """Sparse row of the alternating vertex functional: ``(indices, values)``."""
    fan = mesh.vertex_to_triangles[z]
    L = len(fan)
    nd = dim(degree)
    idx = np.array([int(t) * nd + vertex_monomial(degree, mesh.local_index(int(t), z)) for t in fan],
                   dtype=np.int64)
    sign = np.array([(-1.0) ** (L - j) for j in range(1, L + 1)])
    return idx, sign


def A_h_z(q, z: int, mesh: Triangulation | None = None, degree: int | None = None) -> float:
    """Alternating sum of one-sided values of ``q`` at vertex ``z``.

    ``q`` is a scalar :class:`PiecewisePolynomialField` or a flat coefficient
    vector (then ``mesh`` and ``degree`` are required).
    """
    if isinstance(q, PiecewisePolynomialField):
        mesh, degree, flat = q.mesh, q.degree, q.coeffs[:, 0, :].ravel()
    else:
        flat = np.asarray(q, dtype=float).ravel()
    idx, sign = a_h_z_row(mesh, degree, z)
    return float(sign @ flat[idx])


class PressureSpace:
    """Discontinuous ``P^{degree}`` with mean-zero and alternating-vertex constraints.

    Parameters
    ----------
    mesh : Triangulation
    degree : int
        Pressure degree ``k - 1``.
    classification : VertexClassification, optional
    variant : {"dirichlet", "slip"}
        ``dirichlet`` constrains every singular vertex, ``slip`` only the
        interior ones.
    """

    def __init__(self, mesh: Triangulation, degree: int,
                 classification: VertexClassification | None = None, variant: str = "dirichlet"):
        if degree < 0:
            raise ValueError("pressure degree must be >= 0")
        self.mesh = mesh
        self.degree = degree
        self.variant = variant
        self.classification = classification if classification is not None else classify_vertices(mesh)
        self.constrained = self.classification.constrained_vertices(variant)
        self.n_local = dim(degree)
        self.ambient_dim = mesh.n_triangles * self.n_local

    @cached_property
    def mean_row(self) -> np.ndarray:
        return (self.mesh.areas[:, None] * integral_weights(self.degree)[None, :]).ravel()

    @cached_property
    def vertex_rows(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, z in enumerate(self.constrained):
            idx, sign = a_h_z_row(self.mesh, self.degree, int(z))
            rows += [r] * len(idx)
            cols += idx.tolist()
            vals += sign.tolist()
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(self.constrained), self.ambient_dim))

    @cached_property
    def constraint_matrix(self) -> sp.csr_matrix:
        return sp.vstack([sp.csr_matrix(self.mean_row[None, :]), self.vertex_rows]).tocsr()

    @cached_property
    def constraint_rank(self) -> int:
        C = self.constraint_matrix.toarray()
        return rank_info(normalize_rows(C)).rank

    @property
    def dim(self) -> int:
        return self.ambient_dim - self.constraint_rank

    @cached_property
    def basis(self) -> np.ndarray:
        """Euclidean-orthonormal basis ``(ambient_dim, dim)`` of the constrained space."""
        C = normalize_rows(self.constraint_matrix.toarray())
        Z, info = null_space(C, self.ambient_dim)
        if info.rank != self.constraint_rank:
            raise RankError("inconsistent constraint rank")
        return Z

    def basis_field(self, i: int) -> PiecewisePolynomialField:
        return PiecewisePolynomialField(self.mesh, self.degree,
                                        self.basis[:, i].reshape(self.mesh.n_triangles, self.n_local))

    def residual(self, q: np.ndarray) -> float:
        """Largest constraint violation of a flat coefficient vector."""
        q = np.asarray(q, dtype=float).ravel()
        r = np.abs(self.constraint_matrix @ q)
        return float(r.max()) if len(r) else 0.0

    def A_h_z(self, q: np.ndarray, z: int) -> float:
        return A_h_z(q, z, self.mesh, self.degree)


def build_pressure_space(mesh: Triangulation, degree: int, classification=None,
                         variant: str = "dirichlet") -> PressureSpace:
    return PressureSpace(mesh, degree, classification, variant)


def divergence_matrix(V: VelocitySpace, Q: PressureSpace) -> sp.csr_matrix:
    """Map from the parameters of ``V`` to pressure ambient coefficients of ``div v``."""
    if V.mesh is not Q.mesh:
        raise ValueError("spaces live on different meshes")
    if Q.degree != V.k - 1:
        raise ValueError(f"pressure degree {Q.degree} does not match velocity degree {V.k}")
    return (V.div_map @ V.E).tocsr()


@dataclass(frozen=True)
class GlobalRank:
    rank: int
    dim_Q: int
    range_residual: float
    singular_values: np.ndarray

    @property
    def surjective(self) -> bool:
        return self.rank == self.dim_Q

    @property
    def deficiency(self) -> int:
        return self.dim_Q - self.rank


def global_divergence_rank(V: VelocitySpace, Q: PressureSpace, rtol: float = RANK_RTOL) -> GlobalRank:
    """Rank of ``div`` from ``V`` into the constrained pressure coordinates."""
    B = divergence_matrix(V, Q).toarray()
    Z = Q.basis
    G = Z.T @ B
    resid = np.linalg.norm(B - Z @ G) / max(np.linalg.norm(B), 1e-300)
    info = rank_info(G, rtol)
    return GlobalRank(info.rank, Z.shape[1], float(resid), info.singular_values)


# -- local subspaces ------------------------------------------------------

@dataclass(frozen=True)
class LocalVelocitySubspace:
    """``V(D)``: discrete velocities supported in ``P(D)`` with divergence in ``Q(D)``.

    Attributes
    ----------
    cols : int array
        Parameter columns of the global space whose support lies in ``P(D)``.
    basis : (len(cols), m) array
        Orthonormal coordinates of ``V(D)`` in those columns.
    divfree : (m, m0) array
        Coordinates (w.r.t. ``basis``) of the divergence-free subspace.
    qbasis : (|D| * dim(k-1), dq) array
        Orthonormal basis of ``Q(D)`` on the triangles of ``D``.
    div_D : (|D| * dim(k-1), m) array
        Divergence coefficients of the basis fields on ``D``.
    """

    region: Region
    variant: str
    cols: np.ndarray
    basis: np.ndarray
    divfree: np.ndarray
    qbasis: np.ndarray
    div_D: np.ndarray
    rank_div: int
    range_residual: float
    outside_residual: float

    @property
    def dim_V(self) -> int:
        return self.basis.shape[1]

    @property
    def dim_Q(self) -> int:
        return self.qbasis.shape[1]

    @property
    def dim_V0(self) -> int:
        return self.divfree.shape[1]

    @property
    def dimension_identity(self) -> bool:
        return self.dim_V == self.dim_Q + self.dim_V0

    @property
    def surjective(self) -> bool:
        return self.rank_div == self.dim_Q

    def ambient(self, V: VelocitySpace, x: np.ndarray) -> np.ndarray:
        """Ambient velocity vector of subspace coordinates ``x`` (w.r.t. ``basis``)."""
        return V.E[:, self.cols] @ (self.basis @ x)

    def ambient_basis(self, V: VelocitySpace) -> np.ndarray:
        return np.asarray(V.E[:, self.cols] @ self.basis)


def local_pressure_basis(Q: PressureSpace, tris: np.ndarray, mean: bool = True) -> np.ndarray:
    """Orthonormal basis of pressures in ``Q`` supported on the triangle set.

    With ``mean=False`` the zero-mean condition is dropped, which gives the
    restrictions to the set of functions obeying the vertex constraints.
    """
    mesh, nd = Q.mesh, Q.n_local
    tris = np.asarray(tris, dtype=np.int64)
    pos = {int(t): i for i, t in enumerate(tris)}
    rows = [np.concatenate([mesh.areas[t] * integral_weights(Q.degree) for t in tris])] if mean else []
    vs = set(int(v) for v in mesh.vertices_of(tris))
    for z in Q.constrained:
        if int(z) not in vs:
            continue
        idx, sign = a_h_z_row(mesh, Q.degree, int(z))
        r = np.zeros(len(tris) * nd)
        for ii, s in zip(idx, sign):
            t, a = divmod(int(ii), nd)
            if t in pos:
                r[pos[t] * nd + a] += s
        rows.append(r)
    if not rows:
        return np.eye(len(tris) * nd)
    Z, _ = null_space(normalize_rows(np.array(rows)), len(tris) * nd)
    return Z


def mean_complement(Q: PressureSpace, tris: np.ndarray, tol: float = 1e-10) -> np.ndarray | None:
    """Restriction direction of ``Q`` on a region not covered by ``Q(D)`` and constants.

    A constant is admissible on ``D`` unless ``D`` holds a constrained vertex
    with an odd number of triangles.  In that case the restrictions ``R(D)``
    exceed ``Q(D) + constants`` by one direction; the returned coefficients
    ``(|D|, dim)`` give the element of ``R(D)`` that is L2-orthogonal to
    ``Q(D)``, normalized in ``L2(D)``.  Returns ``None`` otherwise.
    """
    mesh, nd = Q.mesh, Q.n_local
    tris = np.asarray(tris, dtype=np.int64)
    ZR = local_pressure_basis(Q, tris, mean=False)
    ZQ = local_pressure_basis(Q, tris)
    M = block_mass(mesh, tris, Q.degree)
    one = np.tile(multinomial(Q.degree), len(tris))
    # component of 1 outside R(D) decides whether constants are admissible
    c = ZR @ np.linalg.solve(ZR.T @ M @ ZR, ZR.T @ M @ one) if ZR.shape[1] else np.zeros_like(one)
    gap = np.sqrt(max((one - c) @ M @ (one - c), 0.0) / (one @ M @ one))
    if gap < tol or ZR.shape[1] == ZQ.shape[1]:
        return None
    Y, _ = null_space((ZQ.T @ M @ ZR), ZR.shape[1])
    if Y.shape[1] != 1:
        raise RankError(f"expected a one-dimensional complement, found {Y.shape[1]}")
    p = ZR @ Y[:, 0]
    p /= np.sqrt(p @ M @ p)
    return p.reshape(len(tris), nd)


def block_mass(mesh: Triangulation, tris: np.ndarray, degree: int) -> np.ndarray:
    """Block-diagonal scalar mass matrix of ``P^degree`` on the triangle set."""
    M = mass_matrix(degree, degree)
    n = M.shape[0]
    out = np.zeros((len(tris) * n, len(tris) * n))
    for i, t in enumerate(tris):
        out[i * n:(i + 1) * n, i * n:(i + 1) * n] = mesh.areas[t] * M
    return out


def local_velocity_subspace(V: VelocitySpace, Q: PressureSpace, region: Region,
                            variant: str | None = None, rtol: float = RANK_RTOL) -> LocalVelocitySubspace:
    """Assemble ``V(D)``, ``V^0(D)`` and ``Q(D)`` for one region.

    The candidate columns are global parameters whose nodal basis function is
    supported in ``P(D)``.  On them we impose ``div v = 0`` on ``P(D) \\ D`` and
    the vertex functionals of the constrained singular vertices of ``D``.
    """
    variant = Q.variant if variant is None else variant
    if V.bc != VARIANT_BC[variant] or Q.variant != variant:
        raise ValueError(f"velocity bc {V.bc!r} / pressure variant {Q.variant!r} "
                         f"inconsistent with variant {variant!r}")
    if Q.degree != V.k - 1:
        raise ValueError("pressure degree must be k - 1")
    mesh = V.mesh
    nq = dim(V.k - 1)
    P = region.patch_triangles
    D = region.triangles
    in_patch = np.zeros(mesh.n_triangles)
    in_patch[P] = 1.0
    inside = V.node_support @ in_patch
    total = np.asarray(V.node_support.sum(axis=1)).ravel()
    ok_node = np.isclose(inside, total) & (total > 0)
    cols = np.flatnonzero(ok_node[V.param_node])
    DQ = local_pressure_basis(Q, D)
    if len(cols) == 0:
        empty = np.zeros((0, 0))
        return LocalVelocitySubspace(region, variant, cols, empty, empty, DQ,
                                     np.zeros((len(D) * nq, 0)), 0, 0.0, 0.0)

    prow = (P[:, None] * nq + np.arange(nq)[None, :]).ravel()
    Bp = np.asarray((V.div_map[prow] @ V.E[:, cols]).todense())
    pos = {int(t): i for i, t in enumerate(P)}
    d_mask = np.isin(P, D)
    out_rows = np.concatenate([np.arange(i * nq, (i + 1) * nq) for i in np.flatnonzero(~d_mask)]) \
        if np.any(~d_mask) else np.zeros(0, dtype=np.int64)
    d_rows = np.concatenate([np.arange(pos[int(t)] * nq, (pos[int(t)] + 1) * nq) for t in D])

    cons = [Bp[out_rows]]
    vs = set(int(v) for v in mesh.vertices_of(D))
    for z in Q.constrained:
        if int(z) not in vs:
            continue
        idx, sign = a_h_z_row(mesh, Q.degree, int(z))
        r = np.zeros(len(P) * nq)
        for ii, s in zip(idx, sign):
            t, a = divmod(int(ii), nq)
            r[pos[t] * nq + a] += s
        cons.append((r @ Bp)[None, :])
    wD = np.concatenate([mesh.areas[t] * integral_weights(V.k - 1) for t in D])
    cons.append((wD @ Bp[d_rows])[None, :])
    C = normalize_rows(np.vstack(cons))
    N, _ = null_space(C, len(cols), rtol)

    div_D = Bp[d_rows] @ N
    outside = float(np.linalg.norm(Bp[out_rows] @ N)) if len(out_rows) else 0.0
    G = DQ.T @ div_D
    nrm = max(np.linalg.norm(div_D), 1e-300)
    resid = float(np.linalg.norm(div_D - DQ @ G) / nrm)
    K, info = null_space(G, N.shape[1], rtol)
    scale = max(np.linalg.norm(Bp), 1e-300)
    return LocalVelocitySubspace(region, variant, cols, N, K, DQ, div_D, info.rank, resid,
                                 outside / scale)
