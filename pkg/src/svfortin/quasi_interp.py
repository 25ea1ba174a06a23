"""Trace-preserving Scott-Zhang quasi-interpolation with edge flux correction.

Stage 1 sets every nodal value from an L2 projection of the field onto
``P^k`` of an assigned simplex.  Interior nodes (vertices, interior-edge nodes
and element nodes) use the lowest-index triangle containing them; boundary
edge nodes use their edge; a boundary vertex uses the lowest-index boundary
edge through it.  At a corner, where two boundary normals differ, the vertex
value is the vector whose component along each boundary normal matches the
projection on the corresponding edge.

Stage 2 adds a multiple of ``n_e`` times the nodal basis function of the
central edge-interior node of every edge, so that the mean normal flux of
the result on each edge equals that of the field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespaces import VelocitySpace
from .fields import FieldMoments, moments_of
from .mesh import Triangulation
from .polynomials import edge_eval_matrix, edge_lagrange_weights, edge_mass_matrix, eval_matrix, mass_matrix


@dataclass(frozen=True)
class NodeAssignment:
    kind: str
    simplex: tuple


class QuasiInterpolant:
    """The operator ``Pi1`` on a fixed mesh and degree ``k >= 2``.

    Attributes
    ----------
    V : VelocitySpace
        Unconstrained space providing the node numbering.
    tri_nodes, tri_node_t, tri_node_j : int arrays
        Nodes averaged over a triangle, the triangle and its local node index.
    edge_nodes, edge_node_e, edge_node_t : arrays
        Nodes averaged over an edge, the edge and the edge coordinate ``l_a``.
    corner_nodes : list of (node, e1, e2)
    correction_node : int array
        Designated edge-interior node of every edge.
    """

    def __init__(self, mesh: Triangulation, k: int, V: VelocitySpace | None = None):
        if k < 2:
            raise ValueError("the flux-corrected quasi-interpolant needs k >= 2")
        self.mesh = mesh
        self.k = k
        self.V = V if V is not None else VelocitySpace(mesh, k, "none")
        self._assign()

    def _assign(self):
        mesh, V, k = self.mesh, self.V, self.k
        nV = mesh.n_vertices
        first_tri = np.full(V.n_nodes, np.iinfo(np.int64).max, dtype=np.int64)
        first_j = np.zeros(V.n_nodes, dtype=np.int64)
        for t in range(mesh.n_triangles - 1, -1, -1):
            first_tri[V.tri_nodes[t]] = t
            first_j[V.tri_nodes[t]] = np.arange(V.n_local)
        vbe = {}
        for e in np.flatnonzero(mesh.boundary_edge):
            for z in mesh.edges[e]:
                vbe.setdefault(int(z), []).append(int(e))
        tn, en, ee, et, corners = [], [], [], [], []
        self.assignment: list[NodeAssignment] = []
        for i in range(V.n_nodes):
            if not V.boundary_node[i]:
                tn.append(i)
                self.assignment.append(NodeAssignment("triangle", (int(first_tri[i]),)))
                continue
            if V.node_kind[i] == 1:
                e = int(V.node_entity[i])
                p = i - nV - e * (k - 1)
                en.append(i)
                ee.append(e)
                et.append((k - 1 - p) / k)
                self.assignment.append(NodeAssignment("edge", (e,)))
                continue
            z = int(V.node_entity[i])
            es = sorted(vbe[z])
            if len(V.boundary_normals(i)) == 1:
                e = es[0]
                en.append(i)
                ee.append(e)
                et.append(1.0 if mesh.edges[e, 0] == z else 0.0)
                self.assignment.append(NodeAssignment("edge", (e,)))
            else:
                corners.append((i, es[0], es[1]))
                self.assignment.append(NodeAssignment("corner", (es[0], es[1])))
        self.tri_nodes = np.array(tn, dtype=np.int64)
        self.tri_node_t = first_tri[self.tri_nodes]
        self.tri_node_j = first_j[self.tri_nodes]
        self.edge_nodes = np.array(en, dtype=np.int64)
        self.edge_node_e = np.array(ee, dtype=np.int64)
        self.edge_node_t = np.array(et, dtype=float)
        self.corner_nodes = corners

        m_c = k // 2
        self.correction_node = nV + np.arange(mesh.n_edges) * (k - 1) + (k - 1 - m_c)
        w = edge_lagrange_weights(k)
        self.correction_weight = float(w[k - m_c])
        E = mesh.edges
        inner = nV + np.arange(mesh.n_edges)[:, None] * (k - 1) + np.arange(k - 1)[None, :]
        self.edge_node_table = np.hstack([E[:, :1], inner, E[:, 1:]])
        self.edge_weights = w

    # -- application ---------------------------------------------------------
    def _edge_projection(self, m: FieldMoments) -> np.ndarray:
        """Coefficients ``(nE, 2, k+1)`` of the L2 projection onto P^k(e)."""
        Me = edge_mass_matrix(self.k, self.k)
        flat = m.edge.reshape(-1, self.k + 1)
        c = np.linalg.solve(Me, flat.T).T.reshape(m.edge.shape)
        return c / self.mesh.edge_lengths[:, None, None]

    def stage1(self, m: FieldMoments) -> np.ndarray:
        mesh, k, V = self.mesh, self.k, self.V
        u = np.zeros((V.n_nodes, 2))
        M = mass_matrix(k, k)
        flat = m.tri.reshape(-1, M.shape[0])
        ct = np.linalg.solve(M, flat.T).T.reshape(m.tri.shape) / mesh.areas[:, None, None]
        Ek = eval_matrix(k, V.basis.nodes)
        nodal = ct @ Ek.T
        u[self.tri_nodes] = nodal[self.tri_node_t, :, self.tri_node_j]
        ce = self._edge_projection(m)
        if len(self.edge_nodes):
            ev = np.stack([edge_eval_matrix(k, t)[0] for t in self.edge_node_t])
            u[self.edge_nodes] = np.einsum("ncm,nm->nc", ce[self.edge_node_e], ev)
        for i, e1, e2 in self.corner_nodes:
            z = int(V.node_entity[i])
            Nrm = mesh.edge_normals[[e1, e2]]
            rhs = []
            for e, nrm in ((e1, Nrm[0]), (e2, Nrm[1])):
                t = 1.0 if mesh.edges[e, 0] == z else 0.0
                val = ce[e] @ edge_eval_matrix(k, t)[0]
                rhs.append(nrm @ val)
            u[i] = np.linalg.solve(Nrm, np.array(rhs))
        return u

    def discrete_flux(self, u: np.ndarray) -> np.ndarray:
        """``int_e u . n_e ds`` for nodal values ``u`` of shape ``(n_nodes, 2)``."""
        vals = u[self.edge_node_table]
        integ = np.einsum("enc,n->ec", vals, self.edge_weights) * self.mesh.edge_lengths[:, None]
        return np.einsum("ec,ec->e", integ, self.mesh.edge_normals)

    def apply_moments(self, m: FieldMoments) -> np.ndarray:
        u = self.stage1(m)
        mismatch = m.edge_flux(self.mesh) - self.discrete_flux(u)
        alpha = mismatch / (self.mesh.edge_lengths * self.correction_weight)
        u[self.correction_node] += alpha[:, None] * self.mesh.edge_normals
        return u.reshape(-1)

    def apply(self, v) -> np.ndarray:
        """Ambient velocity vector of ``Pi1 v``."""
        return self.apply_moments(moments_of(self.mesh, self.k, v))


def apply_pi1(op: QuasiInterpolant, v) -> np.ndarray:
    return op.apply(v)
