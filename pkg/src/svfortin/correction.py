"""Local divergence corrections and the local right inverse of the divergence.

For a region ``D`` with local velocity space ``V(D)``, divergence-free part
``V0(D)`` and pressure space ``Q(D)``, the correction ``Pi2_D v`` is the unique
element of ``V(D)`` whose divergence has the same moments against ``Q(D)``
as ``div v`` and whose L2 moments against ``V0(D)`` match those of ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .fespaces import (LocalVelocitySubspace, PressureSpace, VelocitySpace, local_velocity_subspace,
                       mean_complement)
from .fields import FieldMoments, moments_of
from .polynomials import dim, mass_matrix, multinomial, piecewise_lp_norm
from .singularity import Region, RegionDecomposition, RegionKind

SIGMA_MIN = 1e-9


class SingularSystemError(RuntimeError):
    pass


def _rows(tris: np.ndarray, width: int) -> np.ndarray:
    return (np.asarray(tris)[:, None] * width + np.arange(width)[None, :]).ravel()


def _block_mass(mesh, tris, degree: int, comps: int) -> np.ndarray:
    M = np.kron(np.eye(comps), mass_matrix(degree, degree))
    return sla.block_diag(*[mesh.areas[t] * M for t in tris]) if len(tris) else np.zeros((0, 0))


@dataclass
class LocalCorrectionOperator:
    """Factored moment system of one region.

    ``apply_moments`` returns the ambient velocity vector of ``Pi2_D v``.
    """

    region: Region
    sub: LocalVelocitySubspace
    phi: sps.csr_matrix
    system: np.ndarray
    sigma_min: float
    condition: float
    R_div: np.ndarray
    R_tri: np.ndarray
    div_rows: np.ndarray
    tri_rows: np.ndarray

    @property
    def size(self) -> int:
        return self.system.shape[0]

    def coordinates(self, m: FieldMoments) -> np.ndarray:
        if self.size == 0:
            return np.zeros(0)
        return self.R_div @ m.div.reshape(-1)[self.div_rows] + self.R_tri @ m.tri.reshape(-1)[self.tri_rows]

    def apply_moments(self, m: FieldMoments) -> np.ndarray:
        if self.size == 0:
            return np.zeros(self.phi.shape[0])
        return self.phi @ self.coordinates(m)


def build_local_correction(V: VelocitySpace, sub: LocalVelocitySubspace,
                           sigma_tol: float = SIGMA_MIN) -> LocalCorrectionOperator:
    """Assemble and invert the square moment system of ``sub.region``."""
    mesh, k = V.mesh, V.k
    region = sub.region
    D, P = region.triangles, region.patch_triangles
    nq, nk = dim(k - 1), dim(k)
    div_rows = _rows(D, nq)
    tri_rows = _rows(P, 2 * nk)
    m = sub.dim_V
    if m == 0:
        z = np.zeros((0, 0))
        return LocalCorrectionOperator(region, sub, sps.csr_matrix((V.ambient_dim, 0)), z, np.inf, 1.0,
                                       np.zeros((0, len(div_rows))), np.zeros((0, len(tri_rows))),
                                       div_rows, tri_rows)
    if sub.dim_Q + sub.dim_V0 != m:
        raise SingularSystemError(f"{region.label}: moment count {sub.dim_Q}+{sub.dim_V0} != dim {m}")
    phi = sub.ambient_basis(V)
    coef = np.asarray(V.coef_map[tri_rows] @ phi)
    MD = _block_mass(mesh, D, k - 1, 1)
    MV = _block_mass(mesh, P, k, 2)
    Zq, K = sub.qbasis, sub.divfree
    A_div = Zq.T @ MD
    A_tri = K.T @ coef.T
    S = np.vstack([A_div @ sub.div_D, A_tri @ MV @ coef])
    # moments of v are raw integrals, so the right-hand side of the div rows is
    # Zq^T (int div v l^alpha) and of the L2 rows K^T coef^T (int v l^alpha)
    B_div = np.vstack([Zq.T, np.zeros((K.shape[1], Zq.shape[0]))])
    B_tri = np.vstack([np.zeros((Zq.shape[1], coef.shape[0])), A_tri])
    scale = np.linalg.norm(S, axis=1)
    scale[scale == 0] = 1.0
    Sn = S / scale[:, None]
    sv = np.linalg.svd(Sn, compute_uv=False)
    smin = float(sv[-1])
    if smin <= sigma_tol:
        raise SingularSystemError(f"{region.label}: moment system is singular (sigma_min={smin:.3e})")
    lu = sla.lu_factor(Sn)
    R_div = sla.lu_solve(lu, B_div / scale[:, None])
    R_tri = sla.lu_solve(lu, B_tri / scale[:, None])
    # the basis lives on the nodes of P(D); dense storage would scale with the mesh
    return LocalCorrectionOperator(region, sub, sps.csr_matrix(phi), Sn, smin, float(sv[0] / smin), R_div, R_tri,
                                   div_rows, tri_rows)


class GlobalCorrection:
    """``Pi2``: the sum of the regional corrections in region order."""

    def __init__(self, V: VelocitySpace, Q: PressureSpace, dec: RegionDecomposition):
        if dec.variant != Q.variant:
            raise ValueError("decomposition and pressure space variants differ")
        self.V, self.Q, self.dec = V, Q, dec
        self.subspaces = [local_velocity_subspace(V, Q, r) for r in dec.regions]
        self.operators = [build_local_correction(V, s) for s in self.subspaces]

    def apply_moments(self, m: FieldMoments) -> np.ndarray:
        out = np.zeros(self.V.ambient_dim)
        for op in self.operators:
            out += op.apply_moments(m)
        return out

    def apply(self, v) -> np.ndarray:
        return self.apply_moments(moments_of(self.V.mesh, self.V.k, v))


def apply_pi2_local(op: LocalCorrectionOperator, v, V: VelocitySpace) -> np.ndarray:
    return op.apply_moments(moments_of(V.mesh, V.k, v))


def apply_pi2_global(glob: GlobalCorrection, v) -> np.ndarray:
    return glob.apply(v)


class RegionBalance:
    """Flux rebalancing between regions for odd constrained vertices.

    If a region ``D`` holds a constrained vertex with an odd number of
    triangles, constants are not restrictions of pressures to ``D``, and the
    restrictions ``R(D)`` are ``Q(D)`` plus one direction ``r_D`` orthogonal to
    ``Q(D)`` (for the other regions ``r_D = 1``).  Matching
    ``int_D div v r_D`` on every region, up to one common multiple of
    ``int_D r_D``, is then not implied by per-triangle flux preservation.
    This stage adds normal edge fields on the edges between regions, with
    coefficients from the minimum-norm solution of

        sum_e alpha_e int_D div(phi_e n_e) r_D + lambda int_D r_D = mu_D,

    where ``mu_D`` is the residual pairing of the input.  The fields vanish on
    the boundary, so traces are kept.  The stage is inactive (and the operator
    stays local) when no region has such a vertex.
    """

    def __init__(self, V: VelocitySpace, Q: PressureSpace, dec: RegionDecomposition, tol: float = 1e-9):
        mesh, k = V.mesh, V.k
        self.V = V
        nq = dim(k - 1)
        Mq = mass_matrix(k - 1, k - 1)
        one = multinomial(k - 1).astype(float)
        # r_D pairs with moments directly and, through the mass matrix, with coefficients
        directions, weights, rows, odd = [], [], [], []
        for r in dec.regions:
            pc = mean_complement(Q, r.triangles)
            odd.append(pc is not None)
            pc = np.tile(one, (len(r.triangles), 1)) if pc is None else pc
            directions.append(pc.reshape(-1))
            weights.append((mesh.areas[r.triangles, None] * (pc @ Mq.T)).reshape(-1))
            rows.append(_rows(r.triangles, nq))
        self.odd = np.array(odd, dtype=bool)
        self.directions, self.rows = directions, rows
        self.active = bool(self.odd.any())
        if not self.active:
            return
        own = dec.owner
        et = mesh.edge_triangles
        inner = et[:, 1] >= 0
        self.edges = np.flatnonzero(inner & (own[et[:, 0]] != own[np.maximum(et[:, 1], 0)]))
        m_c = k // 2
        node = mesh.n_vertices + self.edges * (k - 1) + (k - 1 - m_c)
        n = mesh.edge_normals[self.edges]
        self.fields = np.zeros((V.ambient_dim, len(self.edges)))
        j = np.arange(len(self.edges))
        self.fields[2 * node, j] = n[:, 0]
        self.fields[2 * node + 1, j] = n[:, 1]
        div = V.div_map @ self.fields
        G = np.zeros((len(dec.regions), len(self.edges) + 1))
        for i, (w, rr) in enumerate(zip(weights, rows)):
            G[i, :-1] = w @ div[rr]
            G[i, -1] = w @ np.tile(one, len(rr) // nq)
        sv = np.linalg.svd(G, compute_uv=False)
        if sv[-1] <= tol * sv[0]:
            raise SingularSystemError(f"region balance system is rank deficient (sigma_min={sv[-1]:.3e})")
        self.system = G
        self.solver = np.linalg.pinv(G)

    def residuals(self, m: FieldMoments) -> np.ndarray:
        """``mu_D = int_D div(v) r_D`` from moments, per region."""
        d = m.div.reshape(-1)
        return np.array([w @ d[rr] for w, rr in zip(self.directions, self.rows)])

    def apply_moments(self, m: FieldMoments) -> np.ndarray:
        if not self.active:
            return np.zeros(self.V.ambient_dim)
        x = self.solver @ self.residuals(m)
        return self.fields @ x[:-1]


# -- right inverse --------------------------------------------------------

def clockwise_fan(mesh, z: int) -> np.ndarray:
    """Triangles around an interior vertex, clockwise, starting at the lowest index."""
    fan = [int(t) for t in mesh.vertex_to_triangles[z]]
    i = int(np.argmin(fan))
    fan = fan[i:] + fan[:i]
    return np.array([fan[0]] + fan[1:][::-1], dtype=np.int64)


def _shared_edge(mesh, t1: int, t2: int) -> int:
    s = set(int(e) for e in mesh.tri_edges[t1]) & set(int(e) for e in mesh.tri_edges[t2])
    if len(s) != 1:
        raise ValueError(f"triangles {t1} and {t2} do not share exactly one edge")
    return s.pop()


def edge_bubble(V: VelocitySpace, e: int, direction) -> np.ndarray:
    """Ambient vector of ``l_a l_b * direction`` on the two triangles of edge ``e``."""
    mesh = V.mesh
    u = np.zeros((V.n_nodes, 2))
    a, b = (int(x) for x in mesh.edges[e])
    for t in mesh.edge_triangles[e]:
        if t < 0:
            continue
        ia, ib = mesh.local_index(int(t), a), mesh.local_index(int(t), b)
        vals = V.basis.nodes[:, ia] * V.basis.nodes[:, ib]
        u[V.tri_nodes[t]] = vals[:, None] * np.asarray(direction)[None, :]
    return u.reshape(-1)


@dataclass(frozen=True)
class BubbleData:
    triangles: np.ndarray
    edges: np.ndarray
    normals: np.ndarray
    fields: list


def bubble_data(V: VelocitySpace, region: Region) -> BubbleData:
    """Ordered triangles, interior edges and normalized fields ``v_i`` of a 4-patch."""
    if region.kind != RegionKind.INTERIOR_SINGULAR_PATCH or len(region.triangles) != 4:
        raise ValueError("edge bubbles need a 4-triangle interior singular patch")
    mesh = V.mesh
    z = int(region.anchor)
    T = clockwise_fan(mesh, z)
    edges, normals, fields = [], [], []
    for i in range(4):
        t1, t2 = int(T[i]), int(T[(i + 1) % 4])
        e = _shared_edge(mesh, t1, t2)
        n = mesh.edge_normals[e].copy()
        if mesh.edge_triangles[e, 0] != t1:
            n = -n
        c = mesh.edge_lengths[e] / 6.0
        edges.append(e)
        normals.append(n)
        fields.append(edge_bubble(V, e, n) / c)
    return BubbleData(T, np.array(edges), np.array(normals), fields)


def edge_bubble_psi(V: VelocitySpace, region: Region, a, tol: float = 1e-12) -> np.ndarray:
    """Field with prescribed triangle means ``a`` of its divergence on a 4-patch.

    ``a`` is ordered like :func:`clockwise_fan` and must sum to zero.
    """
    a = np.asarray(a, dtype=float)
    if abs(a.sum()) > tol * max(1.0, np.abs(a).sum()):
        raise ValueError(f"triangle means must sum to zero (sum={a.sum():.3e})")
    bd = bubble_data(V, region)
    s = np.cumsum(a)
    return s[0] * bd.fields[0] + s[1] * bd.fields[1] + s[2] * bd.fields[2]


@dataclass(frozen=True)
class RightInverseResult:
    v: np.ndarray
    residual: float
    support_ok: bool
    measured_constant: float
    used_bubbles: bool


def _support_ok(V: VelocitySpace, v: np.ndarray, patch: np.ndarray) -> bool:
    nodes = np.flatnonzero(np.abs(v.reshape(-1, 2)).max(axis=1) > 0)
    allowed = np.zeros(V.n_nodes, dtype=bool)
    in_patch = np.zeros(V.mesh.n_triangles)
    in_patch[patch] = 1.0
    inside = V.node_support @ in_patch
    total = np.asarray(V.node_support.sum(axis=1)).ravel()
    allowed[:] = np.isclose(inside, total)
    return bool(np.all(allowed[nodes]))


def _local_norm(mesh, tris, degree, coeffs, p):
    full = np.zeros((mesh.n_triangles,) + coeffs.shape[1:])
    full[tris] = coeffs
    return piecewise_lp_norm(mesh, degree, full, p, tris)


def grad_norm(V: VelocitySpace, v: np.ndarray, tris, p: float = 2) -> float:
    c = V.coefficients(v)
    return V.field(v).grad_lp_norm(p, tris) if c.size else 0.0


def right_inverse_divergence(V: VelocitySpace, sub: LocalVelocitySubspace, q: np.ndarray,
                             p: float = 2, use_bubbles: bool = True) -> RightInverseResult:
    """Discrete velocity ``v`` in ``V(D)`` with ``div v = q`` on ``D``.

    ``q`` holds the ``P^{k-1}`` coefficients on ``region.triangles`` (in that
    order).  On 4-triangle interior singular patches the triangle means are
    first removed with edge bubbles; the remainder is solved in the
    minimum-norm sense in the coordinates of ``V(D)``.
    """
    mesh, k = V.mesh, V.k
    region = sub.region
    D = region.triangles
    nq = dim(k - 1)
    q = np.asarray(q, dtype=float).reshape(-1)
    v = np.zeros(V.ambient_dim)
    bubbles = (use_bubbles and region.kind == RegionKind.INTERIOR_SINGULAR_PATCH and len(D) == 4)
    r = q.copy()
    if bubbles:
        bd = bubble_data(V, region)
        pos = {int(t): i for i, t in enumerate(D)}
        w = mass_matrix(k - 1, 0)[:, 0]
        qc = q.reshape(len(D), nq)
        a = np.array([mesh.areas[t] * (qc[pos[int(t)]] @ w) for t in bd.triangles])
        a -= a.mean() if abs(a.sum()) < 1e-9 * max(np.abs(a).sum(), 1e-300) else 0.0
        psi = edge_bubble_psi(V, region, a, tol=1e-9)
        v += psi
        r = r - V.divergence(psi)[D].reshape(-1)
    if sub.dim_V:
        x, *_ = np.linalg.lstsq(sub.div_D, r, rcond=None)
        v += sub.ambient(V, x)
    dv = V.divergence(v)[D].reshape(len(D), nq)
    qq = q.reshape(len(D), nq)
    err = _local_norm(mesh, D, k - 1, (dv - qq)[:, None, :], 2)
    nrm = _local_norm(mesh, D, k - 1, qq[:, None, :], 2)
    resid = err / nrm if nrm > 0 else err
    gp = grad_norm(V, v, region.patch_triangles, p)
    qp = _local_norm(mesh, D, k - 1, qq[:, None, :], p)
    const = gp / qp if qp > 0 else 0.0
    return RightInverseResult(v, float(resid), _support_ok(V, v, region.patch_triangles), float(const),
                              bubbles)


def right_inverse_matrix(V: VelocitySpace, sub: LocalVelocitySubspace) -> np.ndarray:
    """Ambient image of each ``Q(D)`` basis vector under the minimum-norm solve."""
    if sub.dim_V == 0 or sub.dim_Q == 0:
        return np.zeros((V.ambient_dim, sub.dim_Q))
    X = np.linalg.pinv(sub.div_D) @ sub.qbasis
    return sub.ambient_basis(V) @ X


def right_inverse_constant(V: VelocitySpace, sub: LocalVelocitySubspace) -> float:
    """``max_q ||grad R q||_{L2(P(D))} / ||q||_{L2(D)}`` via a generalized eigenproblem."""
    if sub.dim_Q == 0:
        return 0.0
    R = right_inverse_matrix(V, sub)
    A = R.T @ (V.stiffness_matrix @ R)
    MD = _block_mass(V.mesh, sub.region.triangles, V.k - 1, 1)
    B = sub.qbasis.T @ MD @ sub.qbasis
    lam = sla.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), eigvals_only=True)
    return float(np.sqrt(max(lam[-1], 0.0)))


# -- stability observables ---------------------------------------------------

@dataclass(frozen=True)
class RegionStability:
    label: str
    kind: str
    theta: float
    h: float
    ratios: dict


def region_stability(glob: GlobalCorrection, v, ps=(1, 2, np.inf)) -> list[RegionStability]:
    """Per-region ``(||Pi2_D v|| + h ||grad Pi2_D v||) / (||v|| + C_D h ||div v||)``.

    ``C_D = 1 + 1/Theta(D)``; norms are taken on ``P(D)``.  ``v`` is a
    closed-form field.
    """
    from .fields import field_norms

    V = glob.V
    m = moments_of(V.mesh, V.k, v)
    out = []
    for op in glob.operators:
        r = op.region
        fld = V.field(op.apply_moments(m))
        CD = np.inf if r.theta_D == 0 else 1.0 + 1.0 / r.theta_D
        ratios = {}
        for p in ps:
            num = fld.lp_norm(p, r.patch_triangles) + r.h_D * fld.grad_lp_norm(p, r.patch_triangles)
            a, _, d = field_norms(V.mesh, v, r.patch_triangles, p)
            den = a + CD * r.h_D * d
            ratios[p] = num / den if den > 0 else (0.0 if num == 0 else np.inf)
        out.append(RegionStability(r.label, r.kind.label, r.theta_D, r.h_D, ratios))
    return out
