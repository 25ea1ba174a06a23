"""The Fortin operator ``Pi v = Pi1 v + Pi2 (v - Pi1 v)`` and its diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .correction import GlobalCorrection, RegionBalance
from .fespaces import VARIANT_BC, PressureSpace, VelocitySpace
from .fields import FieldMoments, discrete_moments, error_norms, moments_of, sobolev_norm
from .mesh import Triangulation
from .polynomials import PiecewisePolynomialField, dim, edge_mass_matrix, edge_eval_matrix, mass_matrix
from .quasi_interp import QuasiInterpolant
from .singularity import (VertexClassification, build_decomposition, classify_vertices, covering_sets,
                          theta_of_set)

VARIANTS = ("dirichlet", "slip")


@dataclass
class OperatorReport:
    """Residuals of the defining identities of one application of ``Pi``.

    ``divergence_residual`` is the maximum over the pressure basis of
    ``|int div(Pi v - v) q| / (||q|| * max(||grad Pi v||, ||div v||))``.
    ``trace_residual`` compares ``Pi v`` with ``v`` on boundary edges (the
    normal component only for the slip variant); it is ``None`` unless
    requested.  ``stability`` holds per-triangle ratios
    ``||grad Pi v||_{L^p(T)} / ||v||_{W^{1,p}(P(Q(T)))}`` with ``C_Q`` the
    factor ``1 + 1/Theta(Q(T))``.
    """

    variant: str
    divergence_residual: float | None = None
    pi1_flux_residual: float | None = None
    pi1_mean_residual: float | None = None
    region_mean_residual: float | None = None
    projection_residual: float | None = None
    trace_residual: float | None = None
    stability: np.ndarray | None = None
    C_Q: np.ndarray | None = None
    timings: dict = field(default_factory=dict)

    def rows(self):
        for name in ("divergence_residual", "pi1_flux_residual", "pi1_mean_residual",
                     "region_mean_residual", "projection_residual", "trace_residual"):
            val = getattr(self, name)
            if val is not None:
                yield name, float(val)
        if self.stability is not None:
            yield "max_stability_ratio", float(np.max(self.stability))
            yield "max_normalized_stability", float(np.max(self.stability / self.C_Q))
        for name, val in self.timings.items():
            yield f"time_{name}", float(val)


class FortinOperator:
    """``Pi`` (Dirichlet) or ``tilde Pi`` (slip) on a fixed mesh and degree.

    Parameters
    ----------
    mesh : Triangulation
    k : int
        Velocity degree, ``k >= 2``.
    variant : {"dirichlet", "slip"}
    classification : VertexClassification, optional
    """

    def __init__(self, mesh: Triangulation, k: int, variant: str = "dirichlet",
                 classification: VertexClassification | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        t0 = time.perf_counter()
        self.mesh, self.k, self.variant = mesh, k, variant
        self.classification = classify_vertices(mesh) if classification is None else classification
        self.V = VelocitySpace(mesh, k, VARIANT_BC[variant])
        self.Q = PressureSpace(mesh, k - 1, self.classification, variant)
        self.decomposition = build_decomposition(mesh, self.classification, variant)
        self.pi1 = QuasiInterpolant(mesh, k)
        self.balance = RegionBalance(self.V, self.Q, self.decomposition)
        self.pi2 = GlobalCorrection(self.V, self.Q, self.decomposition)
        self.build_time = time.perf_counter() - t0

    @property
    def regions(self):
        return self.decomposition.regions

    def stages(self, v) -> tuple[np.ndarray, np.ndarray, FieldMoments]:
        """Ambient vectors of ``Pi1 v`` and ``Pi v`` and the moments of ``v``."""
        m = moments_of(self.mesh, self.k, v)
        u1 = self.pi1.apply_moments(m)
        m1 = discrete_moments(self.mesh, self.k, self.V.coefficients(u1))
        ub = u1 + self.balance.apply_moments(m - m1) if self.balance.active else u1
        if self.balance.active:
            m1 = discrete_moments(self.mesh, self.k, self.V.coefficients(ub))
        return u1, ub + self.pi2.apply_moments(m - m1), m

    def apply(self, v) -> np.ndarray:
        """Ambient vector of ``Pi v``."""
        return self.stages(v)[1]

    def field(self, v) -> PiecewisePolynomialField:
        return self.V.field(self.apply(v))

    # -- diagnostics -------------------------------------------------------
    def divergence_pairings(self, u: np.ndarray, m: FieldMoments) -> tuple[np.ndarray, np.ndarray]:
        """``int div(u - v) q`` and ``||q||`` for every basis function of the pressure space."""
        B = self.Q.basis
        d = (discrete_moments(self.mesh, self.k, self.V.coefficients(u)).div - m.div).reshape(-1)
        nq = dim(self.k - 1)
        M = mass_matrix(self.k - 1, self.k - 1)
        Bq = B.reshape(self.mesh.n_triangles, nq, -1)
        norms = np.sqrt(np.einsum("t,tai,ab,tbi->i", self.mesh.areas, Bq, M, Bq))
        return B.T @ d, norms

    def divergence_residual(self, u: np.ndarray, m: FieldMoments) -> float:
        pair, qn = self.divergence_pairings(u, m)
        if len(pair) == 0:
            return 0.0
        gu = self.V.field(u).grad_lp_norm(2)
        dv = self._div_norm(m)
        scale = max(gu, dv, 1e-300)
        return float(np.max(np.abs(pair) / (qn * scale)))

    def _div_norm(self, m: FieldMoments) -> float:
        # L2 norm of the P^{k-1} projection of div v, from its moments
        M = mass_matrix(self.k - 1, self.k - 1)
        c = np.linalg.solve(M, m.div.T).T / self.mesh.areas[:, None]
        return float(np.sqrt(np.einsum("t,ta,ab,tb->", self.mesh.areas, c, M, c)))

    def trace_residual(self, u: np.ndarray, m: FieldMoments) -> float:
        """Maximum nodal difference between ``Pi v`` and the degree-``k`` trace of ``v``.

        On each boundary edge the trace of ``v`` is represented by its L2
        projection onto ``P^k(e)``, which is exact for discrete traces.
        """
        mesh, k = self.mesh, self.k
        be = np.flatnonzero(mesh.boundary_edge)
        if not len(be):
            return 0.0
        mu = discrete_moments(mesh, k, self.V.coefficients(u))
        diff = (mu.edge - m.edge)[be]
        Me = edge_mass_matrix(k, k)
        c = np.linalg.solve(Me, diff.reshape(-1, k + 1).T).T.reshape(diff.shape)
        c /= mesh.edge_lengths[be, None, None]
        vals = c @ edge_eval_matrix(k, np.linspace(0, 1, 2 * k + 1)).T
        if self.variant == "slip":
            vals = np.einsum("ecq,ec->eq", vals, mesh.edge_normals[be])
        return float(np.abs(vals).max())

    def pi1_residuals(self, u1: np.ndarray, m: FieldMoments) -> tuple[float, float]:
        """Relative per-edge flux and per-triangle mean-divergence mismatch of ``Pi1 v``."""
        m1 = discrete_moments(self.mesh, self.k, self.V.coefficients(u1))
        fv = m.edge_flux(self.mesh)
        f1 = m1.edge_flux(self.mesh)
        dv, d1 = m.div_means(), m1.div_means()
        fs = max(np.abs(fv).max(), np.abs(f1).max(), 1e-300)
        ds = max(np.abs(fv).max(), np.abs(dv).max(), 1e-300)
        return float(np.abs(fv - f1).max() / fs), float(np.abs(dv - d1).max() / ds)

    def region_mean_residual(self, u1: np.ndarray, m: FieldMoments) -> float:
        """``max_D |int_D div(Pi1 v - v)|`` relative to the largest triangle flux."""
        m1 = discrete_moments(self.mesh, self.k, self.V.coefficients(u1))
        diff = m1.div_means() - m.div_means()
        out = max(abs(diff[r.triangles].sum()) for r in self.regions)
        return float(out / max(np.abs(m.edge_flux(self.mesh)).max(), 1e-300))

    def C_Q(self) -> np.ndarray:
        """Per-triangle ``1 + 1/Theta(Q(T))`` (infinite when ``Theta = 0``)."""
        out = np.empty(self.mesh.n_triangles)
        for t in range(self.mesh.n_triangles):
            _, QT, _ = covering_sets(self.decomposition, t)
            th = theta_of_set(self.mesh, self.classification, QT)
            out[t] = np.inf if th == 0 else 1.0 + 1.0 / th
        return out

    def stability_ratios(self, u: np.ndarray, v, p: float = 2) -> np.ndarray:
        """``||grad Pi v||_{L^p(T)} / ||v||_{W^{1,p}(P(Q(T)))}`` per triangle."""
        fld = self.V.field(u)
        out = np.empty(self.mesh.n_triangles)
        for t in range(self.mesh.n_triangles):
            _, _, PQ = covering_sets(self.decomposition, t)
            if isinstance(v, PiecewisePolynomialField):
                vv = v.elevate(self.k)
                den = (vv.lp_norm(p, PQ) ** p + vv.grad_lp_norm(p, PQ) ** p) ** (1 / p) \
                    if not np.isinf(p) else max(vv.lp_norm(p, PQ), vv.grad_lp_norm(p, PQ))
            else:
                den = sobolev_norm(self.mesh, v, PQ, p)
            num = fld.grad_lp_norm(p, [t])
            out[t] = num / den if den > 0 else (0.0 if num == 0 else np.inf)
        return out

    def report(self, v, u1: np.ndarray, u: np.ndarray, m: FieldMoments, *, trace: bool = False,
               stability: bool = False, p: float = 2, pairing: bool = True) -> OperatorReport:
        rep = OperatorReport(self.variant)
        t0 = time.perf_counter()
        if pairing:
            rep.divergence_residual = self.divergence_residual(u, m)
        rep.pi1_flux_residual, rep.pi1_mean_residual = self.pi1_residuals(u1, m)
        rep.region_mean_residual = self.region_mean_residual(u1, m)
        if isinstance(v, (PiecewisePolynomialField, np.ndarray)):
            coeffs = v.elevate(self.k).coeffs if isinstance(v, PiecewisePolynomialField) else v
            ref = max(np.abs(coeffs).max(), 1e-300)
            rep.projection_residual = float(np.abs(self.V.coefficients(u) - coeffs).max() / ref)
        if trace:
            rep.trace_residual = self.trace_residual(u, m)
        if stability:
            rep.stability = self.stability_ratios(u, v, p)
            rep.C_Q = self.C_Q()
        rep.timings["diagnostics"] = time.perf_counter() - t0
        return rep


def build_fortin(mesh: Triangulation, k: int, variant: str = "dirichlet", classification=None) -> FortinOperator:
    return FortinOperator(mesh, k, variant, classification)


def apply_fortin(F: FortinOperator, v, **report_opts) -> tuple[PiecewisePolynomialField, OperatorReport]:
    """``Pi v`` with its diagnostics."""
    if F.variant != "dirichlet":
        raise ValueError("apply_fortin needs the Dirichlet operator; use apply_fortin_slip")
    return _apply(F, v, **report_opts)


def apply_fortin_slip(F: FortinOperator, v, **report_opts) -> tuple[PiecewisePolynomialField, OperatorReport]:
    """``tilde Pi v`` with its diagnostics."""
    if F.variant != "slip":
        raise ValueError("apply_fortin_slip needs the slip operator")
    return _apply(F, v, **report_opts)


def _apply(F: FortinOperator, v, **report_opts):
    t0 = time.perf_counter()
    u1, u, m = F.stages(v)
    dt = time.perf_counter() - t0
    rep = F.report(v, u1, u, m, **report_opts)
    rep.timings["apply"] = dt
    return F.V.field(u), rep


# -- approximation studies -------------------------------------------------

@dataclass(frozen=True)
class StudyLevel:
    level: int
    h: float
    n_triangles: int
    error: float
    max_local: float
    order: float | None


def observed_orders(h: np.ndarray, err: np.ndarray) -> np.ndarray:
    """Consecutive orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])


def fitted_order(h, err) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def approximation_study(meshes, v, k: int = 4, variant: str = "dirichlet", j: int = 0,
                        p: float = 2) -> list[StudyLevel]:
    """Errors ``||grad^j (v - Pi v)||_{L^p}`` over a sequence of meshes."""
    out = []
    prev = None
    for i, mesh in enumerate(meshes):
        F = FortinOperator(mesh, k, variant)
        u = F.apply(v)
        err, local = error_norms(mesh, k, F.V.coefficients(u), v, p, j)
        h = float(mesh.edge_lengths.max())
        order = None if prev is None else float(observed_orders([prev[0], h], [prev[1], err])[0])
        out.append(StudyLevel(i, h, mesh.n_triangles, err, float(local.max()), order))
        prev = (h, err)
    return out
