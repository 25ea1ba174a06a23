"""Small dense rank-revealing helpers built on the SVD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-9


class RankError(RuntimeError):
    """Raised when a numerical rank decision is ambiguous or inconsistent."""


@dataclass(frozen=True)
class RankInfo:
    rank: int
    singular_values: np.ndarray
    threshold: float

    @property
    def gap(self) -> float:
        """Ratio between the last kept and the first dropped singular value."""
        s = self.singular_values
        if self.rank == 0 or self.rank >= len(s):
            return np.inf
        return float(s[self.rank - 1] / max(s[self.rank], 1e-300))


def normalize_rows(A: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows are dropped."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return A.reshape(0, A.shape[1] if A.ndim == 2 else 0)
    n = np.linalg.norm(A, axis=1)
    keep = n > 0
    return A[keep] / n[keep, None]


def rank_info(A: np.ndarray, rtol: float = RANK_RTOL) -> RankInfo:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return RankInfo(0, np.zeros(0), 0.0)
    s = np.linalg.svd(A, compute_uv=False)
    thr = rtol * (s[0] if len(s) else 0.0)
    return RankInfo(int(np.count_nonzero(s > thr)), s, thr)


def null_space(A: np.ndarray, ncols: int | None = None, rtol: float = RANK_RTOL):
    """Orthonormal basis of the null space of ``A``.

    Returns ``(Z, info)`` with ``Z`` of shape ``(ncols, ncols - rank)``.
    """
    A = np.asarray(A, dtype=float)
    if ncols is None:
        ncols = A.shape[1]
    if A.size == 0 or A.shape[0] == 0:
        return np.eye(ncols), RankInfo(0, np.zeros(0), 0.0)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    thr = rtol * s[0] if len(s) else 0.0
    r = int(np.count_nonzero(s > thr))
    return Vt[r:].T.copy(), RankInfo(r, s, thr)


def range_basis(A: np.ndarray, rtol: float = RANK_RTOL):
    """Orthonormal basis of the column space of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[0], 0)), RankInfo(0, np.zeros(0), 0.0)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    thr = rtol * s[0] if len(s) else 0.0
    r = int(np.count_nonzero(s > thr))
    return U[:, :r].copy(), RankInfo(r, s, thr)
