"""Rank-aware linear algebra for singular PSD correlation matrices.

Determinants are only ever handled as base-2 logarithms; products of fifty
eigenvalues of a sigma=50 field overflow or underflow easily.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, NotPSDError, ParameterError

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
DEFAULT_REL_TOL = 1e-8
DEFAULT_CHOL_TOL = 1e-8
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray  # descending, clipped at zero
    eigenvectors: np.ndarray  # columns match eigenvalues
    rank: int
    lambda_max: float
    lambda_min_pos: float  # smallest eigenvalue counted in the rank; nan when rank == 0
    rel_tol: float

    @property
    def retained(self) -> np.ndarray:
        return self.eigenvalues[: self.rank]


@dataclass(frozen=True, eq=False)
class ReducedCholesky:
    L_r: np.ndarray  # (M, r), rows in the original sensor order
    residual: float
    pivot_order: np.ndarray

    @property
    def rank(self) -> int:
        return self.L_r.shape[1]


def _check_symmetric(C):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {C.shape}")
    scale = max(np.abs(C).max(), np.finfo(float).tiny) if C.size else 1.0
    if C.size and np.abs(C - C.T).max() > SYMMETRY_TOL * scale:
        raise ParameterError("matrix is not symmetric")
    return 0.5 * (C + C.T)


def eig_sym(C, rel_tol: float = DEFAULT_REL_TOL) -> SpectralData:
    if not 0 < rel_tol < 1:
        raise ParameterError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    C = _check_symmetric(C)
    w, V = np.linalg.eigh(C)
    w, V = w[::-1], V[:, ::-1]
    lam_max = max(float(w[0]), 0.0) if w.size else 0.0
    rank = int(np.count_nonzero(w > rel_tol * lam_max)) if lam_max > 0 else 0
    w = np.where(np.arange(w.size) < rank, w, np.clip(w, 0.0, None))
    w.setflags(write=False)
    V.setflags(write=False)
    return SpectralData(
        eigenvalues=w,
        eigenvectors=V,
        rank=rank,
        lambda_max=lam_max,
        lambda_min_pos=float(w[rank - 1]) if rank else float("nan"),
        rel_tol=rel_tol,
    )


def pseudo_log_det(spec: SpectralData) -> float:
    """log2 of the product of the eigenvalues counted in the numerical rank."""
    if spec.rank == 0:
        raise DomainError("pseudo-determinant of a rank-0 matrix is undefined")
    return float(np.log2(spec.retained).sum())


def singular_approximation(spec: SpectralData) -> np.ndarray:
    """Rebuild the matrix from its retained eigenpairs only.

    This is the exactly rank-r matrix the selection machinery works on: its
    pseudo-determinant equals ``pseudo_log_det(spec)`` and a pivoted Cholesky
    of it stops after exactly ``spec.rank`` steps.
    """
    r = spec.rank
    V = spec.eigenvectors[:, :r]
    out = (V * spec.eigenvalues[:r]) @ V.T
    return 0.5 * (out + out.T)


def pivoted_cholesky(C, chol_tol: float = DEFAULT_CHOL_TOL, max_rank: int | None = None) -> ReducedCholesky:
    """Diagonally pivoted outer-product Cholesky, truncated at small pivots.

    Stops once the largest remaining pivot is ``<= chol_tol * max(diag(C))``
    or after ``max_rank`` columns.
    """
    C = _check_symmetric(C)
    n = C.shape[0]
    d = np.diag(C).copy()
    d0 = d.max() if n else 0.0
    if n and d.min() < -10 * chol_tol * max(d0, 0.0):
        raise NotPSDError(f"negative diagonal entry {d.min():.3e}")
    limit = n if max_rank is None else min(n, max_rank)
    L = np.zeros((n, limit))
    order = []
    active = np.ones(n, dtype=bool)
    for k in range(limit):
        cand = np.where(active, d, -np.inf)
        j = int(np.argmax(cand))
        pivot = cand[j]
        if pivot < -10 * chol_tol * d0:
            raise NotPSDError(f"pivot {pivot:.3e} at step {k}")
        if pivot <= chol_tol * d0:
            break
        col = (C[:, j] - L[:, :k] @ L[j, :k]) / np.sqrt(pivot)
        col[~active] = 0.0
        col[j] = np.sqrt(pivot)
        L[:, k] = col
        d -= col**2
        active[j] = False
        order.append(j)
    L_r = L[:, : len(order)]
    residual = float(np.linalg.norm(C - L_r @ L_r.T))
    return ReducedCholesky(L_r=L_r, residual=residual, pivot_order=np.array(order, dtype=int))


def reduced_factor(C, spec: SpectralData | None = None, rel_tol: float = DEFAULT_REL_TOL,
                   chol_tol: float = DEFAULT_CHOL_TOL) -> tuple[SpectralData, np.ndarray, ReducedCholesky]:
    """Spectrum, singular approximation and its reduced Cholesky factor of ``C``.

    The spectral rank is authoritative; a Cholesky stopping at a different
    rank is logged and then truncated or extended to match.
    """
    if spec is None:
        spec = eig_sym(C, rel_tol)
    if spec.rank == 0:
        raise DomainError("correlation matrix has numerical rank 0")
    C_sing = singular_approximation(spec)
    chol = pivoted_cholesky(C_sing, chol_tol)
    if chol.rank != spec.rank:
        log.warning("cholesky rank %d differs from spectral rank %d", chol.rank, spec.rank)
        chol = pivoted_cholesky(C_sing, 0.0, max_rank=spec.rank)
    return spec, C_sing, chol


def logdet_gram(L_r, p):
    """``log2 det(L_r^T diag(p) L_r)`` and its gradient with respect to ``p``.

    The gradient is ``diag(L_r G^{-1} L_r^T) / ln 2`` with ``G`` the Gram
    matrix.
    """
    L_r = np.asarray(L_r, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ParameterError("all weights must be > 0")
    G = L_r.T @ (p[:, None] * L_r)
    try:
        c = scipy.linalg.cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Gram matrix is singular") from exc
    diag = np.diag(c)
    if diag.min() <= 1e-12 * diag.max():
        raise DomainError("Gram matrix is numerically singular")
    value = 2.0 * float(np.log2(diag).sum())
    Y = scipy.linalg.solve_triangular(c, L_r.T, lower=True)
    grad = (Y * Y).sum(axis=0) / LN2
    return value, grad
