"""Differential and quantized entropy of (degenerate) Gaussian sources, in bits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError, ParameterError
from .speclinalg import DEFAULT_REL_TOL, SpectralData, eig_sym, pseudo_log_det

LOG2_2PIE = math.log2(2 * math.pi * math.e)
DEFAULT_NU = 1e-3
TAIL_PROB = 1e-15


@dataclass(frozen=True)
class QuantizationSpec:
    delta: float
    nu: float = DEFAULT_NU

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")
        if not 0 < self.nu < 1:
            raise ParameterError(f"nu must lie in (0, 1), got {self.nu}")


@dataclass(frozen=True)
class EntropyReport:
    h: float
    H_tilde: float
    rank_used: int
    delta: float

    @classmethod
    def from_spectrum(cls, spec: SpectralData, q: QuantizationSpec) -> "EntropyReport":
        h = differential_entropy(spec)
        return cls(h=h, H_tilde=quantized_entropy_lb(h, spec.rank, q), rank_used=spec.rank, delta=q.delta)


def differential_entropy(spec: SpectralData) -> float:
    if spec.rank == 0:
        raise DomainError("differential entropy of a rank-0 source is undefined")
    return 0.5 * (spec.rank * LOG2_2PIE + pseudo_log_det(spec))


def quantized_entropy_lb(h: float, rank: int, q: QuantizationSpec) -> float:
    if rank < 1:
        raise DomainError("rank must be >= 1")
    return h - rank * math.log2(q.delta)


def choose_delta(spec: SpectralData, nu: float = DEFAULT_NU) -> QuantizationSpec:
    """Step no coarser than ``nu`` times the weakest retained eigenvalue."""
    if spec.rank == 0:
        raise DomainError("cannot pick a step for a rank-0 source")
    return QuantizationSpec(delta=nu * spec.lambda_min_pos, nu=nu)


def entropy_report(C, q: QuantizationSpec, rel_tol: float = DEFAULT_REL_TOL) -> EntropyReport:
    return EntropyReport.from_spectrum(eig_sym(C, rel_tol), q)


def selected_entropy_lb(C, b, q: QuantizationSpec, rel_tol: float = DEFAULT_REL_TOL) -> EntropyReport:
    """Quantized-entropy bound of the sensors switched on in mask ``b``.

    Works on the principal submatrix of the active sensors, which has the same
    nonzero spectrum as ``B C B``.
    """
    idx = np.flatnonzero(np.asarray(b).astype(bool))
    if idx.size == 0:
        raise DomainError("empty selection has no entropy")
    C = np.asarray(C, dtype=float)
    return entropy_report(C[np.ix_(idx, idx)], q, rel_tol)


def relative_entropy_loss(full: EntropyReport, selected: EntropyReport) -> float:
    if full.delta != selected.delta:
        raise ParameterError(
            f"reports use different steps ({full.delta!r} vs {selected.delta!r})"
        )
    if full.H_tilde == 0:
        raise DomainError("full-field entropy bound is zero")
    return abs(full.H_tilde - selected.H_tilde) / abs(full.H_tilde)


def univariate_quantized_entropy(sigma: float, delta: float) -> float:
    """Exact entropy of N(0, sigma^2) after uniform quantization with step delta.

    Cells are ``[k*delta, (k+1)*delta)``; by symmetry only k >= 0 is summed
    and doubled. Cells beyond the point where the remaining two-sided tail
    mass drops below 1e-15 are dropped.
    """
    if not (sigma > 0 and delta > 0):
        raise ParameterError("sigma and delta must be > 0")
    step = delta / sigma
    z_max = norm.isf(TAIL_PROB / 2)
    n = int(math.ceil(z_max / step)) + 1
    edges = np.arange(n + 1) * step
    # survival-function differences keep precision in the tail
    p = -np.diff(norm.sf(edges))
    p = p[p > 0]
    return float(-2.0 * np.sum(p * np.log2(p)))


def univariate_entropy_lb(sigma: float, delta: float) -> float:
    return 0.5 * math.log2(2 * math.pi * math.e * sigma**2) - math.log2(delta)
