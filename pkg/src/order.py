"""
Analytical inclusion conditions that need no atom enumeration.

Covers majorization tests for doubly stochastic pairs, circulant
deconvolution, reduction of small symmetric channels to circulant form and
the closed-form BSC/BEC comparison.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.linalg import circulant
from scipy.optimize import nnls

from src.channel import (
    Channel,
    ProbVector,
    PureChannel,
    is_circulant,
    is_doubly_stochastic,
    is_symmetric_dmc,
)
from src.errors import (
    NoCirculantFormError,
    NotCirculantError,
    NotDoublyStochasticError,
    NotSymmetricError,
    OutOfRangeError,
    ShapeMismatchError,
    UnsupportedSizeError,
)

logger = logging.getLogger(__name__)

TAU_MAJ = 1e-8
# DFT coefficients below this magnitude make direct deconvolution unsafe
TAU_DFT = 1e-10
TAU_SHAPE = 1e-9


@dataclass(frozen=True)
class MajorizationVerdict:
    holds: bool
    first_violation_k: Optional[int]
    sum_gap: float


@dataclass(frozen=True)
class CirculantVerdict:
    necessary_holds: bool
    sufficient_holds: bool
    x: Optional[ProbVector] = None
    method: str = "none"


def majorizes(a, b) -> MajorizationVerdict:
    """Does a majorize b? first_violation_k is the 1-based prefix length that fails."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Cannot compare vectors of length {a.size} and {b.size}")

    a_sorted = np.sort(a)[::-1]
    b_sorted = np.sort(b)[::-1]
    gaps = np.cumsum(a_sorted) - np.cumsum(b_sorted)
    sum_gap = float(gaps[-1]) if gaps.size else 0.0

    first_violation = None
    violating = np.flatnonzero(gaps[:-1] < -TAU_MAJ)
    if violating.size:
        first_violation = int(violating[0]) + 1

    holds = first_violation is None and abs(sum_gap) <= TAU_MAJ
    return MajorizationVerdict(holds=holds, first_violation_k=first_violation, sum_gap=sum_gap)


def doubly_stochastic_necessary(k1: Channel, k2: Channel) -> MajorizationVerdict:
    """Flattened-entry majorization; a failure refutes K2 being included in K1."""
    if k1.shape != k2.shape or k1.rows != k1.cols:
        raise ShapeMismatchError(f"Need two n x n channels, got {k1.shape} and {k2.shape}")
    for name, k in (("K1", k1), ("K2", k2)):
        if not is_doubly_stochastic(k):
            raise NotDoublyStochasticError(f"{name} is not doubly stochastic")

    verdict = majorizes(k1.p.ravel(), k2.p.ravel())
    logger.debug(f"Flattened majorization K1 > K2: {verdict}")
    return verdict


def _as_prob_vector(x: np.ndarray) -> Optional[ProbVector]:
    if np.any(x < -TAU_MAJ) or abs(x.sum() - 1.0) > TAU_MAJ:
        return None
    return ProbVector.normalized(x)


def _deconvolve(v1: np.ndarray, v2: np.ndarray) -> Tuple[Optional[ProbVector], str]:
    spectrum = sp_fft.fft(v1)
    if np.all(np.abs(spectrum) > TAU_DFT):
        x = np.real(sp_fft.ifft(sp_fft.fft(v2) / spectrum))
        return _as_prob_vector(x), "dft"

    # Singular convolution operator: v1 (*) x = circulant(v1) @ x
    x, residual = nnls(circulant(v1), v2)
    if residual >= TAU_MAJ:
        return None, "nnls"
    return _as_prob_vector(x), "nnls"


def circulant_conditions(k1: Channel, k2: Channel) -> CirculantVerdict:
    """Necessary (majorization) and sufficient (deconvolution) conditions for circulant pairs.

    When sufficient_holds, K2 = K1 X with X the circulant matrix whose first
    row is x, so K2 is degraded from K1 and in particular included in it.
    """
    if k1.shape != k2.shape:
        raise ShapeMismatchError(f"Circulant pair must share a shape, got {k1.shape} and {k2.shape}")
    for name, k in (("K1", k1), ("K2", k2)):
        if not is_circulant(k):
            raise NotCirculantError(f"{name} is not circulant")

    v1, v2 = k1.p[0], k2.p[0]
    necessary = majorizes(v1, v2).holds
    x, method = _deconvolve(v1, v2)
    sufficient = x is not None

    logger.debug(f"Circulant conditions: necessary={necessary}, sufficient={sufficient} ({method})")
    return CirculantVerdict(necessary_holds=necessary, sufficient_holds=sufficient, x=x, method=method)


def circulant_kernel_matrix(x: ProbVector) -> Channel:
    """X with rows that are cyclic shifts of x, so K1 X = K2 for circulant K1, K2."""
    return Channel(circulant(x.w).T)


def _inverse_map(order) -> Tuple[int, ...]:
    inverse = [0] * len(order)
    for position, source in enumerate(order):
        inverse[source] = position
    return tuple(inverse)


def symmetric_to_circulant(k: Channel) -> Tuple[Channel, PureChannel, PureChannel]:
    """Permute rows and columns of a 3x3 or 4x4 symmetric DMC into circulant form.

    Returns (K', row_perm, col_perm) with K' = row_perm . K . col_perm. The
    search tries identity permutations first, then lexicographic order.
    """
    if k.rows != k.cols or k.rows not in (3, 4):
        raise UnsupportedSizeError(f"Only 3x3 and 4x4 channels are supported, got {k.shape}")
    if not is_symmetric_dmc(k):
        raise NotSymmetricError("Channel is not symmetric")

    n = k.rows
    perms = list(itertools.permutations(range(n)))
    for row_order in perms:
        rows_permuted = k.p[list(row_order)]
        for col_order in perms:
            candidate = Channel(rows_permuted[:, list(col_order)])
            if is_circulant(candidate):
                row_perm = PureChannel(n, n, row_order)
                col_perm = PureChannel(n, n, _inverse_map(col_order))
                logger.debug(f"Circulant form found with rows {row_order}, columns {col_order}")
                return candidate, row_perm, col_perm

    raise NoCirculantFormError(f"No row/column permutation makes this {n}x{n} channel circulant")


def bsc_bec_inclusion(p: float, eps: float) -> Tuple[bool, bool]:
    """(BSC(p) included in BEC(eps), BEC(eps) included in BSC(p))."""
    if not 0.0 <= p <= 0.5:
        raise OutOfRangeError(f"BSC crossover must lie in [0, 0.5], got {p}")
    if not 0.0 <= eps <= 1.0:
        raise OutOfRangeError(f"BEC erasure probability must lie in [0, 1], got {eps}")
    bsc_in_bec = eps <= 2 * p + TAU_MAJ
    bec_in_bsc = p <= TAU_MAJ
    return bsc_in_bec, bec_in_bsc


def bsc_parameter(k: Channel) -> Optional[float]:
    """Crossover p when K is BSC(p) with p <= 1/2, else None."""
    if k.shape != (2, 2):
        return None
    p = float(k.p[0, 1])
    expected = np.array([[1 - p, p], [p, 1 - p]])
    if np.max(np.abs(k.p - expected)) > TAU_SHAPE or p > 0.5 + TAU_SHAPE:
        return None
    return min(p, 0.5)


def bec_parameter(k: Channel) -> Optional[float]:
    """Erasure probability when K is BEC(eps) with outputs (0, e, 1), else None."""
    if k.shape != (2, 3):
        return None
    eps = float(k.p[0, 1])
    expected = np.array([[1 - eps, eps, 0.0], [0.0, eps, 1 - eps]])
    if np.max(np.abs(k.p - expected)) > TAU_SHAPE:
        return None
    return eps
