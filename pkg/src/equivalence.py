"""
Equivalence of DMCs up to input and output relabelling.

Two channels are equivalent when K2 = R K1 T with permutation matrices R
and T. Candidate permutations come from the eigenvectors of the Gram
matrices K K^T and K^T K; whenever the spectrum is degenerate, or the
rounded candidates do not reproduce K2, an exhaustive search takes over.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import rel_entr

from src.channel import Channel, ProbVector, PureChannel, compose
from src.errors import NoConvergenceError, SizeLimitError

logger = logging.getLogger(__name__)

DEFAULT_BA_MAX_ITERS = 20000
DEFAULT_BA_TOL = 1e-9
DEFAULT_EXHAUSTIVE_MAX = 8

TAU_EIG = 1e-7
TAU_GAP = 1e-6
TAU_CAP = 1e-7
TAU_EQ = 1e-7
# Tolerance for proportional / equal column tests
TAU_COL = 1e-9

METHOD_EIGEN = "eigen"
METHOD_EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class CapacityCheck:
    holds: bool
    capacity: float
    row_drop_capacities: Tuple[float, ...]


@dataclass(frozen=True)
class ColumnCheck:
    holds: bool
    offending_pair: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class AssumptionReport:
    as1: CapacityCheck
    as2: ColumnCheck
    as3_sufficient: ColumnCheck

    @property
    def all_hold(self) -> bool:
        return self.as1.holds and self.as2.holds and self.as3_sufficient.holds

    def to_dict(self):
        return {
            "as1": {
                "holds": self.as1.holds,
                "capacity": self.as1.capacity,
                "row_drop_capacities": list(self.as1.row_drop_capacities),
            },
            "as2": {
                "holds": self.as2.holds,
                "offending_pair": list(self.as2.offending_pair) if self.as2.offending_pair else None,
            },
            "as3_sufficient": {
                "holds": self.as3_sufficient.holds,
                "offending_pair": (list(self.as3_sufficient.offending_pair)
                                   if self.as3_sufficient.offending_pair else None),
            },
        }


@dataclass(frozen=True)
class EquivalenceVerdict:
    equivalent: bool
    R: Optional[PureChannel] = None
    T: Optional[PureChannel] = None
    method: str = METHOD_EIGEN
    residual: float = float('nan')
    reason: str = ""

    def to_dict(self):
        return {
            "equivalent": self.equivalent,
            "R": list(self.R.mapping) if self.R else None,
            "T": list(self.T.mapping) if self.T else None,
            "method": self.method,
            "residual": None if math.isnan(self.residual) else self.residual,
            "reason": self.reason,
        }


def blahut_arimoto_capacity(
    k: Channel,
    max_iters: int = DEFAULT_BA_MAX_ITERS,
    tol: float = DEFAULT_BA_TOL,
) -> Tuple[float, ProbVector]:
    """Capacity in bits and the final input distribution.

    Stops once the gap between the lower bound log sum_i p_i exp(D_i) and
    the upper bound max_i D_i drops below tol bits, where D_i is the
    divergence of row i from the current output distribution.
    """
    n = k.rows
    p = np.full(n, 1.0 / n)
    gap = float('inf')

    for iteration in range(1, max_iters + 1):
        q = p @ k.p
        divergence = rel_entr(k.p, q[np.newaxis, :]).sum(axis=1)
        weighted = p * np.exp(divergence)
        lower = math.log(weighted.sum())
        upper = float(divergence.max())
        gap = (upper - lower) / math.log(2)
        if gap < tol:
            capacity = max(lower, 0.0) / math.log(2)
            logger.debug(f"Blahut-Arimoto converged after {iteration} iterations: {capacity:.10f} bits")
            return capacity, ProbVector.normalized(p)
        p = weighted / weighted.sum()

    raise NoConvergenceError(
        f"Blahut-Arimoto did not converge in {max_iters} iterations (gap {gap:.3g} bits)",
        iterations=max_iters,
        gap=gap,
    )


def _normalized_columns(k: Channel) -> np.ndarray:
    sums = k.p.sum(axis=0)
    safe = np.where(sums > TAU_COL, sums, 1.0)
    return k.p / safe


def _zero_column(k: Channel) -> Optional[int]:
    zero = np.flatnonzero(k.p.sum(axis=0) <= TAU_COL)
    return int(zero[0]) if zero.size else None


def _check_as2(k: Channel) -> ColumnCheck:
    zero = _zero_column(k)
    if zero is not None:
        return ColumnCheck(False, (zero, zero))
    cols = _normalized_columns(k)
    for j in range(k.cols):
        for l in range(j + 1, k.cols):
            if np.max(np.abs(cols[:, j] - cols[:, l])) <= TAU_COL:
                return ColumnCheck(False, (j, l))
    return ColumnCheck(True)


def _check_as3_sufficient(k: Channel) -> ColumnCheck:
    zero = _zero_column(k)
    if zero is not None:
        return ColumnCheck(False, (zero, zero))
    cols = np.sort(_normalized_columns(k), axis=0)
    for j in range(k.cols):
        for l in range(j + 1, k.cols):
            if np.max(np.abs(cols[:, j] - cols[:, l])) <= TAU_COL:
                return ColumnCheck(False, (j, l))
    return ColumnCheck(True)


def _check_as1(k: Channel, max_iters: int, tol: float) -> CapacityCheck:
    capacity, _ = blahut_arimoto_capacity(k, max_iters, tol)
    if k.rows == 1:
        return CapacityCheck(True, capacity, (0.0,))
    drops = []
    for i in range(k.rows):
        sub = Channel(np.delete(k.p, i, axis=0))
        drops.append(blahut_arimoto_capacity(sub, max_iters, tol)[0])
    holds = all(d < capacity - TAU_CAP for d in drops)
    return CapacityCheck(holds, capacity, tuple(drops))


def check_assumptions(
    k: Channel,
    max_iters: int = DEFAULT_BA_MAX_ITERS,
    tol: float = DEFAULT_BA_TOL,
) -> AssumptionReport:
    """Check the assumptions under which equivalence forces permutation form.

    as1: removing any input row strictly lowers capacity.
    as2: no zero column and no two proportional columns.
    as3_sufficient: no column is a multiple of an entry-permuted other
    column. This is only a sufficient test for the underlying assumption.
    """
    report = AssumptionReport(
        as1=_check_as1(k, max_iters, tol),
        as2=_check_as2(k),
        as3_sufficient=_check_as3_sufficient(k),
    )
    logger.debug(f"Assumption report: as1={report.as1.holds}, as2={report.as2.holds}, "
                 f"as3={report.as3_sufficient.holds}")
    return report


def _residual(k1: Channel, k2: Channel, r: PureChannel, t: PureChannel) -> float:
    return float(np.max(np.abs(compose(r, k1, t).p - k2.p)))


def _sorted_eigh(gram: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs in descending order, each vector's largest-magnitude entry positive."""
    values, vectors = np.linalg.eigh(gram)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return values, vectors * signs


def _is_simple(values: np.ndarray) -> bool:
    return values.size < 2 or bool(np.min(np.abs(np.diff(values))) > TAU_GAP)


def _round_to_permutation(approx: np.ndarray) -> Optional[PureChannel]:
    n = approx.shape[0]
    mapping = tuple(int(j) for j in np.argmax(approx, axis=1))
    if len(set(mapping)) != n:
        return None
    return PureChannel(n, n, mapping)


def _eigen_candidate(k1: Channel, k2: Channel) -> Optional[Tuple[PureChannel, PureChannel]]:
    _, q1 = _sorted_eigh(k1.p @ k1.p.T)
    _, q2 = _sorted_eigh(k2.p @ k2.p.T)
    _, q3 = _sorted_eigh(k1.p.T @ k1.p)
    _, q4 = _sorted_eigh(k2.p.T @ k2.p)

    r = _round_to_permutation(q2 @ q1.T)
    # K2^T K2 = T^T (K1^T K1) T, so Q4 Q3^T approximates T^T
    t_transposed = _round_to_permutation(q4 @ q3.T)
    if r is None or t_transposed is None:
        return None
    t = PureChannel.from_dense(t_transposed.dense().T)
    return r, t


def _match_columns(rk1: np.ndarray, k2: Channel) -> Optional[PureChannel]:
    m = k2.cols
    mapping = [-1] * m
    for j in range(m):
        for col in range(m):
            if mapping[col] < 0 and np.max(np.abs(rk1[:, col] - k2.p[:, j])) <= TAU_EQ:
                mapping[col] = j
                break
        else:
            return None
    return PureChannel(m, m, tuple(mapping))


def _exhaustive_search(k1: Channel, k2: Channel) -> Optional[Tuple[PureChannel, PureChannel]]:
    """Depth-first search over row assignments in lexicographic order."""
    n = k1.rows
    rows1 = np.sort(k1.p, axis=1)
    rows2 = np.sort(k2.p, axis=1)
    compatible = [
        [src for src in range(n) if np.max(np.abs(rows1[src] - rows2[i])) <= TAU_EQ]
        for i in range(n)
    ]

    cols1 = np.sort(np.sort(k1.p, axis=0).T, axis=0)
    cols2 = np.sort(np.sort(k2.p, axis=0).T, axis=0)
    if any(not options for options in compatible) or np.max(np.abs(cols1 - cols2)) > TAU_EQ:
        return None

    assignment: List[int] = []
    used = [False] * n

    def extend() -> Optional[Tuple[PureChannel, PureChannel]]:
        i = len(assignment)
        if i == n:
            r = PureChannel(n, n, tuple(assignment))
            t = _match_columns(r.dense() @ k1.p, k2)
            return (r, t) if t is not None else None
        for src in compatible[i]:
            if used[src]:
                continue
            used[src] = True
            assignment.append(src)
            found = extend()
            if found is not None:
                return found
            assignment.pop()
            used[src] = False
        return None

    return extend()


def decide_equivalence(
    k1: Channel,
    k2: Channel,
    exhaustive_max: int = DEFAULT_EXHAUSTIVE_MAX,
) -> EquivalenceVerdict:
    if k1.shape != k2.shape:
        return EquivalenceVerdict(False, reason=f"shape mismatch: {k1.shape} vs {k2.shape}")

    eig_rows1 = np.sort(np.linalg.eigvalsh(k1.p @ k1.p.T))
    eig_rows2 = np.sort(np.linalg.eigvalsh(k2.p @ k2.p.T))
    eig_cols1 = np.sort(np.linalg.eigvalsh(k1.p.T @ k1.p))
    eig_cols2 = np.sort(np.linalg.eigvalsh(k2.p.T @ k2.p))
    if (np.max(np.abs(eig_rows1 - eig_rows2)) > TAU_EIG
            or np.max(np.abs(eig_cols1 - eig_cols2)) > TAU_EIG):
        logger.info("Channels are not equivalent: Gram spectra differ")
        return EquivalenceVerdict(False, reason="eigenvalue mismatch")

    if _is_simple(eig_rows1[::-1]) and _is_simple(eig_cols1[::-1]):
        candidate = _eigen_candidate(k1, k2)
        if candidate is not None:
            r, t = candidate
            residual = _residual(k1, k2, r, t)
            if residual <= TAU_EQ:
                logger.info(f"Equivalence recovered from eigenvectors (residual {residual:.3g})")
                return EquivalenceVerdict(True, r, t, METHOD_EIGEN, residual, "eigenvector permutations verified")
        logger.debug("Eigenvector candidate failed verification, falling back to exhaustive search")
    else:
        logger.debug("Degenerate spectrum, using exhaustive search")

    if k1.rows > exhaustive_max or k1.cols > exhaustive_max:
        raise SizeLimitError(
            f"Exhaustive equivalence search limited to {exhaustive_max} symbols, got {k1.shape}")

    found = _exhaustive_search(k1, k2)
    if found is None:
        logger.info("Exhaustive search found no permutation pair")
        return EquivalenceVerdict(False, method=METHOD_EXHAUSTIVE, reason="no permutation pair reproduces K2")
    r, t = found
    residual = _residual(k1, k2, r, t)
    logger.info(f"Equivalence recovered by exhaustive search (residual {residual:.3g})")
    return EquivalenceVerdict(True, r, t, METHOD_EXHAUSTIVE, residual, "exhaustive search")
