"""
Discrete memoryless channels: representation, validation, structural
predicates and channel algebra.

A DMC with n inputs and m outputs is an n x m row-stochastic matrix. Channels
are immutable; every operation here returns a new object.

Kronecker products follow the block convention of numpy.kron, so input
(i1, i2) of K (x) K is row i1 * n + i2. For BSC(p) with q = 1 - p:

    BSC(p) (x) BSC(p) = [[q*q, q*p, p*q, p*p],
                         [q*p, q*q, p*p, p*q],
                         [p*q, p*p, q*q, q*p],
                         [p*p, p*q, q*p, q*q]]

With this convention (A (x) B)(C (x) D) = AC (x) BD, which is what lifting a
certificate to a Kronecker power relies on, and it agrees with the
column-stacking vec used for atom columns: vec(A X B) = (B^T (x) A) vec(X).
"""

import itertools
import logging
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import (
    ChannelValidationError,
    EmptyMatrixError,
    NegativeEntryError,
    OutOfRangeError,
    RowSumError,
    ShapeMismatchError,
    SizeOverflowError,
)

logger = logging.getLogger(__name__)

# Validation tolerance for entries and row sums
TAU_VAL = 1e-9
DEFAULT_MAX_KRON_ENTRIES = 10_000_000
DEFAULT_MAX_LIFTED_TERMS = 1_000_000


def _frozen_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ShapeMismatchError(f"Expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix p[i][j] = P(output j | input i)."""
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'p', _frozen_array(self.p, 2))

    @property
    def rows(self) -> int:
        return self.p.shape[0]

    @property
    def cols(self) -> int:
        return self.p.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.p.shape

    def allclose(self, other: 'Channel', tol: float = TAU_VAL) -> bool:
        return self.shape == other.shape and bool(np.max(np.abs(self.p - other.p)) <= tol)

    def to_list(self):
        return self.p.tolist()

    def __repr__(self) -> str:
        return f"Channel({self.rows}x{self.cols}, {self.p.tolist()})"


@dataclass(frozen=True)
class PureChannel:
    """0/1 stochastic matrix stored as the column index of the single 1 in each row."""
    rows: int
    cols: int
    mapping: Tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(j) for j in self.mapping)
        if self.rows < 1 or self.cols < 1:
            raise EmptyMatrixError(f"Pure channel needs positive shape, got {self.rows}x{self.cols}")
        if len(mapping) != self.rows:
            raise ShapeMismatchError(f"Mapping has {len(mapping)} entries for {self.rows} rows")
        if any(j < 0 or j >= self.cols for j in mapping):
            raise ShapeMismatchError(f"Mapping {mapping} points outside {self.cols} columns")
        object.__setattr__(self, 'mapping', mapping)

    @classmethod
    def identity(cls, n: int) -> 'PureChannel':
        return cls(n, n, tuple(range(n)))

    @classmethod
    def from_dense(cls, matrix) -> 'PureChannel':
        arr = np.asarray(matrix, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ShapeMismatchError(f"Pure channel needs a non-empty matrix, got shape {arr.shape}")
        is_binary = np.all((np.abs(arr) <= TAU_VAL) | (np.abs(arr - 1.0) <= TAU_VAL))
        if not is_binary or not np.allclose(arr.sum(axis=1), 1.0, atol=TAU_VAL, rtol=0):
            raise ChannelValidationError("Matrix is not a 0/1 row-stochastic matrix")
        return cls(arr.shape[0], arr.shape[1], tuple(int(j) for j in np.argmax(arr, axis=1)))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def is_permutation(self) -> bool:
        return self.rows == self.cols and len(set(self.mapping)) == self.rows

    def dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[np.arange(self.rows), list(self.mapping)] = 1.0
        return out

    def to_channel(self) -> Channel:
        return Channel(self.dense())

    def kron(self, other: 'PureChannel') -> 'PureChannel':
        mapping = tuple(a * other.cols + b for a in self.mapping for b in other.mapping)
        return PureChannel(self.rows * other.rows, self.cols * other.cols, mapping)


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Probability vector; entries >= 0 summing to 1 within TAU_VAL."""
    w: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.w, 1)
        if w.size == 0:
            raise EmptyMatrixError("Probability vector must not be empty")
        if np.any(w < -TAU_VAL):
            raise NegativeEntryError(f"Probability vector has negative entries: {w.tolist()}")
        if abs(w.sum() - 1.0) > TAU_VAL:
            raise RowSumError(f"Probability vector sums to {w.sum():.12g}")
        object.__setattr__(self, 'w', w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def normalized(cls, values) -> 'ProbVector':
        """Clip tiny negatives and renormalize before validating."""
        arr = np.clip(np.asarray(values, dtype=float), 0.0, None)
        return cls(arr / arr.sum())


@dataclass(frozen=True, eq=False)
class InclusionCertificate:
    """Weights g over atoms {R_a, T_a} with sum_a g_a R_a K1 T_a = K2.

    atom_indices index the columns of the AtomSystem the certificate was
    found in (or, for lifted certificates, the row-major position in the
    product of the base terms). pairs holds the (R_a, T_a) matrices themselves.
    """
    atom_indices: Tuple[int, ...]
    weights: np.ndarray
    residual_inf: float = float('nan')
    pairs: Tuple[Tuple[Channel, Channel], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'atom_indices', tuple(int(i) for i in self.atom_indices))
        object.__setattr__(self, 'weights', _frozen_array(self.weights, 1))
        if len(self.atom_indices) != self.weights.shape[0]:
            raise ShapeMismatchError(
                f"{len(self.atom_indices)} atom indices for {self.weights.shape[0]} weights")
        if self.pairs and len(self.pairs) != self.weights.shape[0]:
            raise ShapeMismatchError(f"{len(self.pairs)} pairs for {self.weights.shape[0]} weights")

    @property
    def beta(self) -> int:
        return self.weights.shape[0]


ChannelLike = Union[Channel, PureChannel]


def as_matrix(k: ChannelLike) -> np.ndarray:
    if isinstance(k, PureChannel):
        return k.dense()
    return k.p


def validate(raw_matrix) -> Channel:
    """Turn a raw dense matrix into a Channel, renormalizing rows within TAU_VAL."""
    arr = np.asarray(raw_matrix, dtype=float)
    if arr.size == 0:
        raise EmptyMatrixError("Channel matrix is empty")
    if arr.ndim != 2:
        raise ShapeMismatchError(f"Channel matrix must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ChannelValidationError("Channel matrix has non-finite entries")

    negative = np.argwhere(arr < -TAU_VAL)
    if negative.size:
        i, j = negative[0]
        raise NegativeEntryError(f"Entry ({i}, {j}) is negative: {arr[i, j]}")

    row_sums = arr.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(row_sums - 1.0) > TAU_VAL)
    if bad_rows.size:
        i = bad_rows[0]
        raise RowSumError(f"Row {i} sums to {row_sums[i]:.12g}, not 1")

    arr = np.clip(arr, 0.0, None)
    arr = arr / arr.sum(axis=1, keepdims=True)
    return Channel(arr)


def is_doubly_stochastic(k: Channel) -> bool:
    if k.rows != k.cols:
        return False
    return bool(np.all(np.abs(k.p.sum(axis=0) - 1.0) <= TAU_VAL))


def is_circulant(k: Channel) -> bool:
    if k.rows != k.cols:
        return False
    first = k.p[0]
    return all(
        np.max(np.abs(k.p[i] - np.roll(first, i))) <= TAU_VAL
        for i in range(1, k.rows)
    )


def _same_multiset(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.max(np.abs(np.sort(a) - np.sort(b))) <= TAU_VAL)


def is_symmetric_dmc(k: Channel) -> bool:
    """Rows are permutations of each other and so are columns."""
    rows_ok = all(_same_multiset(k.p[0], k.p[i]) for i in range(1, k.rows))
    cols_ok = all(_same_multiset(k.p[:, 0], k.p[:, j]) for j in range(1, k.cols))
    return rows_ok and cols_ok


def compose(r: ChannelLike, k: ChannelLike, t: ChannelLike) -> Channel:
    """The processed channel R K T."""
    rm, km, tm = as_matrix(r), as_matrix(k), as_matrix(t)
    if rm.shape[1] != km.shape[0] or km.shape[1] != tm.shape[0]:
        raise ShapeMismatchError(
            f"Cannot compose shapes {rm.shape} x {km.shape} x {tm.shape}")
    return validate(rm @ km @ tm)


def _kron_all(matrices: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, matrices)


def kron_power(k: Channel, n: int, max_entries: int = DEFAULT_MAX_KRON_ENTRIES) -> Channel:
    """N-fold Kronecker product K (x) ... (x) K."""
    if n < 1:
        raise OutOfRangeError(f"Kronecker order must be positive, got {n}")
    entries = float(k.rows * k.cols) ** n
    if entries > max_entries:
        raise SizeOverflowError(
            f"K^(x){n} would have {entries:.3g} entries (limit {max_entries})")
    if n == 1:
        return k
    return validate(_kron_all([k.p] * n))


def certificate_residual(cert: InclusionCertificate, k1: Channel, k2: Channel) -> float:
    """||sum_a g_a R_a K1 T_a - K2||_inf computed from the certificate's own pairs."""
    if not cert.pairs:
        raise ValueError("Certificate carries no (R, T) pairs")
    total = np.zeros(k2.shape)
    for g, (r, t) in zip(cert.weights, cert.pairs):
        rm, tm = as_matrix(r), as_matrix(t)
        if rm.shape[1] != k1.rows or tm.shape[0] != k1.cols:
            raise ShapeMismatchError(f"Pair shapes {rm.shape}, {tm.shape} do not fit K1 {k1.shape}")
        product = rm @ k1.p @ tm
        if product.shape != k2.shape:
            raise ShapeMismatchError(f"Processed channel {product.shape} does not match K2 {k2.shape}")
        total += g * product
    return float(np.max(np.abs(total - k2.p)))


def kron_lift_certificate(
    cert: InclusionCertificate,
    n: int,
    k1: Optional[Channel] = None,
    k2: Optional[Channel] = None,
    max_terms: int = DEFAULT_MAX_LIFTED_TERMS,
    max_entries: int = DEFAULT_MAX_KRON_ENTRIES,
) -> InclusionCertificate:
    """Lift a certificate of K2 in K1 to one of K2^(x)N in K1^(x)N.

    Term (j1, ..., jN) has weight g_j1 * ... * g_jN and atoms
    R_j1 (x) ... (x) R_jN, T_j1 (x) ... (x) T_jN; terms are ordered row-major
    over (j1, ..., jN). When k1 and k2 are given the lifted residual is
    computed against their Kronecker powers.
    """
    if n < 1:
        raise OutOfRangeError(f"Kronecker order must be positive, got {n}")
    if not cert.pairs:
        raise ValueError("Certificate carries no (R, T) pairs to lift")

    terms = float(cert.beta) ** n
    if terms > max_terms:
        raise SizeOverflowError(f"Lifted certificate would have {terms:.3g} terms (limit {max_terms})")
    r0, t0 = (as_matrix(m) for m in cert.pairs[0])
    per_term = float(r0.size + t0.size) ** n
    if per_term > max_entries:
        raise SizeOverflowError(
            f"Lifted atoms would have {per_term:.3g} entries each (limit {max_entries})")

    if n == 1:
        lifted = cert
    else:
        weights = []
        pairs = []
        for combo in itertools.product(range(cert.beta), repeat=n):
            weights.append(float(np.prod([cert.weights[j] for j in combo])))
            r = _kron_all([as_matrix(cert.pairs[j][0]) for j in combo])
            t = _kron_all([as_matrix(cert.pairs[j][1]) for j in combo])
            pairs.append((Channel(r), Channel(t)))
        lifted = InclusionCertificate(
            atom_indices=tuple(range(len(weights))),
            weights=np.array(weights),
            pairs=tuple(pairs),
        )
        logger.debug(f"Lifted certificate with {cert.beta} terms to order {n}: {len(weights)} terms")

    if k1 is not None and k2 is not None:
        k1n = kron_power(k1, n, max_entries=max_entries)
        k2n = kron_power(k2, n, max_entries=max_entries)
        residual = certificate_residual(lifted, k1n, k2n)
        lifted = InclusionCertificate(lifted.atom_indices, lifted.weights, residual, lifted.pairs)
    return lifted


def _circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return sum(a[j] * np.roll(b, j) for j in range(n))


def circ_conv(v1: ProbVector, x: ProbVector) -> ProbVector:
    """(v1 * x)[k] = sum_j v1[j] x[(k - j) mod n]."""
    if v1.dim != x.dim:
        raise ShapeMismatchError(f"Cannot convolve vectors of length {v1.dim} and {x.dim}")
    return ProbVector(_circular_convolve(v1.w, x.w))


# --- Named channels ---

def _check_probability(name: str, value: float, upper: float = 1.0):
    if not (0.0 <= value <= upper):
        raise OutOfRangeError(f"{name} must lie in [0, {upper}], got {value}")


def bsc(p: float) -> Channel:
    """Binary symmetric channel with crossover probability p."""
    _check_probability("p", p)
    return validate([[1 - p, p], [p, 1 - p]])


def bec(eps: float) -> Channel:
    """Binary erasure channel; outputs are (0, erasure, 1)."""
    _check_probability("eps", eps)
    return validate([[1 - eps, eps, 0.0], [0.0, eps, 1 - eps]])


def identity(n: int) -> Channel:
    return Channel(np.eye(n))


def uniform(n: int, m: int) -> Channel:
    return Channel(np.full((n, m), 1.0 / m))
