"""
Atom enumeration and the measurement system (A, h).

An atom is a pure pair (R, T) with R: n2 x n1 and T: m1 x m2. Atom alpha
corresponds to R map number alpha // |T| and T map number alpha % |T|, both
in lexicographic order. Column alpha of A is vec(R K1 T) and h = vec(K2),
where vec stacks columns: vec(M)[j * rows + i] = M[i, j].
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.channel import (
    Channel,
    InclusionCertificate,
    PureChannel,
    is_doubly_stochastic,
)
from src.errors import (
    CacheFormatError,
    IndexOutOfRangeError,
    NotDoublyStochasticError,
    ShapeMismatchError,
    SizeLimitError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "AtomSystem",
    "InclusionCertificate",
    "build_system",
    "caratheodory_bound",
    "enumerate_pure",
    "load_or_build",
    "make_certificate",
    "restrict_to_permutations",
    "vec",
    "verify_certificate",
]

DEFAULT_ENUMERATION_CAP = 1_000_000
CACHE_FORMAT_VERSION = 1
# Columns equal after rounding to this many decimals are merged by dedup
DEDUP_DECIMALS = 12
TAU_WEIGHTS = 1e-8


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(matrix, dtype=float).T.reshape(-1)


def _check_cap(count: int, cap: int, what: str):
    if count > cap:
        raise SizeLimitError(f"{what} would need {count} entries (cap {cap})")


def _pure_maps(n_from: int, n_to: int, cap: int) -> np.ndarray:
    _check_cap(n_to ** n_from, cap, f"Enumerating {n_from}->{n_to} pure channels")
    return np.array(list(itertools.product(range(n_to), repeat=n_from)), dtype=np.int64).reshape(-1, n_from)


def enumerate_pure(n_from: int, n_to: int, cap: int = DEFAULT_ENUMERATION_CAP) -> List[PureChannel]:
    """All n_to ** n_from pure channels from n_from inputs to n_to outputs, lexicographic."""
    return [PureChannel(n_from, n_to, tuple(row)) for row in _pure_maps(n_from, n_to, cap)]


@dataclass(frozen=True, eq=False)
class AtomSystem:
    """Measurement matrix A (p x columns) and target h over an enumerated atom set.

    atom_ids[c] is the atom whose vec(R K1 T) is column c. dedup_map[alpha]
    is the column holding atom alpha (identity when dedup is off).
    """
    k1: Channel
    k2: Channel
    r_maps: np.ndarray
    t_maps: np.ndarray
    A: np.ndarray
    h: np.ndarray
    atom_ids: np.ndarray
    dedup_map: np.ndarray
    dedup: bool = False
    permutations_only: bool = False

    def __post_init__(self):
        for name in ("r_maps", "t_maps", "A", "h", "atom_ids", "dedup_map"):
            getattr(self, name).setflags(write=False)

    @property
    def n1(self) -> int:
        return self.k1.rows

    @property
    def m1(self) -> int:
        return self.k1.cols

    @property
    def n2(self) -> int:
        return self.k2.rows

    @property
    def m2(self) -> int:
        return self.k2.cols

    @property
    def atom_count(self) -> int:
        return self.r_maps.shape[0] * self.t_maps.shape[0]

    @property
    def columns(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def pair(self, alpha: int) -> Tuple[PureChannel, PureChannel]:
        """(R_alpha, T_alpha) for an atom index."""
        if not 0 <= alpha < self.atom_count:
            raise IndexOutOfRangeError(f"Atom {alpha} outside 0..{self.atom_count - 1}")
        r_idx, t_idx = divmod(int(alpha), self.t_maps.shape[0])
        r = PureChannel(self.n2, self.n1, tuple(self.r_maps[r_idx]))
        t = PureChannel(self.m1, self.m2, tuple(self.t_maps[t_idx]))
        return r, t

    def column_pair(self, column: int) -> Tuple[PureChannel, PureChannel]:
        if not 0 <= column < self.columns:
            raise IndexOutOfRangeError(f"Column {column} outside 0..{self.columns - 1}")
        return self.pair(int(self.atom_ids[column]))

    def shuffled(self, seed: int) -> 'AtomSystem':
        """Same atoms with the columns in a seeded random order."""
        order = np.random.default_rng(seed).permutation(self.columns)
        position = np.empty_like(order)
        position[order] = np.arange(self.columns)
        return AtomSystem(
            k1=self.k1, k2=self.k2, r_maps=self.r_maps, t_maps=self.t_maps,
            A=self.A[:, order].copy(), h=self.h.copy(),
            atom_ids=self.atom_ids[order].copy(), dedup_map=position[self.dedup_map],
            dedup=self.dedup, permutations_only=self.permutations_only,
        )


def _columns(k1: Channel, r_maps: np.ndarray, t_maps: np.ndarray, m2: int) -> np.ndarray:
    rk1 = k1.p[r_maps]                     # (|R|, n2, m1)
    t_dense = np.eye(m2)[t_maps]           # (|T|, m1, m2)
    processed = np.einsum('aij,bjk->abik', rk1, t_dense)
    count = r_maps.shape[0] * t_maps.shape[0]
    # vec(M) stacks columns, i.e. flattens M^T
    return processed.transpose(0, 1, 3, 2).reshape(count, -1).T


def _dedup(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    keys = np.round(A.T, DEDUP_DECIMALS)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return first[order], rank[inverse]


def _assemble(k1: Channel, k2: Channel, r_maps: np.ndarray, t_maps: np.ndarray,
              dedup: bool, permutations_only: bool) -> AtomSystem:
    A = _columns(k1, r_maps, t_maps, k2.cols)
    if dedup:
        atom_ids, dedup_map = _dedup(A)
        A = A[:, atom_ids]
    else:
        atom_ids = np.arange(A.shape[1])
        dedup_map = atom_ids.copy()

    system = AtomSystem(
        k1=k1, k2=k2, r_maps=r_maps, t_maps=t_maps,
        A=np.ascontiguousarray(A), h=vec(k2.p),
        atom_ids=atom_ids, dedup_map=dedup_map,
        dedup=dedup, permutations_only=permutations_only,
    )
    logger.debug(f"Atom system: {system.atom_count} atoms, {system.columns} columns, p={system.p}")
    return system


def build_system(k1: Channel, k2: Channel, dedup: bool = False,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> AtomSystem:
    """Enumerate every pure (R, T) pair and build (A, h)."""
    n1, m1 = k1.shape
    n2, m2 = k2.shape
    _check_cap(n1 ** n2 * m2 ** m1, cap, f"Atom set for {k1.shape} -> {k2.shape}")
    r_maps = _pure_maps(n2, n1, cap)
    t_maps = _pure_maps(m1, m2, cap)
    return _assemble(k1, k2, r_maps, t_maps, dedup, permutations_only=False)


def _permutation_system(k1: Channel, k2: Channel, dedup: bool) -> AtomSystem:
    if k1.shape != k2.shape or k1.rows != k1.cols:
        raise NotDoublyStochasticError(
            f"Permutation atoms need two n x n channels, got {k1.shape} and {k2.shape}")
    for name, k in (("K1", k1), ("K2", k2)):
        if not is_doubly_stochastic(k):
            raise NotDoublyStochasticError(f"{name} is not doubly stochastic")

    perms = np.array(list(itertools.permutations(range(k1.rows))), dtype=np.int64)
    return _assemble(k1, k2, perms, perms.copy(), dedup, permutations_only=True)


def restrict_to_permutations(system: AtomSystem) -> AtomSystem:
    """Keep only atoms whose R and T are both permutations.

    Enough for doubly stochastic K1, K2 of the same size.
    """
    return _permutation_system(system.k1, system.k2, system.dedup)


def caratheodory_bound(n2: int, m2: int, doubly_stochastic: bool = False) -> int:
    """Number of atoms that always suffices for a certificate."""
    if n2 < 1 or m2 < 1:
        raise ShapeMismatchError(f"Dimensions must be positive, got ({n2}, {m2})")
    if doubly_stochastic:
        if n2 != m2:
            raise ShapeMismatchError(f"Doubly stochastic bound needs n2 == m2, got ({n2}, {m2})")
        return (n2 - 1) ** 2 + 1
    return n2 * (m2 - 1) + 1


def _check_indices(system: AtomSystem, indices: Sequence[int]):
    for column in indices:
        if not 0 <= column < system.columns:
            raise IndexOutOfRangeError(f"Certificate column {column} outside 0..{system.columns - 1}")


def certificate_residual_inf(system: AtomSystem, indices: Sequence[int], weights) -> float:
    _check_indices(system, indices)
    weights = np.asarray(weights, dtype=float)
    if len(indices) == 0:
        return float(np.max(np.abs(system.h)))
    return float(np.max(np.abs(system.A[:, list(indices)] @ weights - system.h)))


def verify_certificate(system: AtomSystem, cert: InclusionCertificate, tol: float) -> bool:
    """True when the weights form a probability vector and the residual is at most tol."""
    residual = certificate_residual_inf(system, cert.atom_indices, cert.weights)
    weights = cert.weights
    if weights.size == 0 or np.any(weights < -TAU_WEIGHTS) or abs(weights.sum() - 1.0) > TAU_WEIGHTS:
        logger.debug(f"Certificate weights are not a probability vector (sum {weights.sum():.12g})")
        return False
    return residual <= tol


def make_certificate(system: AtomSystem, columns: Sequence[int], weights) -> InclusionCertificate:
    """Certificate over system columns, carrying its (R, T) pairs and residual."""
    columns = [int(c) for c in columns]
    weights = np.asarray(weights, dtype=float)
    residual = certificate_residual_inf(system, columns, weights)
    pairs = tuple(
        (r.to_channel(), t.to_channel())
        for r, t in (system.column_pair(c) for c in columns)
    )
    return InclusionCertificate(tuple(columns), weights, residual, pairs)


# --- Binary cache ---

def _fingerprint(k1: Channel, k2: Channel, dedup: bool, permutations_only: bool) -> str:
    digest = hashlib.sha256()
    for k in (k1, k2):
        digest.update(np.asarray(k.shape, dtype=np.int64).tobytes())
        digest.update(np.ascontiguousarray(k.p).tobytes())
    digest.update(bytes([int(dedup), int(permutations_only)]))
    return digest.hexdigest()


def cache_path(cache_dir: Union[str, Path], k1: Channel, k2: Channel,
               dedup: bool, permutations_only: bool) -> Path:
    key = _fingerprint(k1, k2, dedup, permutations_only)[:24]
    return Path(cache_dir) / f"atoms-{key}.npz"


def save_system(system: AtomSystem, path: Union[str, Path]):
    np.savez_compressed(
        path,
        format_version=np.array(CACHE_FORMAT_VERSION),
        fingerprint=np.array(_fingerprint(system.k1, system.k2, system.dedup, system.permutations_only)),
        A=system.A,
        h=system.h,
        r_maps=system.r_maps,
        t_maps=system.t_maps,
        atom_ids=system.atom_ids,
        dedup_map=system.dedup_map,
        flags=np.array([system.dedup, system.permutations_only]),
    )
    logger.debug(f"Saved atom system to {path}")


def load_system(path: Union[str, Path], k1: Channel, k2: Channel) -> AtomSystem:
    """Load a cached system for (k1, k2); CacheFormatError if it does not match."""
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != CACHE_FORMAT_VERSION:
                raise CacheFormatError(f"Unsupported cache format version {version}")
            dedup, permutations_only = (bool(v) for v in data["flags"])
            if str(data["fingerprint"]) != _fingerprint(k1, k2, dedup, permutations_only):
                raise CacheFormatError("Cache was built for different channels")
            return AtomSystem(
                k1=k1, k2=k2,
                r_maps=data["r_maps"], t_maps=data["t_maps"],
                A=data["A"], h=data["h"],
                atom_ids=data["atom_ids"], dedup_map=data["dedup_map"],
                dedup=dedup, permutations_only=permutations_only,
            )
    except CacheFormatError:
        raise
    except (OSError, KeyError, ValueError) as e:
        raise CacheFormatError(f"Unreadable atom cache {path}: {e}")


def load_or_build(
    k1: Channel,
    k2: Channel,
    dedup: bool = False,
    permutations_only: bool = False,
    cache_dir: Optional[Union[str, Path]] = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> AtomSystem:
    """build_system (plus permutation restriction), going through the cache when given."""
    path = cache_path(cache_dir, k1, k2, dedup, permutations_only) if cache_dir else None
    if path is not None and path.exists():
        try:
            system = load_system(path, k1, k2)
            logger.info(f"Loaded atom system from cache {path}")
            return system
        except CacheFormatError as e:
            logger.warning(f"Ignoring atom cache {path}: {e}; rebuilding")

    if permutations_only:
        system = _permutation_system(k1, k2, dedup)
    else:
        system = build_system(k1, k2, dedup=dedup, cap=cap)

    if path is not None:
        save_system(system, path)
    return system
