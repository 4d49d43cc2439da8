"""
Random channels and planted inclusion instances.

Entries are drawn uniformly from [0, 1] and rows normalized. All functions
take a numpy Generator so callers own the stream.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.channel import (
    Channel,
    InclusionCertificate,
    PureChannel,
    certificate_residual,
    validate,
)
from src.errors import OutOfRangeError

logger = logging.getLogger(__name__)

Shape = Tuple[int, int, int, int]


def _row_normalize(values: np.ndarray) -> np.ndarray:
    return values / values.sum(axis=-1, keepdims=True)


def random_channel(rows: int, cols: int, rng: np.random.Generator) -> Channel:
    return validate(_row_normalize(rng.uniform(0.0, 1.0, size=(rows, cols))))


def random_pure_channel(rows: int, cols: int, rng: np.random.Generator) -> PureChannel:
    return PureChannel(rows, cols, tuple(int(j) for j in rng.integers(0, cols, size=rows)))


def random_permutation(n: int, rng: np.random.Generator) -> PureChannel:
    return PureChannel(n, n, tuple(int(j) for j in rng.permutation(n)))


def random_doubly_stochastic(n: int, rng: np.random.Generator, terms: int = 0) -> Channel:
    """Random convex combination of `terms` permutation matrices (n when 0)."""
    terms = terms or n
    weights = _row_normalize(rng.uniform(0.0, 1.0, size=terms))
    total = sum(w * random_permutation(n, rng).dense() for w in weights)
    return validate(total)


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    k1: Channel
    k2: Channel
    certificate: InclusionCertificate


def planted_instance(shape: Shape, beta: int, rng: np.random.Generator, pure: bool = False) -> PlantedInstance:
    """K2 = sum_a g_a R_a K1 T_a with random K1, R_a, T_a and g.

    shape is (n1, m1, n2, m2). With pure=True the R_a and T_a are pure
    channels instead of uniform random stochastic matrices.
    """
    n1, m1, n2, m2 = shape
    if beta < 1:
        raise OutOfRangeError(f"beta must be at least 1, got {beta}")
    if min(shape) < 1:
        raise OutOfRangeError(f"Shape entries must be positive, got {shape}")

    k1 = random_channel(n1, m1, rng)
    pairs = []
    for _ in range(beta):
        if pure:
            r = random_pure_channel(n2, n1, rng).to_channel()
            t = random_pure_channel(m1, m2, rng).to_channel()
        else:
            r = random_channel(n2, n1, rng)
            t = random_channel(m1, m2, rng)
        pairs.append((r, t))
    g = _row_normalize(rng.uniform(0.0, 1.0, size=beta))

    k2 = validate(sum(w * (r.p @ k1.p @ t.p) for w, (r, t) in zip(g, pairs)))
    cert = InclusionCertificate(tuple(range(beta)), g, pairs=tuple(pairs))
    cert = InclusionCertificate(cert.atom_indices, g, certificate_residual(cert, k1, k2), cert.pairs)
    logger.debug(f"Planted {shape} instance with beta={beta}, residual {cert.residual_inf:.3g}")
    return PlantedInstance(k1=k1, k2=k2, certificate=cert)
