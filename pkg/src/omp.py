"""
Greedy recovery of sparse non-negative certificates.

Both algorithms select columns of A by the largest signed inner product
with the current residue and only accept a column when the least-squares
weights over the selection stay non-negative. run_alg2 adds backtracking:
when no candidate at a depth keeps the weights non-negative, the previous
selection is revisited.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from src.atoms import AtomSystem, make_certificate
from src.channel import InclusionCertificate
from src.errors import IterationLimitError, RankDeficientError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-8
TAU_NN = 1e-10
TAU_RANK = 1e-10
# Inner products smaller than this are treated as zero by the probes
TAU_SIGN = 1e-9
ATTEMPTED = -1.0


@dataclass(frozen=True)
class OmpConfig:
    s: int
    epsilon: float = DEFAULT_EPSILON
    max_actual_iters: Optional[int] = None
    trace: bool = False

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"Sparsity cap must be at least 1, got {self.s}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def iteration_cap(self) -> int:
        return self.max_actual_iters if self.max_actual_iters is not None else 50 * self.s


@dataclass(frozen=True)
class TraceStep:
    """One attempted candidate column."""
    depth: int
    column: int
    inner_product: float
    new_coefficient: float
    accepted: bool
    previous_residue_l2: float
    residue_l2: float


@dataclass(frozen=True, eq=False)
class OmpOutcome:
    f: bool
    s1: int
    Lambda: Tuple[int, ...]
    g: np.ndarray
    t_act: int
    residue_inf: float
    trace: Tuple[TraceStep, ...] = ()

    def to_dict(self):
        return {
            "f": self.f,
            "s1": self.s1,
            "lambda": list(self.Lambda),
            "g": self.g.tolist(),
            "t_act": self.t_act,
            "residue_inf": self.residue_inf,
        }

    def certificate(self, system: AtomSystem) -> InclusionCertificate:
        if not self.f:
            raise ValueError("No certificate: the run did not succeed")
        return make_certificate(system, self.Lambda, self.g)


class _IncrementalQR:
    """Thin QR of the selected columns; extended() never mutates self."""

    def __init__(self, h: np.ndarray, Q: Optional[np.ndarray] = None, R: Optional[np.ndarray] = None):
        self.h = h
        self.Q = Q if Q is not None else np.zeros((h.shape[0], 0))
        self.R = R if R is not None else np.zeros((0, 0))

    @classmethod
    def from_columns(cls, h: np.ndarray, columns: np.ndarray) -> '_IncrementalQR':
        qr = cls(h)
        for j in range(columns.shape[1]):
            qr = qr.extended(columns[:, j])
        return qr

    @property
    def size(self) -> int:
        return self.Q.shape[1]

    def extended(self, a: np.ndarray) -> '_IncrementalQR':
        coeffs = self.Q.T @ a
        w = a - self.Q @ coeffs
        # second Gram-Schmidt pass
        correction = self.Q.T @ w
        w = w - self.Q @ correction
        coeffs = coeffs + correction
        norm = float(np.linalg.norm(w))
        if norm <= TAU_RANK * max(float(np.linalg.norm(a)), 1.0):
            raise RankDeficientError("Column is linearly dependent on the current selection")

        k = self.size
        R = np.zeros((k + 1, k + 1))
        R[:k, :k] = self.R
        R[:k, k] = coeffs
        R[k, k] = norm
        Q = np.column_stack([self.Q, w / norm])
        return _IncrementalQR(self.h, Q, R)

    def coefficients(self) -> np.ndarray:
        if self.size == 0:
            return np.zeros(0)
        return solve_triangular(self.R, self.Q.T @ self.h)

    def residue(self) -> np.ndarray:
        return self.h - self.Q @ (self.Q.T @ self.h)


def nnls_gate(A_sel: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Unconstrained least squares over the selected columns plus a non-negativity flag."""
    A_sel = np.asarray(A_sel, dtype=float)
    h = np.asarray(h, dtype=float)
    if A_sel.ndim == 1:
        A_sel = A_sel[:, np.newaxis]
    g = _IncrementalQR.from_columns(h, A_sel).coefficients()
    return g, bool(g.min() >= -TAU_NN) if g.size else True


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v)))


class _Tracer:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.steps: List[TraceStep] = []

    def record(self, depth, column, ip, g, accepted, residue_before, residue_after):
        if not self.enabled:
            return
        self.steps.append(TraceStep(
            depth=depth,
            column=column,
            inner_product=float(ip),
            new_coefficient=float(g[-1]) if g is not None else math.nan,
            accepted=accepted,
            previous_residue_l2=float(np.linalg.norm(residue_before)),
            residue_l2=float(np.linalg.norm(residue_after)) if residue_after is not None else math.nan,
        ))


def _attempt(A, row, qr, depth, residue, tracer):
    """Pick the best unattempted positive column of row and try it.

    Returns (column, extended QR, weights) or None when the column is
    dependent on the selection. Ties in row go to the lowest index.
    """
    column = int(np.argmax(row))
    ip = row[column]
    row[column] = ATTEMPTED
    try:
        extended = qr.extended(A[:, column])
    except RankDeficientError:
        logger.debug(f"Depth {depth}: column {column} is dependent, skipped")
        tracer.record(depth, column, ip, None, False, residue, None)
        return None
    g = extended.coefficients()
    accepted = bool(g.min() >= -TAU_NN)
    tracer.record(depth, column, ip, g, accepted, residue, extended.residue())
    return column, extended, g


def run_alg1(system: AtomSystem, cfg: OmpConfig) -> OmpOutcome:
    """Greedy selection without backtracking.

    A depth whose candidates all give negative weights keeps the last
    candidate tried, and the run carries on from there.
    """
    A, h = system.A, system.h
    tracer = _Tracer(cfg.trace)
    qr = _IncrementalQR(h)
    residue = h.copy()
    selected: List[int] = []
    g = np.zeros(0)
    t_act = 0

    while len(selected) < cfg.s and _inf(residue) >= cfg.epsilon:
        depth = len(selected) + 1
        P = residue @ A
        candidate = None
        while (candidate is None or candidate[2].min() < -TAU_NN) and P.max() > 0:
            attempt = _attempt(A, P, qr, depth, residue, tracer)
            if attempt is not None:
                candidate = attempt
        t_act += 1
        if candidate is None:
            logger.debug(f"Depth {depth}: no usable positive inner product")
            break
        column, qr, g = candidate
        selected.append(column)
        residue = qr.residue()

    residue_inf = _inf(residue)
    f = bool(selected) and bool(g.min() >= -TAU_NN) and residue_inf < cfg.epsilon
    if f:
        g = np.clip(g, 0.0, None)
    outcome = OmpOutcome(
        f=f, s1=len(selected), Lambda=tuple(selected), g=g,
        t_act=t_act, residue_inf=residue_inf, trace=tuple(tracer.steps),
    )
    logger.debug(f"Algorithm 1: f={int(f)}, s1={outcome.s1}, residue {residue_inf:.3g}")
    return outcome


def run_alg2(system: AtomSystem, cfg: OmpConfig) -> OmpOutcome:
    """Greedy selection with backtracking; P keeps one row of inner products per depth."""
    A, h = system.A, system.h
    s = cfg.s
    cap = cfg.iteration_cap
    tracer = _Tracer(cfg.trace)

    P = np.zeros((s, A.shape[1]))
    selected = [0] * s
    weights: List[np.ndarray] = [np.zeros(0)] * s
    residues: List[np.ndarray] = [h.copy()] + [h.copy()] * s
    qr = _IncrementalQR(h)
    t = 1
    t_act = 0

    while 1 <= t <= s and _inf(residues[t - 1]) >= cfg.epsilon:
        if t_act >= cap:
            raise IterationLimitError(
                f"Backtracking search exceeded {cap} iterations", iterations=t_act)
        row = P[t - 1]
        backtrack = False
        if row.max() <= 0 and row.min() < 0:
            backtrack = True
        else:
            if not row.any():
                row[:] = residues[t - 1] @ A
            candidate = None
            while (candidate is None or candidate[2].min() < -TAU_NN) and row.max() > 0:
                attempt = _attempt(A, row, qr, t, residues[t - 1], tracer)
                if attempt is not None:
                    candidate = attempt
            if candidate is None or candidate[2].min() < -TAU_NN:
                backtrack = True
            else:
                column, qr, g = candidate
                selected[t - 1] = column
                weights[t - 1] = g
                residues[t] = qr.residue()
                t += 1

        if backtrack:
            row[:] = 0.0
            t -= 1
            if t >= 1:
                qr = _IncrementalQR.from_columns(h, A[:, selected[:t - 1]])
            logger.debug(f"Backtracking to depth {t}")
        t_act += 1

    f = t >= 1 and _inf(residues[t - 1]) < cfg.epsilon
    s1 = max(t - 1, 0)
    g = np.clip(weights[s1 - 1], 0.0, None) if s1 >= 1 else np.zeros(0)
    residue_inf = _inf(residues[t - 1]) if t >= 1 else _inf(h)
    outcome = OmpOutcome(
        f=bool(f), s1=s1, Lambda=tuple(selected[:s1]), g=g,
        t_act=t_act, residue_inf=residue_inf, trace=tuple(tracer.steps),
    )
    logger.debug(f"Algorithm 2: f={int(f)}, s1={s1}, t_act={t_act}")
    return outcome


@dataclass(frozen=True)
class NecessityReport:
    """Inner-product signs against new least-squares coefficients for one partial selection."""
    terminal: bool
    has_positive_ip: bool
    sign_agreement: bool
    violations: Tuple[int, ...] = ()
    inner_products: Tuple[float, ...] = ()
    new_coefficients: Tuple[float, ...] = ()


def positive_ip_necessity_probe(
    system: AtomSystem,
    partial_selection: Sequence[int],
    epsilon: float = DEFAULT_EPSILON,
) -> NecessityReport:
    """Check that appending a column yields a new weight with the sign of its inner product.

    Each candidate is solved from scratch with numpy least squares so the
    check does not share code with the incremental solver it validates.
    """
    A, h = system.A, system.h
    chosen = [int(c) for c in partial_selection]
    A_sel = A[:, chosen]
    if chosen:
        g0, *_ = np.linalg.lstsq(A_sel, h, rcond=None)
        residue = h - A_sel @ g0
    else:
        residue = h.copy()
    if _inf(residue) < epsilon:
        return NecessityReport(terminal=True, has_positive_ip=False, sign_agreement=True)

    ips = residue @ A
    violations = []
    coefficients = []
    for column in range(A.shape[1]):
        if column in chosen or abs(ips[column]) <= TAU_SIGN:
            coefficients.append(math.nan)
            continue
        a = A[:, column]
        projected = a - A_sel @ np.linalg.lstsq(A_sel, a, rcond=None)[0] if chosen else a
        if np.linalg.norm(projected) <= TAU_RANK * max(np.linalg.norm(a), 1.0):
            coefficients.append(math.nan)
            continue
        g, *_ = np.linalg.lstsq(np.column_stack([A_sel, a]), h, rcond=None)
        coefficients.append(float(g[-1]))
        if np.sign(g[-1]) != np.sign(ips[column]):
            violations.append(column)

    report = NecessityReport(
        terminal=False,
        has_positive_ip=bool(np.max(ips) > TAU_SIGN),
        sign_agreement=not violations,
        violations=tuple(violations),
        inner_products=tuple(float(v) for v in ips),
        new_coefficients=tuple(coefficients),
    )
    if violations:
        logger.warning(f"Sign law violated for columns {violations[:10]}")
    return report


def conjecture1_probe(G) -> Tuple[bool, Optional[int]]:
    """Find a column whose projection onto the other columns has non-negative weights.

    Returns (True, first such column) or (False, None); the latter would
    disprove the conjectured property and is logged.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValueError(f"Expected a matrix, got shape {G.shape}")
    rows, cols = G.shape
    if np.linalg.matrix_rank(G) < cols:
        raise RankDeficientError(f"Columns of the {rows}x{cols} matrix are not linearly independent")
    if cols == 1:
        return True, 0

    for k in range(cols):
        others = np.delete(G, k, axis=1)
        x, *_ = np.linalg.lstsq(others, G[:, k], rcond=None)
        if x.min() >= -TAU_NN:
            return True, k

    logger.warning(f"Counterexample to the non-negative projection property: {G.tolist()}")
    return False, None
