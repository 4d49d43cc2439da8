"""
Linear programming for inclusion, Shannon deficiency and degradation.

The kernel is a dense two-phase primal simplex on

    minimize c^T x  subject to  G x <= b,  x >= 0

using Bland's rule throughout. Equalities are written as pairs of
inequalities so every problem here fits that one form.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.atoms import (
    AtomSystem,
    DEFAULT_ENUMERATION_CAP,
    caratheodory_bound,
    load_or_build,
    make_certificate,
)
from src.channel import Channel, InclusionCertificate, validate
from src.errors import (
    InfeasibleError,
    IterationLimitError,
    ShapeMismatchError,
    UnboundedError,
)
from src.omp import OmpConfig, run_alg1

logger = logging.getLogger(__name__)

TAU_LP = 1e-9
TAU_INC = 1e-7
TAU_PHASE1 = 1e-8
DEFAULT_MAX_ITERS = 200_000
DEFAULT_POOL_THRESHOLD = 50_000
DEFAULT_POOL_RANDOM_COLUMNS = 2_000
COLUMNS_PER_PASS = 500
# Weights at or below this are left out of the certificate support
SUPPORT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LinearConstraints:
    """Rows G x <= b."""
    G: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if G.shape[0] != b.shape[0]:
            raise ShapeMismatchError(f"{G.shape[0]} constraint rows but {b.shape[0]} bounds")
        object.__setattr__(self, 'G', G)
        object.__setattr__(self, 'b', b)


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Optimal basic solution.

    duals[i] >= 0 is the multiplier of row i, so the reduced cost of a new
    column a with cost c_a is c_a + duals . a.
    """
    optimum: float
    x: np.ndarray
    duals: np.ndarray
    iterations: int


class _Tableau:
    def __init__(self, body: np.ndarray, rhs: np.ndarray, basis: np.ndarray):
        self.body = body
        self.rhs = rhs
        self.basis = basis
        self.reduced = np.zeros(body.shape[1])
        self.value = 0.0

    def set_costs(self, costs: np.ndarray):
        cb = costs[self.basis]
        self.reduced = costs - cb @ self.body
        self.value = float(cb @ self.rhs)

    def pivot(self, row: int, col: int):
        self.rhs[row] /= self.body[row, col]
        self.body[row] /= self.body[row, col]
        factors = self.body[:, col].copy()
        factors[row] = 0.0
        self.body -= np.outer(factors, self.body[row])
        self.rhs -= factors * self.rhs[row]
        self.value += self.reduced[col] * self.rhs[row]
        self.reduced -= self.reduced[col] * self.body[row]
        self.basis[row] = col

    def entering(self, allowed: int, tol: float) -> Optional[int]:
        candidates = np.flatnonzero(self.reduced[:allowed] < -tol)
        return int(candidates[0]) if candidates.size else None

    def leaving(self, col: int, tol: float) -> Optional[int]:
        column = self.body[:, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return None
        ratios = self.rhs[rows] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        return int(tied[np.argmin(self.basis[tied])])

    def optimize(self, allowed: int, tol: float, budget: int) -> int:
        """Run Bland pivots until optimal; returns the number of pivots."""
        pivots = 0
        while True:
            col = self.entering(allowed, tol)
            if col is None:
                return pivots
            row = self.leaving(col, tol)
            if row is None:
                raise UnboundedError(f"LP is unbounded along column {col}")
            if pivots >= budget:
                raise IterationLimitError(f"Simplex exceeded {budget} pivots", iterations=pivots)
            self.pivot(row, col)
            pivots += 1


def solve_lp(
    objective: Sequence[float],
    constraints: LinearConstraints,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = TAU_LP,
) -> LpSolution:
    """Minimize objective . x subject to G x <= b, x >= 0."""
    c = np.asarray(objective, dtype=float).reshape(-1)
    G, b = constraints.G, constraints.b
    rows, n = G.shape
    if c.shape[0] != n:
        raise ShapeMismatchError(f"Objective has {c.shape[0]} entries for {n} variables")

    # Columns: [x | slacks | artificials]; rows with b < 0 are negated
    flip = b < 0
    sign = np.where(flip, -1.0, 1.0)
    artificial_rows = np.flatnonzero(flip)
    k = artificial_rows.size
    body = np.zeros((rows, n + rows + k))
    body[:, :n] = G * sign[:, np.newaxis]
    body[:, n:n + rows] = np.diag(sign)
    body[artificial_rows, n + rows + np.arange(k)] = 1.0
    rhs = b * sign
    basis = np.arange(n, n + rows)
    basis[artificial_rows] = n + rows + np.arange(k)

    tableau = _Tableau(body, rhs, basis)
    iterations = 0
    width = n + rows

    if k:
        phase1_costs = np.zeros(width + k)
        phase1_costs[width:] = 1.0
        tableau.set_costs(phase1_costs)
        iterations += tableau.optimize(width + k, tol, max_iters)
        infeasibility = float(tableau.rhs[tableau.basis >= width].sum())
        if infeasibility > TAU_PHASE1 * max(1.0, float(np.max(np.abs(b)))):
            raise InfeasibleError(f"LP is infeasible (phase 1 optimum {infeasibility:.3g})")

        keep = np.ones(rows, dtype=bool)
        for row in np.flatnonzero(tableau.basis >= width):
            nonzero = np.flatnonzero(np.abs(tableau.body[row, :width]) > tol)
            if nonzero.size:
                tableau.pivot(row, int(nonzero[0]))
            else:
                keep[row] = False
        tableau.body = tableau.body[keep][:, :width]
        tableau.rhs = tableau.rhs[keep]
        tableau.basis = tableau.basis[keep]
        logger.debug(f"Phase 1 finished after {iterations} pivots; {int((~keep).sum())} redundant rows")

    costs = np.concatenate([c, np.zeros(rows)])
    tableau.set_costs(costs)
    iterations += tableau.optimize(width, tol, max_iters - iterations)

    x = np.zeros(width)
    x[tableau.basis] = tableau.rhs
    x = np.clip(x, 0.0, None)
    solution = LpSolution(
        optimum=float(c @ x[:n]),
        x=x[:n],
        duals=np.clip(tableau.reduced[n:width], 0.0, None),
        iterations=iterations,
    )
    logger.debug(f"LP solved: optimum {solution.optimum:.6g} in {iterations} pivots")
    return solution


# --- Shannon deficiency ---

@dataclass(frozen=True, eq=False)
class DeficiencyResult:
    """Minimized sum over rows of the largest deviation from K2 (over pure atoms).

    g_full is indexed by the columns of the system the LP was solved on.
    """
    value: float
    g_full: np.ndarray
    included: bool
    iterations: int
    row_deviation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    certificate: Optional[InclusionCertificate] = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.g_full > SUPPORT_TOL)


def _deficiency_constraints(A: np.ndarray, h: np.ndarray, n2: int) -> LinearConstraints:
    p, q = A.shape
    G = np.zeros((2 * p + 2, q + n2))
    owner = np.arange(p) % n2
    G[:p, :q] = A
    G[np.arange(p), q + owner] = -1.0
    G[p:2 * p, :q] = -A
    G[p + np.arange(p), q + owner] = -1.0
    G[2 * p, :q] = 1.0
    G[2 * p + 1, :q] = -1.0
    b = np.concatenate([h, -h, [1.0, -1.0]])
    return LinearConstraints(G, b)


def _solve_deficiency(A: np.ndarray, h: np.ndarray, n2: int, max_iters: int):
    q = A.shape[1]
    objective = np.concatenate([np.zeros(q), np.ones(n2)])
    return solve_lp(objective, _deficiency_constraints(A, h, n2), max_iters=max_iters)


def _reduced_costs(A: np.ndarray, duals: np.ndarray) -> np.ndarray:
    p = A.shape[0]
    return (duals[:p] - duals[p:2 * p]) @ A + duals[2 * p] - duals[2 * p + 1]


def _seed_columns(system: AtomSystem) -> np.ndarray:
    cfg = OmpConfig(s=caratheodory_bound(system.n2, system.m2))
    outcome = run_alg1(system, cfg)
    return np.asarray(outcome.Lambda, dtype=np.int64)


def _column_generation(system: AtomSystem, max_iters: int,
                       seed_columns: Optional[Sequence[int]]):
    if seed_columns is None:
        seed_columns = _seed_columns(system)
    rng = np.random.default_rng(0)
    random_columns = rng.choice(system.columns, size=min(DEFAULT_POOL_RANDOM_COLUMNS, system.columns),
                                replace=False)
    pool = np.unique(np.concatenate([np.asarray(seed_columns, dtype=np.int64), random_columns]))
    iterations = 0

    while True:
        solution = _solve_deficiency(system.A[:, pool], system.h, system.n2, max_iters - iterations)
        iterations += solution.iterations
        reduced = _reduced_costs(system.A, solution.duals)
        reduced[pool] = 0.0
        improving = np.flatnonzero(reduced < -TAU_LP)
        logger.debug(f"Column generation: pool {pool.size}, optimum {solution.optimum:.3g}, "
                     f"{improving.size} improving columns")
        if improving.size == 0:
            g_full = np.zeros(system.columns)
            g_full[pool] = solution.x[:pool.size]
            return solution, g_full, iterations
        best = improving[np.argsort(reduced[improving], kind="stable")[:COLUMNS_PER_PASS]]
        pool = np.union1d(pool, best)


def shannon_deficiency(
    system: AtomSystem,
    tol: float = TAU_INC,
    max_iters: int = DEFAULT_MAX_ITERS,
    pool_threshold: int = DEFAULT_POOL_THRESHOLD,
    seed_columns: Optional[Sequence[int]] = None,
) -> DeficiencyResult:
    """Solve the deficiency LP over every column of the system.

    Systems wider than pool_threshold are solved on a growing column pool
    priced with the LP duals.
    """
    if system.columns > pool_threshold:
        solution, g_full, iterations = _column_generation(system, max_iters, seed_columns)
    else:
        solution = _solve_deficiency(system.A, system.h, system.n2, max_iters)
        g_full = solution.x[:system.columns].copy()
        iterations = solution.iterations

    g_full = np.clip(g_full, 0.0, None)
    value = max(solution.optimum, 0.0)
    included = value <= tol
    certificate = None
    if included:
        support = np.flatnonzero(g_full > SUPPORT_TOL)
        certificate = make_certificate(system, support, g_full[support])

    logger.info(f"Deficiency over pure-atom polytope: {value:.6g} "
                f"({'included' if included else 'not included'}, {iterations} pivots)")
    return DeficiencyResult(
        value=value,
        g_full=g_full,
        included=included,
        iterations=iterations,
        row_deviation=solution.x[-system.n2:].copy(),
        certificate=certificate,
    )


def decide_inclusion(
    k1: Channel,
    k2: Channel,
    doubly_stochastic_atoms: bool = False,
    dedup: bool = True,
    tol: float = TAU_INC,
    max_iters: int = DEFAULT_MAX_ITERS,
    pool_threshold: int = DEFAULT_POOL_THRESHOLD,
    cache_dir: Optional[str] = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> DeficiencyResult:
    """Build the atom system for (K1, K2) and compute its deficiency."""
    system = load_or_build(k1, k2, dedup=dedup, permutations_only=doubly_stochastic_atoms,
                           cache_dir=cache_dir, cap=cap)
    return shannon_deficiency(system, tol=tol, max_iters=max_iters, pool_threshold=pool_threshold)


def basis_pursuit(system: AtomSystem, max_iters: int = DEFAULT_MAX_ITERS, tol: float = TAU_INC) -> np.ndarray:
    """Minimum l1-norm g with A g = h.

    Every column sums to n2, so any solution has weights summing to 1 and
    its l1 norm exceeds 1 exactly when some weight is negative.
    """
    A, h = system.A, system.h
    q = A.shape[1]
    G = np.block([[A, -A], [-A, A]])
    b = np.concatenate([h, -h])
    try:
        solution = solve_lp(np.ones(2 * q), LinearConstraints(G, b), max_iters=max_iters)
    except InfeasibleError:
        logger.info("Basis pursuit infeasible: h is outside the span of the atoms")
        raise
    if solution.optimum > 1.0 + tol:
        raise InfeasibleError(
            f"Basis pursuit needs l1 norm {solution.optimum:.9g} > 1; K2 is not included")
    g = solution.x[:q] - solution.x[q:]
    logger.info(f"Basis pursuit: l1 norm {solution.optimum:.9g}, support {int(np.sum(np.abs(g) > SUPPORT_TOL))}")
    return g


# --- Degradation ---

@dataclass(frozen=True, eq=False)
class DegradationResult:
    value: float
    T: Channel
    degraded: bool
    iterations: int


def decide_degradation(
    k1: Channel,
    k2: Channel,
    tol: float = TAU_INC,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> DegradationResult:
    """Is K2 = K1 T for a stochastic T? Same deviation objective as the deficiency LP."""
    n1, m1 = k1.shape
    n2, m2 = k2.shape
    if n1 != n2:
        raise ShapeMismatchError(f"Degradation needs equal input alphabets, got {n1} and {n2}")

    t_vars = m1 * m2
    # (K1 T)[i, k] = sum_l K1[i, l] T[l, k] with T[l, k] at variable l * m2 + k
    lifted = np.kron(k1.p, np.eye(m2))
    target = k2.p.reshape(-1)
    owner = np.repeat(np.arange(n2), m2)
    entries = n2 * m2

    G = np.zeros((2 * entries + 2 * m1, t_vars + n2))
    G[:entries, :t_vars] = lifted
    G[np.arange(entries), t_vars + owner] = -1.0
    G[entries:2 * entries, :t_vars] = -lifted
    G[entries + np.arange(entries), t_vars + owner] = -1.0
    row_sums = np.kron(np.eye(m1), np.ones(m2))
    G[2 * entries:2 * entries + m1, :t_vars] = row_sums
    G[2 * entries + m1:, :t_vars] = -row_sums
    b = np.concatenate([target, -target, np.ones(m1), -np.ones(m1)])

    objective = np.concatenate([np.zeros(t_vars), np.ones(n2)])
    solution = solve_lp(objective, LinearConstraints(G, b), max_iters=max_iters)
    value = max(solution.optimum, 0.0)
    t = validate(np.clip(solution.x[:t_vars].reshape(m1, m2), 0.0, None))
    degraded = value <= tol
    logger.info(f"Degradation deviation {value:.6g} ({'degraded' if degraded else 'not degraded'})")
    return DegradationResult(value=value, T=t, degraded=degraded, iterations=solution.iterations)
