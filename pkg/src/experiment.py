"""
Randomized experiment harness.

Each trial plants an inclusion instance and runs one algorithm on it.
Trial t at sparsity beta draws from numpy.random.default_rng([seed, beta, t]),
so any record can be reproduced on its own and trials may run in any order.
"""

import asyncio
import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, List, Optional, Sequence, Tuple

import numpy as np

from src.atoms import DEFAULT_ENUMERATION_CAP, build_system, caratheodory_bound, verify_certificate
from src.errors import InfeasibleError, IterationLimitError, OutOfRangeError, RankDeficientError
from src.instances import planted_instance
from src.lp import DEFAULT_MAX_ITERS, DEFAULT_POOL_THRESHOLD, TAU_INC, basis_pursuit, shannon_deficiency
from src.omp import DEFAULT_EPSILON, OmpConfig, conjecture1_probe, run_alg1, run_alg2

logger = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "lp", "basis_pursuit")

TRIAL_COLUMNS = ["beta", "trial", "seed", "algorithm", "success", "s1", "t_act",
                 "residue_inf", "value", "support", "verified", "error"]
SUMMARY_COLUMNS = ["beta", "trials", "failures", "rate", "max_t_act", "mean_t_act"]


@dataclass(frozen=True)
class ExperimentSpec:
    shape: Tuple[int, int, int, int]
    beta_values: Tuple[int, ...]
    trials: int
    seed: int = 0
    algorithm: str = "alg1"
    epsilon: float = DEFAULT_EPSILON
    tol_inclusion: float = TAU_INC
    max_actual_iters: Optional[int] = None
    shuffle_atoms: Optional[int] = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    lp_max_iters: int = DEFAULT_MAX_ITERS
    pool_threshold: int = DEFAULT_POOL_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, 'shape', tuple(int(v) for v in self.shape))
        object.__setattr__(self, 'beta_values', tuple(int(b) for b in self.beta_values))
        if len(self.shape) != 4 or min(self.shape) < 1:
            raise OutOfRangeError(f"Shape must be four positive integers, got {self.shape}")
        if self.trials < 1:
            raise OutOfRangeError(f"trials must be at least 1, got {self.trials}")
        if not self.beta_values or min(self.beta_values) < 1:
            raise OutOfRangeError(f"beta values must be positive, got {self.beta_values}")
        if self.algorithm not in ALGORITHMS:
            raise OutOfRangeError(f"Unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        n1, m1, n2, m2 = self.shape
        atoms = n1 ** n2 * m2 ** m1
        if atoms > self.enumeration_cap:
            raise OutOfRangeError(f"Shape {self.shape} needs {atoms} atoms (cap {self.enumeration_cap})")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrialRecord:
    beta: int
    trial: int
    seed: int
    algorithm: str
    success: bool
    s1: int = 0
    t_act: int = 0
    residue_inf: float = float('nan')
    value: float = float('nan')
    support: int = 0
    verified: bool = False
    error: str = ""
    wall_time: float = 0.0


@dataclass(frozen=True)
class BetaSummary:
    beta: int
    trials: int
    failures: int
    rate: float
    max_t_act: int
    mean_t_act: float


def trial_rng(seed: int, beta: int, trial: int) -> Tuple[np.random.Generator, int]:
    """Generator for one trial plus a 64-bit integer identifying its stream."""
    sequence = np.random.SeedSequence([seed, beta, trial])
    stream_id = int(sequence.generate_state(1, dtype=np.uint64)[0])
    return np.random.default_rng(sequence), stream_id


def _run_omp(spec: ExperimentSpec, system, beta: int, trial: int, stream_id: int) -> TrialRecord:
    if spec.shuffle_atoms is not None:
        system = system.shuffled(spec.shuffle_atoms)
    cfg = OmpConfig(s=caratheodory_bound(system.n2, system.m2), epsilon=spec.epsilon,
                    max_actual_iters=spec.max_actual_iters)
    runner = run_alg1 if spec.algorithm == "alg1" else run_alg2
    try:
        outcome = runner(system, cfg)
    except IterationLimitError as e:
        logger.warning(f"beta={beta} trial={trial}: {e}")
        return TrialRecord(beta, trial, stream_id, spec.algorithm, False, t_act=e.iterations,
                           error="iteration_limit")

    verified = False
    if outcome.f:
        verified = verify_certificate(system, outcome.certificate(system), spec.epsilon * 10)
        if not verified:
            logger.warning(f"beta={beta} trial={trial}: successful run failed certificate check")
    return TrialRecord(
        beta, trial, stream_id, spec.algorithm, outcome.f,
        s1=outcome.s1, t_act=outcome.t_act, residue_inf=outcome.residue_inf,
        support=outcome.s1, verified=verified,
    )


def run_trial(spec: ExperimentSpec, beta: int, trial: int) -> TrialRecord:
    """Plant one instance and run the configured algorithm on it."""
    started = time.perf_counter()
    rng, stream_id = trial_rng(spec.seed, beta, trial)
    instance = planted_instance(spec.shape, beta, rng)

    if spec.algorithm in ("alg1", "alg2"):
        system = build_system(instance.k1, instance.k2, dedup=False, cap=spec.enumeration_cap)
        record = _run_omp(spec, system, beta, trial, stream_id)
    elif spec.algorithm == "lp":
        system = build_system(instance.k1, instance.k2, dedup=True, cap=spec.enumeration_cap)
        result = shannon_deficiency(system, tol=spec.tol_inclusion, max_iters=spec.lp_max_iters,
                                    pool_threshold=spec.pool_threshold)
        record = TrialRecord(beta, trial, stream_id, spec.algorithm, result.included,
                             value=result.value, support=int(result.support.size),
                             verified=result.included)
    else:
        system = build_system(instance.k1, instance.k2, dedup=True, cap=spec.enumeration_cap)
        try:
            g = basis_pursuit(system, max_iters=spec.lp_max_iters, tol=spec.tol_inclusion)
            record = TrialRecord(beta, trial, stream_id, spec.algorithm, True,
                                 value=float(np.abs(g).sum()), support=int(np.sum(np.abs(g) > 1e-12)))
        except InfeasibleError as e:
            logger.warning(f"beta={beta} trial={trial}: basis pursuit failed: {e}")
            record = TrialRecord(beta, trial, stream_id, spec.algorithm, False, error="infeasible")

    elapsed = time.perf_counter() - started
    return TrialRecord(**{**asdict(record), "wall_time": elapsed})


async def run_experiment(spec: ExperimentSpec, threads: int = 1) -> List[TrialRecord]:
    """Run every (beta, trial) pair on a thread pool; records come back sorted by (beta, trial)."""
    loop = asyncio.get_running_loop()
    logger.info(f"Running {spec.algorithm} on shape {spec.shape}: "
                f"{spec.trials} trials x beta {list(spec.beta_values)} with {threads} threads")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [
            loop.run_in_executor(pool, run_trial, spec, beta, trial)
            for beta in spec.beta_values
            for trial in range(spec.trials)
        ]
        records = await asyncio.gather(*futures)
    records = sorted(records, key=lambda r: (r.beta, r.trial))
    failures = sum(1 for r in records if not r.success)
    logger.info(f"Experiment finished: {len(records)} trials, {failures} failures")
    return records


def summarize(records: Sequence[TrialRecord]) -> List[BetaSummary]:
    summaries = []
    for beta in sorted({r.beta for r in records}):
        group = [r for r in records if r.beta == beta]
        failures = sum(1 for r in group if not r.success)
        t_acts = [r.t_act for r in group]
        summaries.append(BetaSummary(
            beta=beta,
            trials=len(group),
            failures=failures,
            rate=failures / len(group),
            max_t_act=max(t_acts),
            mean_t_act=float(np.mean(t_acts)),
        ))
    return summaries


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trials_csv(records: Sequence[TrialRecord], stream: IO[str], timings: bool = False):
    """One row per trial. wall_time is only written with timings=True so output is reproducible."""
    columns = TRIAL_COLUMNS + (["wall_time"] if timings else [])
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        data = asdict(record)
        writer.writerow([_fmt(data[c]) for c in columns])


def write_summary_csv(summaries: Sequence[BetaSummary], stream: IO[str]):
    """(beta, rate) summary with failure counts and backtracking statistics."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for summary in summaries:
        data = asdict(summary)
        writer.writerow([_fmt(data[c]) for c in SUMMARY_COLUMNS])


# --- Conjecture search ---

@dataclass
class ProjectionSearchResult:
    trials: int
    skipped: int = 0
    counterexamples: List[List[List[float]]] = field(default_factory=list)

    @property
    def found_all(self) -> bool:
        return not self.counterexamples


def run_conjecture1_search(
    trials: int,
    max_rows: int = 8,
    max_cols: int = 5,
    seed: int = 0,
    out_dir: Optional[str] = None,
) -> ProjectionSearchResult:
    """Probe random non-negative full-column-rank matrices for the non-negative projection property.

    Counterexamples are collected and, with out_dir, written as JSON files.
    """
    result = ProjectionSearchResult(trials=trials)
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        cols = int(rng.integers(1, max_cols + 1))
        rows = int(rng.integers(cols, max(cols, max_rows) + 1))
        G = rng.uniform(0.0, 1.0, size=(rows, cols))
        try:
            found, _ = conjecture1_probe(G)
        except RankDeficientError:
            result.skipped += 1
            continue
        if not found:
            result.counterexamples.append(G.tolist())
            if out_dir:
                path = Path(out_dir) / f"counterexample-{seed}-{trial}.json"
                path.write_text(json.dumps({"seed": seed, "trial": trial, "G": G.tolist()}, indent=2) + "\n",
                                encoding="utf-8")
                logger.warning(f"Counterexample written to {path}")

    logger.info(f"Projection search: {trials} matrices, {len(result.counterexamples)} counterexamples, "
                f"{result.skipped} skipped")
    return result
