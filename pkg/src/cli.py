#!/usr/bin/env python
"""
Command-line front end.

    python -m src.cli check K1.json K2.json [--method auto|lp|analytic]
    python -m src.cli random-instance --shape 3 3 3 3 --beta 2 --seed 7 --out-dir out/
    python -m src.cli failure-rate --shape 3 3 3 3 --betas 1 2 3 4 5 --trials 1000 --algorithm alg1
    python -m src.cli runs --db runs.db [--run-id 1]
    python -m src.cli equiv K1.json K2.json
    python -m src.cli kron K1.json K2.json 2 cert.json
    python -m src.cli capacity K.json
    python -m src.cli conjecture1 --trials 10000

Single decisions print JSON, sweeps print CSV. Exit codes: 0 decided or
included, 1 refuted, not included or failed, 2 error.
"""

import argparse
import asyncio
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.channel import (
    Channel,
    InclusionCertificate,
    certificate_residual,
    is_circulant,
    is_doubly_stochastic,
    is_symmetric_dmc,
    kron_lift_certificate,
)
from src.channel_io import certificate_to_dict, dump_certificate, dump_channel, load_certificate, load_channel
from src._version import __version__
from src.config import Config
from src.db.trial_repo import TrialRepository
from src.equivalence import blahut_arimoto_capacity, check_assumptions, decide_equivalence
from src.errors import ChannelInclusionError, NoCirculantFormError, NoConvergenceError, SizeLimitError
from src.experiment import (
    ALGORITHMS,
    ExperimentSpec,
    run_conjecture1_search,
    run_experiment,
    summarize,
    write_summary_csv,
    write_trials_csv,
)
from src.instances import planted_instance
from src.lp import decide_inclusion
from src.order import (
    TAU_MAJ,
    bec_parameter,
    bsc_bec_inclusion,
    bsc_parameter,
    circulant_conditions,
    circulant_kernel_matrix,
    doubly_stochastic_necessary,
    symmetric_to_circulant,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REFUTED = 1
EXIT_ERROR = 2

DEFICIENCY_LABEL = "deficiency over pure-atom polytope"
INCLUDED = "included"
NOT_INCLUDED = "not_included"
UNDECIDED = "undecided"


def _emit_json(payload: Dict[str, Any]):
    sys.stdout.write(json.dumps(payload, indent=2, allow_nan=False, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _apply_overrides(config: Config, args: argparse.Namespace):
    if getattr(args, "tol_inclusion", None) is not None:
        config.inclusion_tol = args.tol_inclusion
    if getattr(args, "epsilon", None) is not None:
        config.omp_epsilon = args.epsilon
    if getattr(args, "atoms_cache", None):
        config.atoms_cache_dir = args.atoms_cache
    if getattr(args, "threads", None) is not None:
        config.experiment_threads = args.threads


# --- check ---

def _pair_certificate(r: np.ndarray, t: np.ndarray, k1: Channel, k2: Channel) -> InclusionCertificate:
    cert = InclusionCertificate((0,), np.array([1.0]), pairs=((Channel(r), Channel(t)),))
    return InclusionCertificate(cert.atom_indices, cert.weights, certificate_residual(cert, k1, k2), cert.pairs)


def _screen_bsc_bec(k1: Channel, k2: Channel) -> Optional[Dict[str, Any]]:
    p, eps = bsc_parameter(k2), bec_parameter(k1)
    if p is not None and eps is not None:
        included = bsc_bec_inclusion(p, eps)[0]
        return {"screen": "bsc_bec", "verdict": INCLUDED if included else NOT_INCLUDED,
                "detail": {"p": p, "eps": eps}}
    p, eps = bsc_parameter(k1), bec_parameter(k2)
    if p is not None and eps is not None:
        # BEC(1) has a constant output, every channel includes it
        included = bsc_bec_inclusion(p, eps)[1] or eps >= 1 - TAU_MAJ
        return {"screen": "bsc_bec", "verdict": INCLUDED if included else NOT_INCLUDED,
                "detail": {"p": p, "eps": eps}}
    return None


def _screen_majorization(k1: Channel, k2: Channel) -> Optional[Dict[str, Any]]:
    if k1.shape != k2.shape or not (is_doubly_stochastic(k1) and is_doubly_stochastic(k2)):
        return None
    verdict = doubly_stochastic_necessary(k1, k2)
    return {
        "screen": "majorization",
        "verdict": UNDECIDED if verdict.holds else NOT_INCLUDED,
        "detail": {"holds": verdict.holds, "first_violation_k": verdict.first_violation_k,
                   "sum_gap": verdict.sum_gap},
    }


def _circulant_screen(name: str, k1: Channel, k2: Channel, r1, t1, r2, t2) -> Dict[str, Any]:
    """circulant_conditions on (R1 K1 T1, R2 K2 T2); the R, T are permutations."""
    c1 = Channel(r1 @ k1.p @ t1)
    c2 = Channel(r2 @ k2.p @ t2)
    verdict = circulant_conditions(c1, c2)
    screen = {
        "screen": name,
        "verdict": UNDECIDED,
        "detail": {"necessary_holds": verdict.necessary_holds,
                   "sufficient_holds": verdict.sufficient_holds,
                   "method": verdict.method,
                   "x": verdict.x.w.tolist() if verdict.x is not None else None},
    }
    if not verdict.necessary_holds:
        screen["verdict"] = NOT_INCLUDED
    elif verdict.sufficient_holds:
        # K2 = R2^T C2 T2^T = (R2^T R1) K1 (T1 X T2^T)
        x = circulant_kernel_matrix(verdict.x).p
        screen["verdict"] = INCLUDED
        screen["certificate"] = _pair_certificate(r2.T @ r1, t1 @ x @ t2.T, k1, k2)
    return screen


def _screen_circulant(k1: Channel, k2: Channel) -> Optional[Dict[str, Any]]:
    if k1.shape != k2.shape or not (is_circulant(k1) and is_circulant(k2)):
        return None
    eye = np.eye(k1.rows)
    return _circulant_screen("circulant", k1, k2, eye, eye, eye, eye)


def _screen_symmetric(k1: Channel, k2: Channel) -> Optional[Dict[str, Any]]:
    if k1.shape != k2.shape or k1.shape not in ((3, 3), (4, 4)):
        return None
    if not (is_symmetric_dmc(k1) and is_symmetric_dmc(k2)):
        return None
    try:
        _, r1, t1 = symmetric_to_circulant(k1)
        _, r2, t2 = symmetric_to_circulant(k2)
    except NoCirculantFormError as e:
        logger.debug(f"Symmetric screen skipped: {e}")
        return None
    return _circulant_screen("symmetric_circulant", k1, k2, r1.dense(), t1.dense(), r2.dense(), t2.dense())


ANALYTIC_SCREENS = (_screen_bsc_bec, _screen_majorization, _screen_circulant, _screen_symmetric)


def cmd_check(args: argparse.Namespace, config: Config) -> int:
    k1 = load_channel(args.k1)
    k2 = load_channel(args.k2)
    report: Dict[str, Any] = {
        "verdict": UNDECIDED,
        "decided_by": None,
        "deficiency": None,
        "deficiency_label": DEFICIENCY_LABEL,
        "certificate": None,
        "screens": [],
    }
    certificate = None

    if args.method in ("auto", "analytic"):
        for screen_fn in ANALYTIC_SCREENS:
            screen = screen_fn(k1, k2)
            if screen is None:
                continue
            certificate = screen.pop("certificate", None)
            report["screens"].append(screen)
            if screen["verdict"] != UNDECIDED:
                report["verdict"] = screen["verdict"]
                report["decided_by"] = screen["screen"]
                logger.info(f"Decided by the {screen['screen']} screen: {screen['verdict']}")
                break

    if args.method == "lp" or (args.method == "auto" and report["verdict"] == UNDECIDED):
        result = decide_inclusion(
            k1, k2,
            doubly_stochastic_atoms=args.doubly_stochastic_atoms,
            tol=config.inclusion_tol,
            max_iters=args.max_iters or config.lp_max_iters,
            pool_threshold=config.lp_column_pool_threshold,
            cache_dir=config.atoms_cache_dir,
            cap=config.enumeration_cap,
        )
        report["deficiency"] = result.value
        report["verdict"] = INCLUDED if result.included else NOT_INCLUDED
        report["decided_by"] = "lp_permutation_atoms" if args.doubly_stochastic_atoms else "lp"
        certificate = result.certificate

    if k1.shape == k2.shape:
        try:
            report["equivalence"] = decide_equivalence(k1, k2, config.equiv_exhaustive_max).to_dict()
        except SizeLimitError as e:
            logger.debug(f"Equivalence note skipped: {e}")

    if certificate is not None:
        report["certificate"] = certificate_to_dict(certificate)
        if args.certificate_out:
            dump_certificate(certificate, args.certificate_out)

    _emit_json(report)
    return EXIT_OK if report["verdict"] == INCLUDED else EXIT_REFUTED


# --- random-instance ---

def cmd_random_instance(args: argparse.Namespace, config: Config) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    instance = planted_instance(tuple(args.shape), args.beta, rng, pure=args.pure)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"k1": out_dir / "K1.json", "k2": out_dir / "K2.json", "certificate": out_dir / "certificate.json"}
    dump_channel(instance.k1, paths["k1"])
    dump_channel(instance.k2, paths["k2"])
    dump_certificate(instance.certificate, paths["certificate"])
    (out_dir / "instance.json").write_text(json.dumps({
        "seed": seed,
        "shape": list(args.shape),
        "beta": args.beta,
        "pure": args.pure,
    }, indent=2) + "\n", encoding="utf-8")

    _emit_json({"seed": seed, "shape": list(args.shape), "beta": args.beta,
                "residual_inf": instance.certificate.residual_inf,
                "files": {k: str(v) for k, v in paths.items()}})
    return EXIT_OK


# --- failure-rate ---

async def _run_failure_rate(spec: ExperimentSpec, threads: int, results_db: Optional[str]):
    records = await run_experiment(spec, threads=threads)
    if results_db:
        repo = TrialRepository(results_db)
        await repo.create_tables()
        run_id = await repo.store_run(spec, records)
        if run_id is None:
            logger.warning(f"Results were not stored in {results_db}")
    return records


def cmd_failure_rate(args: argparse.Namespace, config: Config) -> int:
    spec = ExperimentSpec(
        shape=tuple(args.shape),
        beta_values=tuple(args.betas),
        trials=args.trials,
        seed=args.seed if args.seed is not None else 0,
        algorithm=args.algorithm,
        epsilon=config.omp_epsilon,
        tol_inclusion=config.inclusion_tol,
        max_actual_iters=args.max_iters,
        shuffle_atoms=args.shuffle_atoms,
        enumeration_cap=config.enumeration_cap,
        lp_max_iters=config.lp_max_iters,
        pool_threshold=config.lp_column_pool_threshold,
    )
    records = asyncio.run(_run_failure_rate(spec, config.experiment_threads, args.results_db or config.results_db_path))

    if args.trials_out:
        with open(args.trials_out, "w", newline="", encoding="utf-8") as f:
            write_trials_csv(records, f, timings=args.timings)
    summaries = summarize(records)
    if args.summary_out:
        with open(args.summary_out, "w", newline="", encoding="utf-8") as f:
            write_summary_csv(summaries, f)
    write_summary_csv(summaries, sys.stdout)

    if spec.algorithm in ("alg1", "alg2"):
        unverified = sum(1 for r in records if r.success and not r.verified)
        if unverified:
            logger.warning(f"{unverified} successful runs failed certificate verification")
    return EXIT_OK


# --- runs ---

async def _read_runs(db_path: str, run_id: Optional[int]):
    repo = TrialRepository(db_path)
    if run_id is None:
        return await repo.list_runs()
    return await repo.get_trials(run_id)


def cmd_runs(args: argparse.Namespace, config: Config) -> int:
    db_path = args.db or config.results_db_path
    if not db_path:
        _emit_json({"error": "ConfigurationError", "message": "No results database, pass --db or set RESULTS_DB_PATH"})
        return EXIT_ERROR
    if not Path(db_path).exists():
        raise FileNotFoundError(f"Results database not found: {db_path}")

    rows = asyncio.run(_read_runs(db_path, args.run_id))
    if args.run_id is None:
        _emit_json({"runs": rows})
        return EXIT_OK
    if not rows:
        logger.warning(f"Run {args.run_id} has no stored trials in {db_path}")
        return EXIT_REFUTED
    write_trials_csv(rows, sys.stdout, timings=args.timings)
    return EXIT_OK


# --- equiv ---

def cmd_equiv(args: argparse.Namespace, config: Config) -> int:
    k1 = load_channel(args.k1)
    k2 = load_channel(args.k2)
    reports = [check_assumptions(k, config.ba_max_iters, config.ba_tol) for k in (k1, k2)]
    verdict = decide_equivalence(k1, k2, config.equiv_exhaustive_max)
    conditional = not all(r.all_hold for r in reports)
    if conditional:
        logger.warning("Assumptions not all verified; a negative verdict is conditional")

    _emit_json({
        "assumptions": {"K1": reports[0].to_dict(), "K2": reports[1].to_dict()},
        "verdict": verdict.to_dict(),
        "conditional": conditional,
    })
    return EXIT_OK if verdict.equivalent else EXIT_REFUTED


# --- kron ---

def cmd_kron(args: argparse.Namespace, config: Config) -> int:
    k1 = load_channel(args.k1)
    k2 = load_channel(args.k2)
    cert = load_certificate(args.certificate)
    base_residual = certificate_residual(cert, k1, k2)
    tol = config.inclusion_tol
    if base_residual > tol:
        _emit_json({"lifted": False, "base_residual": base_residual,
                    "reason": "certificate does not verify at order 1"})
        return EXIT_REFUTED

    lifted = kron_lift_certificate(cert, args.order, k1, k2, max_entries=config.kron_max_entries)
    if args.out:
        dump_certificate(lifted, args.out)
    ok = lifted.residual_inf <= tol
    _emit_json({
        "lifted": ok,
        "order": args.order,
        "base_terms": cert.beta,
        "terms": lifted.beta,
        "base_residual": base_residual,
        "residual_inf": lifted.residual_inf,
        "weights_sum": float(lifted.weights.sum()),
    })
    return EXIT_OK if ok else EXIT_REFUTED


# --- capacity ---

def cmd_capacity(args: argparse.Namespace, config: Config) -> int:
    k = load_channel(args.k)
    capacity, distribution = blahut_arimoto_capacity(k, config.ba_max_iters, config.ba_tol)
    _emit_json({"capacity_bits": capacity, "input_distribution": distribution.w.tolist()})
    return EXIT_OK


# --- conjecture1 ---

def cmd_conjecture1(args: argparse.Namespace, config: Config) -> int:
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    result = run_conjecture1_search(
        args.trials, max_rows=args.max_rows, max_cols=args.max_cols,
        seed=args.seed if args.seed is not None else 0, out_dir=args.out_dir,
    )
    _emit_json({"trials": result.trials, "skipped": result.skipped,
                "counterexamples": len(result.counterexamples)})
    return EXIT_OK if result.found_all else EXIT_REFUTED


# --- parser ---

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--tol-inclusion', type=float, help='Deficiency threshold for declaring inclusion')
    common.add_argument('--epsilon', type=float, help='Residue tolerance for the greedy algorithms')
    common.add_argument('--max-iters', type=int, help='LP pivot limit (check) or backtracking limit (failure-rate)')
    common.add_argument('--atoms-cache', help='Directory for cached atom systems')
    common.add_argument('--seed', type=int, help='Random seed')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Decide and certify Shannon inclusion between DMCs')
    parser.add_argument('--show-config', action='store_true', help='Print the effective configuration and exit')
    parser.add_argument('--log-level', help='Override LOG_LEVEL')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    common = _common_options()
    subparsers = parser.add_subparsers(dest='command', help='Command to run')

    check = subparsers.add_parser('check', parents=[common], help='Decide whether K1 includes K2')
    check.add_argument('k1', help='Channel file (JSON or CSV) for K1')
    check.add_argument('k2', help='Channel file (JSON or CSV) for K2')
    check.add_argument('--method', choices=['auto', 'lp', 'analytic'], default='auto')
    check.add_argument('--doubly-stochastic-atoms', action='store_true',
                       help='Restrict the LP to permutation atoms')
    check.add_argument('--certificate-out', help='Write the certificate here when one is found')
    check.set_defaults(func=cmd_check)

    random_instance = subparsers.add_parser('random-instance', parents=[common],
                                            help='Write a planted inclusion instance')
    random_instance.add_argument('--shape', type=int, nargs=4, required=True, metavar=('N1', 'M1', 'N2', 'M2'))
    random_instance.add_argument('--beta', type=int, required=True)
    random_instance.add_argument('--pure', action='store_true', help='Plant pure R and T')
    random_instance.add_argument('--out-dir', required=True)
    random_instance.set_defaults(func=cmd_random_instance)

    failure_rate = subparsers.add_parser('failure-rate', parents=[common],
                                         help='Failure rate of an algorithm on planted instances')
    failure_rate.add_argument('--shape', type=int, nargs=4, required=True, metavar=('N1', 'M1', 'N2', 'M2'))
    failure_rate.add_argument('--betas', type=int, nargs='+', default=[1, 2, 3, 4, 5])
    failure_rate.add_argument('--trials', type=int, default=1000)
    failure_rate.add_argument('--algorithm', choices=ALGORITHMS, default='alg1')
    failure_rate.add_argument('--trials-out', help='Per-trial CSV')
    failure_rate.add_argument('--summary-out', help='Per-beta summary CSV (also printed)')
    failure_rate.add_argument('--timings', action='store_true', help='Add wall_time to the per-trial CSV')
    failure_rate.add_argument('--results-db', help='Also store the run in this SQLite database')
    failure_rate.add_argument('--threads', type=int, help='Worker threads')
    failure_rate.add_argument('--shuffle-atoms', type=int, metavar='SEED', help='Shuffle atom order with this seed')
    failure_rate.set_defaults(func=cmd_failure_rate)

    runs = subparsers.add_parser('runs', help='List stored failure-rate runs or print one as CSV')
    runs.add_argument('--db', help='SQLite database (default RESULTS_DB_PATH)')
    runs.add_argument('--run-id', type=int, help='Print the trials of this run as CSV')
    runs.add_argument('--timings', action='store_true', help='Add wall_time to the CSV')
    runs.set_defaults(func=cmd_runs)

    equiv = subparsers.add_parser('equiv', parents=[common], help='Decide equivalence of K1 and K2')
    equiv.add_argument('k1')
    equiv.add_argument('k2')
    equiv.set_defaults(func=cmd_equiv)

    kron = subparsers.add_parser('kron', parents=[common], help='Lift a certificate to a Kronecker power')
    kron.add_argument('k1')
    kron.add_argument('k2')
    kron.add_argument('order', type=int)
    kron.add_argument('certificate')
    kron.add_argument('--out', help='Write the lifted certificate here')
    kron.set_defaults(func=cmd_kron)

    capacity = subparsers.add_parser('capacity', parents=[common], help='Blahut-Arimoto capacity')
    capacity.add_argument('k')
    capacity.set_defaults(func=cmd_capacity)

    conjecture = subparsers.add_parser('conjecture1', parents=[common],
                                       help='Search random matrices for non-negative projection counterexamples')
    conjecture.add_argument('--trials', type=int, default=10000)
    conjecture.add_argument('--max-rows', type=int, default=8)
    conjecture.add_argument('--max-cols', type=int, default=5)
    conjecture.add_argument('--out-dir', help='Directory for counterexample dumps')
    conjecture.set_defaults(func=cmd_conjecture1)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    config = Config()
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    _apply_overrides(config, args)

    if args.show_config:
        _emit_json(config.to_dict())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_ERROR
    if not config.validate():
        _emit_json({"error": "ConfigurationError", "message": "Invalid configuration, see log"})
        return EXIT_ERROR

    try:
        return args.func(args, config)
    except NoConvergenceError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        _emit_json({"error": type(e).__name__, "message": str(e),
                    "iterations": e.iterations,
                    "gap": None if math.isnan(e.gap) else e.gap})
        return EXIT_ERROR
    except (ChannelInclusionError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        _emit_json({"error": type(e).__name__, "message": str(e)})
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
