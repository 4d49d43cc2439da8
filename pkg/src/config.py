import os
import logging
from pathlib import Path
from typing import Dict, Any, Optional
from dotenv import load_dotenv

# Setup logging
def configure_logging(level: Optional[str] = None):
    """Configure logging for the application"""
    log_level = (level or os.environ.get('LOG_LEVEL', 'INFO')).upper()
    log_format = '[%(asctime)s] [%(levelname)s] %(name)s: %(message)s'

    # stdout carries JSON/CSV results, so logs go to stderr
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format=log_format,
        handlers=[
            logging.StreamHandler(),
        ]
    )

    logger = logging.getLogger('chaninc')
    logger.debug(f"Logging configured with level: {log_level}")
    return logger


def _env_float(name: str, default: str) -> float:
    return float(os.environ.get(name, default))


def _env_int(name: str, default: str) -> int:
    return int(float(os.environ.get(name, default)))


class Config:
    """Configuration class for the application"""

    def __init__(self, setup_logging: bool = True):
        # Load environment variables from .env file
        load_dotenv()

        if setup_logging:
            self.logger = configure_logging()
        else:
            self.logger = logging.getLogger('chaninc')

        self.log_level = os.environ.get('LOG_LEVEL', 'INFO').upper()

        # Decision thresholds
        self.inclusion_tol = _env_float('INCLUSION_TOL', '1e-7')
        self.omp_epsilon = _env_float('OMP_EPSILON', '1e-8')

        # Atom enumeration and LP
        self.enumeration_cap = _env_int('ENUMERATION_CAP', '1000000')
        self.lp_column_pool_threshold = _env_int('LP_COLUMN_POOL_THRESHOLD', '50000')
        self.lp_max_iters = _env_int('LP_MAX_ITERS', '200000')

        # Blahut-Arimoto
        self.ba_max_iters = _env_int('BA_MAX_ITERS', '20000')
        self.ba_tol = _env_float('BA_TOL', '1e-9')

        # Equivalence exhaustive search limit (alphabet size)
        self.equiv_exhaustive_max = _env_int('EQUIV_EXHAUSTIVE_MAX', '8')

        # Experiment harness
        self.experiment_threads = _env_int('EXPERIMENT_THREADS', '1')
        self.atoms_cache_dir = os.environ.get('ATOMS_CACHE_DIR') or None
        self.results_db_path = os.environ.get('RESULTS_DB_PATH') or None

        # Kronecker lifting
        self.kron_max_entries = _env_int('KRON_MAX_ENTRIES', '10000000')

        self.validate()

    def validate(self) -> bool:
        """Validate the configuration"""
        errors = []

        for name in ('inclusion_tol', 'omp_epsilon', 'ba_tol'):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")

        for name in ('enumeration_cap', 'lp_column_pool_threshold', 'lp_max_iters',
                     'ba_max_iters', 'equiv_exhaustive_max', 'experiment_threads',
                     'kron_max_entries'):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be at least 1, got {getattr(self, name)}")

        if self.atoms_cache_dir and not Path(self.atoms_cache_dir).is_dir():
            errors.append(f"Atom cache directory does not exist: {self.atoms_cache_dir}")

        if self.results_db_path and not Path(self.results_db_path).parent.exists():
            errors.append(f"Results database directory does not exist: {Path(self.results_db_path).parent}")

        if errors:
            for error in errors:
                self.logger.error(f"Configuration error: {error}")
            return False

        self.logger.debug("Configuration validation passed")
        return True

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        return {
            "log_level": self.log_level,
            "inclusion_tol": self.inclusion_tol,
            "omp_epsilon": self.omp_epsilon,
            "enumeration_cap": self.enumeration_cap,
            "lp_column_pool_threshold": self.lp_column_pool_threshold,
            "lp_max_iters": self.lp_max_iters,
            "ba_max_iters": self.ba_max_iters,
            "ba_tol": self.ba_tol,
            "equiv_exhaustive_max": self.equiv_exhaustive_max,
            "experiment_threads": self.experiment_threads,
            "atoms_cache_dir": self.atoms_cache_dir,
            "results_db_path": self.results_db_path,
            "kron_max_entries": self.kron_max_entries,
        }

    def __str__(self) -> str:
        config_dict = self.to_dict()
        return "\n".join([f"{k}: {v}" for k, v in config_dict.items()])
