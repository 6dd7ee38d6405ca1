"""
Run Settings

Configuration for linking runs. Values are resolved with the precedence
command-line flags > config file (dotenv format) > NASTY_* environment
variables > built-in defaults.
"""

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Mapping, Optional

from dotenv import dotenv_values

from baselines import BottomUpConfig, MajorityConfig
from evaluation import MODES
from knn_index import BACKENDS, DEFAULT_K, IndexConfig
from linking_model import ConfigurationError, Thresholds

logger = logging.getLogger(__name__)

ALGORITHMS = ("nasty", "majority", "bottomup", "exactmatch", "topentity")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
DEFAULT_CONFIG_FILE = ".env"

# Thresholds each algorithm uses, with their defaults
ALGORITHM_DEFAULTS: Dict[str, Dict[str, float]] = {
    "nasty": {"tau_m": 0.85, "tau_e": 0.9, "tau_a": 0.75},
    "majority": {"tau_m": 0.85, "tau_e": 0.8, "majority_threshold": 0.7},
    "bottomup": {"tau": 0.85},
    "topentity": {"tau_e": 0.9},
    "exactmatch": {},
}

ENV_KEYS = {
    "algorithm": "NASTY_ALGORITHM",
    "tau_m": "NASTY_TAU_M",
    "tau_e": "NASTY_TAU_E",
    "tau_a": "NASTY_TAU_A",
    "tau": "NASTY_TAU",
    "majority_threshold": "NASTY_MAJORITY_THRESHOLD",
    "k": "NASTY_K",
    "mode": "NASTY_MODE",
    "seed": "NASTY_SEED",
    "workers": "NASTY_WORKERS",
    "backend": "NASTY_BACKEND",
    "log_level": "NASTY_LOG_LEVEL",
}


@dataclass(frozen=True)
class RunConfig:
    """Settings of one linking run; thresholds left as None take the algorithm defaults."""
    algorithm: str = "nasty"
    tau_m: Optional[float] = None
    tau_e: Optional[float] = None
    tau_a: Optional[float] = None
    tau: Optional[float] = None
    majority_threshold: Optional[float] = None
    k: int = DEFAULT_K
    mode: str = "full-gold"
    seed: int = 0
    workers: int = 1
    backend: str = "exact"
    log_level: str = "INFO"
    mentions_path: Optional[str] = None
    entities_path: Optional[str] = None
    edges_path: Optional[str] = None
    output_path: Optional[str] = None
    report_path: Optional[str] = None
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"Unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.mode not in MODES:
            raise ConfigurationError(f"Unknown evaluation mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigurationError(f"Unknown log level {self.log_level!r}")
        object.__setattr__(self, "log_level", self.log_level.upper())
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")

        for name, default in ALGORITHM_DEFAULTS[self.algorithm].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)

        # Building the parameter objects validates every setting the run uses
        self.index_config()
        if self.algorithm == "nasty":
            self.thresholds()
        elif self.algorithm == "majority":
            self.majority_config()
        elif self.algorithm == "bottomup":
            self.bottom_up_config()
        elif self.algorithm == "topentity" and not 0.0 <= self.tau_e <= 1.0:
            raise ConfigurationError(f"tau_e must lie in [0, 1], got {self.tau_e!r}")

    def thresholds(self) -> Thresholds:
        return Thresholds(tau_m=self.tau_m, tau_e=self.tau_e, tau_a=self.tau_a)

    def majority_config(self) -> MajorityConfig:
        return MajorityConfig(tau_m=self.tau_m, tau_e=self.tau_e, majority_threshold=self.majority_threshold)

    def bottom_up_config(self) -> BottomUpConfig:
        return BottomUpConfig(tau=self.tau)

    def index_config(self) -> IndexConfig:
        return IndexConfig(k=self.k, backend=self.backend, workers=self.workers)

    @property
    def needs_graph(self) -> bool:
        return self.algorithm != "exactmatch"

    def linker_params(self) -> Dict[str, float]:
        """The thresholds the chosen algorithm actually uses."""
        return {name: getattr(self, name) for name in ALGORITHM_DEFAULTS[self.algorithm]}

    def with_overrides(self, **changes) -> "RunConfig":
        """
        Copy with some fields replaced, validated again.

        Switching the algorithm resets thresholds not given in changes to the
        new algorithm's defaults.
        """
        if changes.get("algorithm", self.algorithm) != self.algorithm:
            for name in _FLOAT_FIELDS:
                changes.setdefault(name, None)
        return replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_FLOAT_FIELDS = {"tau_m", "tau_e", "tau_a", "tau", "majority_threshold"}
_INT_FIELDS = {"k", "seed", "workers"}


def _coerce(name: str, value):
    if value is None or (isinstance(value, str) and value.strip() == ""):
        return None
    try:
        if name in _FLOAT_FIELDS:
            return float(value)
        if name in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Invalid value {value!r} for {name}") from e
    return str(value) if isinstance(value, str) else value


def _from_mapping(source: Mapping[str, Optional[str]]) -> Dict[str, object]:
    values = {}
    for name, key in ENV_KEYS.items():
        value = _coerce(name, source.get(key))
        if value is not None:
            values[name] = value
    return values


def load_run_config(overrides: Optional[Mapping[str, object]] = None,
                    config_file: Optional[str] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Resolve a RunConfig from all configuration sources.

    Args:
        overrides: Values given on the command line; None entries are ignored
        config_file: dotenv-format file; defaults to ./.env when that exists
        environ: Environment to read NASTY_* variables from (default os.environ)

    Returns:
        Validated RunConfig
    """
    values = _from_mapping(os.environ if environ is None else environ)

    if config_file is not None:
        if not Path(config_file).is_file():
            raise ConfigurationError(f"Config file not found: {config_file}")
        path = Path(config_file)
    else:
        path = Path(DEFAULT_CONFIG_FILE)
    if path.is_file():
        logger.debug(f"Reading configuration from {path}")
        values.update(_from_mapping(dotenv_values(path)))

    for name, value in (overrides or {}).items():
        if name not in _FIELD_TYPES:
            raise ConfigurationError(f"Unknown setting {name!r}")
        value = _coerce(name, value)
        if value is not None:
            values[name] = value

    return RunConfig(**values)
