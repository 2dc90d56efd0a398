"""
Configuration loading for md_shaping.

Defaults live in ``DEFAULT_CONFIG``; a ``config.yaml`` in the working
directory (or an explicit path) overrides them section by section.
"""

import copy
import logging
import os
from pathlib import Path

import yaml

logger = logging.getLogger(__name__)

# Get the directory where the script is run from
BASE_DIR = Path.cwd()

PACKAGE_DIR = Path(__file__).resolve().parent
DATA_DIR = PACKAGE_DIR / "data"
SHIPPED_CORPUS_DIR = DATA_DIR / "corpus"
LINK_PRESET_DIR = DATA_DIR / "links"

CORPUS_ENV_VAR = "MD_SHAPING_CORPUS"

DEFAULT_CONFIG = {
    "estimator": {
        "samples_per_point": 4096,
        "seed": 20240601,
        "antithetic": True,
        "n_jobs": 1,
        "block_elements": 1 << 22,
        "factorize": True,
    },
    "solver": {
        "bracket_db": [-10.0, 30.0],
        "tolerance_db": 0.02,
        "normalized_rate": 0.8,
        "max_iterations": 64,
    },
    "nli": {
        "model": "gn-kurtosis",
        "base_nodes": 8,
        "max_refinements": 4,
        "rel_tol": 1e-3,
        "cross_nodes": 48,
        "cross_periods": 6,
        "n_jobs": 1,
        "grading_hz": 2e7,
        "tile_size": 512,
        "per_channel_optimum": False,
        "coherent_accumulation": True,
    },
    # Asymptotic shaping gains (dB) per shaping lattice. Placeholders; set
    # them from the lattice tables you rely on.
    "shaping_gains": {},
    "processing": {"max_workers": 4, "batch_threshold": 3},
    # SE group (bit/4D) -> link whose SNR_eff goes into the summary table
    "report": {"link_by_se": {6: "multispan_60x80", 10: "singlespan_205"}},
    "output": {
        "results_dir": "results",
        "cache_dir": None,
        "float_format": "%.6f",
    },
    "logging": {
        "level": "WARNING",
        "format": "%(asctime)s %(name)s %(levelname)s: %(message)s",
    },
}


def _merge(defaults, overrides):
    merged = copy.deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path=None):
    """Load configuration from YAML file."""
    if config_path is None:
        config_path = BASE_DIR / "config.yaml"

    if Path(config_path).exists():
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                user_config = yaml.safe_load(f) or {}
            if not isinstance(user_config, dict):
                raise ValueError("top level must be a mapping")
            return _merge(DEFAULT_CONFIG, user_config)
        except Exception as e:
            logger.warning("Could not load config file %s: %s", config_path, e)
            logger.warning("Using default configuration")

    return copy.deepcopy(DEFAULT_CONFIG)


def corpus_root():
    """Directory holding constellation and lattice files."""
    env = os.environ.get(CORPUS_ENV_VAR)
    if env:
        return Path(env)
    return SHIPPED_CORPUS_DIR
