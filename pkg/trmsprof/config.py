"""
Configuration: config.json loading and the typed Config the pipeline runs on
"""

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from trmsprof.errors import ConfigError
from trmsprof.shadow_memory import DEFAULT_CHUNK_SIZE, DEFAULT_PRIMARY_SIZE, DEFAULT_SECONDARY_SIZE

log = logging.getLogger(__name__)

OUTPUT_FORMATS = ('csv', 'json', 'excel', 'parquet')
FIT_MODELS = ('constant', 'linear', 'nlogn', 'power')

# config.json section each Config field is read from
SECTIONS = {
    'profiler': ('counter_width', 'renumber_margin', 'granularity'),
    'shadow': ('primary_size', 'secondary_size', 'chunk_size'),
    'checks': ('debug_invariants', 'oracle_check'),
    'parse': ('workers',),
    'report': ('format', 'merge_threads', 'output_dir', 'fit_models'),
}


@dataclass(frozen=True)
class Config:
    counter_width: int = 32
    renumber_margin: int = 4
    granularity: int = 1
    primary_size: int = DEFAULT_PRIMARY_SIZE
    secondary_size: int = DEFAULT_SECONDARY_SIZE
    chunk_size: int = DEFAULT_CHUNK_SIZE
    debug_invariants: bool = False
    oracle_check: bool = False
    workers: int = 1
    format: str = 'csv'
    merge_threads: bool = True
    output_dir: str = 'reports'
    fit_models: tuple = FIT_MODELS

    def __post_init__(self):
        if not 8 <= self.counter_width <= 64:
            raise ConfigError(f"counter_width must be in [8, 64], got {self.counter_width}")
        if self.granularity < 1:
            raise ConfigError(f"granularity must be >= 1, got {self.granularity}")
        # each increment is preceded by an overflow check
        if self.renumber_margin < 1:
            raise ConfigError(f"renumber_margin must be >= 1, got {self.renumber_margin}")
        if self.renumber_margin >= 1 << (self.counter_width - 1):
            raise ConfigError(
                f"renumber_margin must be below 2^{self.counter_width - 1} for a "
                f"{self.counter_width}-bit counter, got {self.renumber_margin}"
            )
        for name in ('primary_size', 'secondary_size', 'chunk_size'):
            size = getattr(self, name)
            if size < 1 or size & (size - 1):
                raise ConfigError(f"{name} must be a power of two, got {size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.format not in OUTPUT_FORMATS:
            raise ConfigError(f"format must be one of {', '.join(OUTPUT_FORMATS)}, got {self.format!r}")
        unknown = [m for m in self.fit_models if m not in FIT_MODELS]
        if unknown or not self.fit_models:
            raise ConfigError(f"fit_models must be a non-empty subset of {', '.join(FIT_MODELS)}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Config":
        """
        Build a Config from the sectioned config.json layout

        Unknown sections are ignored; unknown keys inside a known section
        are rejected.
        """
        values = {}
        for section, names in SECTIONS.items():
            entries = data.get(section) or {}
            if not isinstance(entries, dict):
                raise ConfigError(f"section '{section}' must be an object")
            extra = set(entries) - set(names)
            if extra:
                raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(extra))}")
            values.update(entries)
        if 'fit_models' in values:
            values['fit_models'] = tuple(values['fit_models'])
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        def plain(value):
            return list(value) if isinstance(value, tuple) else value

        return {
            section: {name: plain(getattr(self, name)) for name in names}
            for section, names in SECTIONS.items()
        }

    def override(self, **changes) -> "Config":
        """Copy with the non-None entries of `changes` applied (CLI flags)"""
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in changes.items() if v is not None and k in known})


def load_config(config_path: Union[str, Path, None] = "config.json") -> Config:
    """
    Load configuration from JSON file

    Args:
        config_path: Path to configuration file; a missing default file
            falls back to built-in defaults

    Returns:
        Validated Config

    Raises:
        ConfigError: unreadable JSON or invalid values
    """
    if config_path is None:
        return Config()
    path = Path(config_path)
    if not path.exists():
        log.info(f"No configuration at {path}, using defaults")
        return Config()

    log.info(f"Loading configuration from {path}...")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e

    config = Config.from_dict(data)
    log.info("✓ Configuration loaded")
    log.info(f"Counter width: {config.counter_width} bits, renumber margin: {config.renumber_margin}")
    log.info(f"Granularity: {config.granularity}, output format: {config.format}")
    return config


def log_level(default: str = 'INFO') -> str:
    """Log level from the TRMS_LOG_LEVEL environment variable"""
    return os.getenv('TRMS_LOG_LEVEL', default).upper()
