"""Configuration, file formats and the command-line surface."""

from .config import (
    InvariantViolation,
    ParseError,
    RunConfig,
    UnknownKey,
    load_config,
    load_config_text,
    manifest_text,
    serialize_config,
)
from .logs import (
    NonMonotoneTime,
    SchemaError,
    UnitSanity,
    ingest_external_log,
    read_curves_csv,
    read_trial_csv,
    write_crossovers_csv,
    write_curves_csv,
    write_external_log,
    write_trial_csv,
)

__all__ = [
    "InvariantViolation",
    "ParseError",
    "RunConfig",
    "UnknownKey",
    "load_config",
    "load_config_text",
    "manifest_text",
    "serialize_config",
    "NonMonotoneTime",
    "SchemaError",
    "UnitSanity",
    "ingest_external_log",
    "read_curves_csv",
    "read_trial_csv",
    "write_crossovers_csv",
    "write_curves_csv",
    "write_external_log",
    "write_trial_csv",
]
