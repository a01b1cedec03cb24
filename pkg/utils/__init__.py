"""
Utility functions for the curvature-decay toolkit

Exception bases, config validation and audit trail, exact integer algebra,
and result writers.
"""

from .validation import (
    AuditLogger,
    NotConvergedError,
    PreconditionError,
    ValidationError,
    validate_experiment_config,
)
from .smith_normal_form import AbelianGroup, smith_normal_form
from .reporting import build_envelope, config_hash, save_json_file, save_sweep_csv

__all__ = [
    'AuditLogger',
    'NotConvergedError',
    'PreconditionError',
    'ValidationError',
    'validate_experiment_config',
    'AbelianGroup',
    'smith_normal_form',
    'build_envelope',
    'config_hash',
    'save_json_file',
    'save_sweep_csv',
]
