"""
Reporting Utilities for the curvature-decay toolkit

Result writers used by the CLI: JSON documents that carry the config hash,
module versions and audit trail, and CSV sweeps written through pandas.
Output is deterministic so a fixed config and seed reproduce the same bytes.
"""

import hashlib
import json
import logging
import math
import os
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from .validation import _serialize_data

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'


class ReportingError(Exception):
    """Raised when a result file cannot be written."""


def convert_numpy_types(obj: Any) -> Any:
    """Convert numpy scalars, arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, float) or isinstance(obj, np.floating):
        value = float(obj)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(obj, np.ndarray) and not np.iscomplexobj(obj):
        return convert_numpy_types(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): convert_numpy_types(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [convert_numpy_types(v) for v in obj]
    if hasattr(obj, 'to_dict') and not isinstance(obj, pd.DataFrame):
        return convert_numpy_types(obj.to_dict())
    if isinstance(obj, pd.DataFrame):
        return convert_numpy_types(obj.to_dict(orient='list'))
    serialized = _serialize_data(obj)
    if serialized is not obj:
        return convert_numpy_types(serialized) if isinstance(serialized, (dict, list)) else serialized
    return obj


def canonical_json(data: Any) -> str:
    """Canonical text of a JSON-compatible value (sorted keys, no whitespace)."""
    return json.dumps(convert_numpy_types(data), sort_keys=True, separators=(',', ':'),
                      ensure_ascii=False)


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical config text."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def module_versions() -> Dict[str, str]:
    """Versions of the toolkit and of the numeric stack it ran on."""
    import scipy
    import yaml

    from modules import __version__ as toolkit_version

    return {
        'curvdecay': toolkit_version,
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'pyyaml': getattr(yaml, '__version__', 'unknown'),
    }


def build_envelope(command: str, config: Dict[str, Any], payload: Dict[str, Any],
                   audit: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Wrap a result payload with the metadata every result file carries.

    Args:
        command: CLI subcommand that produced the result
        config: Effective configuration (hashed, and embedded verbatim)
        payload: Result body
        audit: Audit trail from AuditLogger.get_audit_trail()

    Returns:
        Dictionary {command, config_hash, versions, config, result, audit}
    """
    return {
        'command': command,
        'config_hash': config_hash(config),
        'versions': module_versions(),
        'config': config,
        'result': payload,
        'audit': audit or {},
    }


def save_json_file(data: Dict[str, Any], file_path: str) -> str:
    """
    Save data to a JSON file with sorted keys.

    Returns:
        The path written

    Raises:
        ReportingError: If the file cannot be written
    """
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        json_data = convert_numpy_types(data)
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(json_data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
    except (OSError, TypeError, ValueError) as e:
        raise ReportingError(f"Error saving results to {file_path}: {e}")
    logger.info("Results saved to: %s", file_path)
    return file_path


def save_sweep_csv(frame: pd.DataFrame, file_path: str,
                   columns: Optional[Sequence[str]] = None) -> str:
    """
    Write a sweep table as CSV.

    Args:
        frame: Sweep rows
        file_path: Destination
        columns: Column order (defaults to the frame's order)

    Returns:
        The path written
    """
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    table = frame if columns is None else frame.loc[:, list(columns)]
    try:
        table.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    except OSError as e:
        raise ReportingError(f"Error saving sweep to {file_path}: {e}")
    logger.info("Sweep saved to: %s (%d rows)", file_path, len(table))
    return file_path


def load_json_file(file_path: str) -> Dict[str, Any]:
    """Load a JSON result file."""
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)
