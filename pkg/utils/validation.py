"""
Validation Utilities for the curvature-decay toolkit

Provides the shared exception bases, experiment-config schema checks and the
audit trail used by the CLI to record every stage of an experiment.
"""

import json
import numpy as np
from typing import Dict, Any, List, Optional
from datetime import datetime


class ValidationError(Exception):
    """Raised when a config or input file fails schema validation."""
    pass


class PreconditionError(ValueError):
    """Raised when an operation's documented precondition does not hold."""
    pass


class NotConvergedError(RuntimeError):
    """Raised when a numerical ladder fails to stabilise."""
    pass


class AuditLogger:
    """Logger for tracking the stages of an experiment pipeline."""

    def __init__(self, experiment_id: str, config_hash: Optional[str] = None,
                 record_time: bool = False):
        self.experiment_id = experiment_id
        self.config_hash = config_hash
        self.record_time = record_time
        self.start_time = datetime.now()
        self.transformations = []

    def log_transformation(self,
                           stage: str,
                           input_data: Dict[str, Any],
                           output_data: Dict[str, Any],
                           parameters: Optional[Dict[str, Any]] = None,
                           metadata: Optional[Dict[str, Any]] = None) -> None:
        """
        Log a stage of the experiment pipeline.

        Args:
            stage: Name of the stage (e.g. 'fk_sequence', 'theta', 'build_cover')
            input_data: Input summary for the stage
            output_data: Output summary of the stage
            parameters: Parameters used by the stage
            metadata: Additional metadata (verdicts, measured constants, ...)
        """
        transformation = {
            'stage': stage,
            'experiment_id': self.experiment_id,
            'config_hash': self.config_hash,
            'input_data': _serialize_data(input_data),
            'output_data': _serialize_data(output_data),
            'parameters': _serialize_data(parameters or {}),
            'metadata': _serialize_data(metadata or {})
        }
        # wall-clock stamps break byte-identical reruns, so they are opt-in
        if self.record_time:
            transformation['timestamp'] = datetime.now().isoformat()

        self.transformations.append(transformation)

    def get_audit_trail(self) -> Dict[str, Any]:
        """
        Get the complete audit trail for the experiment.

        Returns:
            Dictionary containing full audit trail
        """
        trail = {
            'experiment_id': self.experiment_id,
            'config_hash': self.config_hash,
            'transformation_count': len(self.transformations),
            'transformations': self.transformations
        }
        if self.record_time:
            trail['start_time'] = self.start_time.isoformat()
            trail['duration_seconds'] = (datetime.now() - self.start_time).total_seconds()
        return trail

    def save_audit_trail(self, filepath: str) -> None:
        """
        Save audit trail to file.

        Args:
            filepath: Path to save the audit trail
        """
        audit_trail = self.get_audit_trail()
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(audit_trail, f, indent=2, sort_keys=True)


def _serialize_data(data: Any) -> Any:
    """
    Serialize data for JSON storage (numpy arrays, complex numbers, inf).

    Args:
        data: Data to serialize

    Returns:
        Serializable version of the data
    """
    if isinstance(data, np.ndarray):
        if np.iscomplexobj(data):
            return {
                'type': 'numpy.ndarray',
                'shape': list(data.shape),
                'dtype': str(data.dtype),
                'real': data.real.tolist(),
                'imag': data.imag.tolist()
            }
        return {
            'type': 'numpy.ndarray',
            'shape': list(data.shape),
            'dtype': str(data.dtype),
            'data': data.tolist()
        }
    elif isinstance(data, (np.integer,)):
        return int(data)
    elif isinstance(data, (np.floating, float)):
        value = float(data)
        if np.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    elif isinstance(data, (complex, np.complexfloating)):
        return {'real': float(data.real), 'imag': float(data.imag)}
    elif isinstance(data, (np.bool_,)):
        return bool(data)
    elif isinstance(data, dict):
        return {str(key): _serialize_data(value) for key, value in data.items()}
    elif isinstance(data, (list, tuple)):
        return [_serialize_data(item) for item in data]
    else:
        return data


def _deserialize_data(data: Any) -> Any:
    """
    Deserialize data from JSON storage format.

    Args:
        data: Serialized data

    Returns:
        Original data format
    """
    if isinstance(data, dict) and data.get('type') == 'numpy.ndarray':
        if 'real' in data:
            return np.array(data['real']) + 1j * np.array(data['imag'])
        return np.array(data['data'], dtype=data['dtype'])
    elif isinstance(data, dict):
        return {key: _deserialize_data(value) for key, value in data.items()}
    elif isinstance(data, list):
        return [_deserialize_data(item) for item in data]
    elif data in ('inf', '-inf'):
        return float(data)
    else:
        return data


# Required top-level fields per CLI subcommand and their accepted types.
EXPERIMENT_SCHEMAS: Dict[str, Dict[str, tuple]] = {
    'decay': {
        'm': (int,),
        'R': (dict,),
        'D': (dict,),
        'pairing_constants': (dict,),
        'sweep': (dict,),
    },
    'pairing': {
        'lattice': (dict,),
        't_schedule': (list,),
        'contour_nodes': (int,),
        'projection': (dict,),
    },
    'warped': {
        'profile': (str,),
        'cover_radius': (int, float),
        'net_epsilon': (int, float),
        'horizon': (int, float),
    },
    'nerve': {
        'sample': (dict,),
        'cover': (dict,),
        'r': (int, float),
    },
    'homotopy': {
        'matrix_size': (int,),
        'instances': (int,),
        'loops': (int,),
    },
    'fivelemma': {
        'controls': (dict,),
        'pairs': (dict,),
        'random_systems': (int,),
    },
}

# Optional fields per subcommand; anything else draws a warning.
OPTIONAL_FIELDS: Dict[str, tuple] = {
    'decay': (),
    'pairing': (),
    'warped': ('G', 'n_bumps', 'net_C', 'net_horizon', 'dt', 'n_sphere', 'sweep_points'),
    'nerve': ('mesh',),
    'homotopy': ('chain_step', 'square_K'),
    'fivelemma': ('sample_levels',),
}


def validate_experiment_config(command: str, config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate an experiment configuration against the subcommand schema.

    Args:
        command: CLI subcommand name
        config: Parsed configuration mapping

    Returns:
        Dictionary with 'is_valid', 'error_messages' and 'warnings'
    """
    validation_result = {
        'is_valid': True,
        'error_messages': [],
        'warnings': []
    }

    if command not in EXPERIMENT_SCHEMAS:
        validation_result['is_valid'] = False
        validation_result['error_messages'].append(f"Unknown experiment '{command}'")
        return validation_result

    if not isinstance(config, dict):
        validation_result['is_valid'] = False
        validation_result['error_messages'].append("Config root must be a mapping")
        return validation_result

    schema = EXPERIMENT_SCHEMAS[command]
    for field, types in schema.items():
        if field not in config:
            validation_result['error_messages'].append(f"Missing field '{field}'")
            validation_result['is_valid'] = False
        elif isinstance(config[field], bool) or not isinstance(config[field], types):
            expected = '/'.join(t.__name__ for t in types)
            validation_result['error_messages'].append(
                f"Field '{field}' must be {expected}, got {type(config[field]).__name__}")
            validation_result['is_valid'] = False

    for field in config:
        if (field not in schema and field not in OPTIONAL_FIELDS[command]
                and field not in ('seed', 'experiment_id', 'threads')):
            validation_result['warnings'].append(f"Unrecognised field '{field}' ignored")

    seed = config.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        validation_result['error_messages'].append("Field 'seed' must be a non-negative integer")
        validation_result['is_valid'] = False

    return validation_result


def check_measured_bound(name: str, measured: float, bound: float,
                         slack: float = 0.0) -> Dict[str, Any]:
    """
    Build a measured-versus-declared record for a constant check.

    Args:
        name: Name of the constant being checked
        measured: Measured value (a lower bound of the true constant)
        bound: Declared bound
        slack: Additive slack permitted on top of the bound

    Returns:
        Dictionary {name, measured, bound, slack, verdict}
    """
    return {
        'name': name,
        'measured': float(measured),
        'bound': float(bound),
        'slack': float(slack),
        'verdict': 'PASS' if measured <= bound + slack else 'FAIL'
    }


def summarize_checks(checks: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Aggregate a list of check records into a report."""
    failed = [c['name'] for c in checks if c.get('verdict') != 'PASS']
    return {
        'total': len(checks),
        'passed': len(checks) - len(failed),
        'failed': failed,
        'verdict': 'PASS' if not failed else 'FAIL',
        'checks': checks
    }
