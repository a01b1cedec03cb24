"""
Unit Tests for the Validation Utilities

Tests experiment-config schema checks, the audit trail, serialization of
numeric payloads and measured-bound records.
"""

import json
import os
import sys

import numpy as np
import pytest
import yaml

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from utils.validation import (
    AuditLogger, EXPERIMENT_SCHEMAS, NotConvergedError, PreconditionError, ValidationError,
    _deserialize_data, _serialize_data, check_measured_bound, summarize_checks,
    validate_experiment_config,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', '..', 'config')


class TestExperimentConfig:
    """Schema checks per subcommand."""

    @pytest.mark.parametrize("command", sorted(EXPERIMENT_SCHEMAS))
    def test_shipped_configs_are_valid(self, command):
        with open(os.path.join(CONFIG_DIR, f'{command}.yaml'), 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)
        result = validate_experiment_config(command, config)
        assert result['is_valid'], result['error_messages']
        assert result['warnings'] == []

    def test_missing_and_mistyped_fields(self):
        result = validate_experiment_config('nerve', {'sample': {}, 'cover': [], 'seed': 1})
        assert not result['is_valid']
        assert "Missing field 'r'" in result['error_messages']
        assert any("'cover' must be dict" in m for m in result['error_messages'])

    def test_booleans_are_not_numbers(self):
        config = {'sample': {}, 'cover': {}, 'r': True}
        assert not validate_experiment_config('nerve', config)['is_valid']

    def test_unknown_fields_warn(self):
        config = {'sample': {}, 'cover': {}, 'r': 1.0, 'colour': 'blue'}
        result = validate_experiment_config('nerve', config)
        assert result['is_valid']
        assert result['warnings'] == ["Unrecognised field 'colour' ignored"]

    @pytest.mark.parametrize("seed", [-1, 1.5, 'zero', False])
    def test_invalid_seed(self, seed):
        config = {'sample': {}, 'cover': {}, 'r': 1.0, 'seed': seed}
        assert not validate_experiment_config('nerve', config)['is_valid']

    def test_unknown_command_and_non_mapping(self):
        assert not validate_experiment_config('topsis', {})['is_valid']
        assert not validate_experiment_config('decay', ['m', 3])['is_valid']


class TestAuditLogger:
    """Pipeline audit trail."""

    def test_trail_without_timestamps(self, tmp_path):
        audit = AuditLogger('exp', config_hash='abc')
        audit.log_transformation('theta', {'M': 64}, {'defect': np.float64(1e-12)}, {'t': 1.0})
        trail = audit.get_audit_trail()
        assert trail['transformation_count'] == 1
        assert 'start_time' not in trail
        assert 'timestamp' not in trail['transformations'][0]
        path = tmp_path / 'audit.json'
        audit.save_audit_trail(str(path))
        assert json.loads(path.read_text())['transformations'][0]['stage'] == 'theta'

    def test_timestamps_are_opt_in(self):
        audit = AuditLogger('exp', record_time=True)
        audit.log_transformation('stage', {}, {})
        trail = audit.get_audit_trail()
        assert 'timestamp' in trail['transformations'][0]
        assert trail['duration_seconds'] >= 0.0


class TestSerialization:
    """JSON-safe forms of arrays and non-finite numbers."""

    def test_complex_array_round_trip(self):
        arr = np.array([[1 + 2j, 0], [0, -1j]])
        again = _deserialize_data(json.loads(json.dumps(_serialize_data(arr))))
        np.testing.assert_allclose(again, arr)

    def test_real_array_keeps_dtype(self):
        arr = np.arange(4, dtype=np.int32)
        again = _deserialize_data(_serialize_data(arr))
        assert again.dtype == np.int32

    def test_infinities(self):
        data = {'up': float('inf'), 'down': -np.inf, 'n': np.int64(3), 'flag': np.bool_(True)}
        serialized = _serialize_data(data)
        assert serialized == {'up': 'inf', 'down': '-inf', 'n': 3, 'flag': True}
        assert _deserialize_data(serialized)['down'] == float('-inf')

    def test_complex_scalar(self):
        assert _serialize_data(1 - 2j) == {'real': 1.0, 'imag': -2.0}


class TestMeasuredBounds:
    """Check records and their summary."""

    def test_check_with_slack(self):
        assert check_measured_bound('lift', 2.05, 2.0, 0.1)['verdict'] == 'PASS'
        assert check_measured_bound('lift', 2.2, 2.0, 0.1)['verdict'] == 'FAIL'

    def test_summary(self):
        checks = [check_measured_bound('a', 1.0, 2.0), check_measured_bound('b', 3.0, 2.0)]
        summary = summarize_checks(checks)
        assert summary['total'] == 2
        assert summary['failed'] == ['b']
        assert summary['verdict'] == 'FAIL'
        assert summarize_checks([])['verdict'] == 'PASS'


class TestExceptionBases:
    """Error categories mapped to exit codes."""

    def test_hierarchy(self):
        assert issubclass(PreconditionError, ValueError)
        assert issubclass(NotConvergedError, RuntimeError)
        assert not issubclass(ValidationError, PreconditionError)
