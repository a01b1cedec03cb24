"""
Unit Tests for the Reporting Utilities

Tests JSON conversion, config hashing, result envelopes and the JSON and CSV
writers.
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.control_calculus import Linear
from utils.reporting import (
    ReportingError, build_envelope, canonical_json, config_hash, convert_numpy_types,
    load_json_file, module_versions, save_json_file, save_sweep_csv,
)


class TestConversion:
    """JSON-safe values."""

    def test_numpy_scalars_and_arrays(self):
        data = {'a': np.float64(0.5), 'b': np.arange(3), 'c': (np.int64(2), 1.0)}
        assert convert_numpy_types(data) == {'a': 0.5, 'b': [0, 1, 2], 'c': [2, 1.0]}

    def test_non_finite_floats(self):
        assert convert_numpy_types([float('nan'), np.inf, -np.inf]) == ['nan', 'inf', '-inf']

    def test_objects_with_to_dict(self):
        assert convert_numpy_types(Linear(2.0)) == {'kind': 'linear', 'a': 2.0, 'b': 0.0}

    def test_frames_become_columns(self):
        frame = pd.DataFrame({'r': [1.0, 2.0], 'F': [3.0, 4.0]})
        assert convert_numpy_types(frame) == {'r': [1.0, 2.0], 'F': [3.0, 4.0]}

    def test_complex_values(self):
        assert convert_numpy_types(np.complex128(1 + 1j)) == {'real': 1.0, 'imag': 1.0}


class TestHashing:
    """Canonical text and config hashes."""

    def test_key_order_does_not_matter(self):
        assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
        assert canonical_json({'b': 1, 'a': 2}) == '{"a":2,"b":1}'

    def test_values_change_the_hash(self):
        assert config_hash({'r': 1.0}) != config_hash({'r': 1.5})
        assert len(config_hash({})) == 64


class TestEnvelope:
    """Metadata carried by every result file."""

    def test_envelope_fields(self):
        envelope = build_envelope('decay', {'m': 3}, {'slope': 2.0})
        assert set(envelope) == {'command', 'config_hash', 'versions', 'config', 'result', 'audit'}
        assert envelope['config_hash'] == config_hash({'m': 3})
        assert envelope['audit'] == {}

    def test_versions_name_the_stack(self):
        versions = module_versions()
        assert set(versions) == {'curvdecay', 'numpy', 'scipy', 'pandas', 'pyyaml'}
        assert versions['numpy'] == np.__version__


class TestWriters:
    """JSON and CSV output."""

    def test_json_round_trip(self, tmp_path):
        path = str(tmp_path / 'out' / 'result.json')
        save_json_file({'value': np.float64(1.25), 'k': np.inf}, path)
        assert load_json_file(path) == {'value': 1.25, 'k': 'inf'}
        with open(path, 'r', encoding='utf-8') as f:
            assert f.read().endswith('}\n')

    def test_json_output_is_deterministic(self, tmp_path):
        a, b = str(tmp_path / 'a.json'), str(tmp_path / 'b.json')
        save_json_file({'z': 1, 'a': [0.1, 0.2]}, a)
        save_json_file({'a': [0.1, 0.2], 'z': 1}, b)
        with open(a, 'rb') as fa, open(b, 'rb') as fb:
            assert fa.read() == fb.read()

    def test_unserializable_data(self, tmp_path):
        with pytest.raises(ReportingError):
            save_json_file({'x': object()}, str(tmp_path / 'bad.json'))

    def test_sweep_csv(self, tmp_path):
        frame = pd.DataFrame({'r': [1.0, 10.0], 'F': [1.0 / 3.0, 2.0], 'extra': [0, 0]})
        path = str(tmp_path / 'sweep.csv')
        save_sweep_csv(frame, path, columns=['r', 'F'])
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
        assert lines == ['r,F', '1,0.333333333333', '10,2']
