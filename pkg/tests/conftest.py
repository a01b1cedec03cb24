"""
Pytest configuration and shared fixtures for the curvature-decay toolkit.

Provides small complexes, sampled spaces, control-function documents and
matrix validation helpers used across the unit, property and integration tests.
"""

import pytest
import numpy as np
import yaml
import os
from typing import Dict, Any
import warnings

# Add parent directory to path for imports
import sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from modules.simplicial import SimplicialComplex
from modules.covers import SampledSpace, interval_cover

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')


def load_fixture(name: str) -> Dict[str, Any]:
    """Load a YAML file from tests/fixtures."""
    with open(os.path.join(FIXTURE_DIR, name), 'r', encoding='utf-8') as f:
        return yaml.safe_load(f)


@pytest.fixture
def rng():
    """Seeded generator so randomized tests are reproducible."""
    return np.random.default_rng(20240501)


@pytest.fixture
def control_trees():
    """Control-function documents with expected values."""
    return load_fixture('control_trees.yaml')


@pytest.fixture
def inductive_systems():
    """Small inductive systems with known control verdicts."""
    return load_fixture('inductive_systems.yaml')


@pytest.fixture
def sample_complexes():
    """Named complexes keyed as in complexes.yaml."""
    data = load_fixture('complexes.yaml')
    return {name: SimplicialComplex.from_dict(doc) for name, doc in data.items()}


@pytest.fixture
def triangle():
    """The 2-simplex on vertices 0, 1, 2."""
    return SimplicialComplex(3, [[0, 1, 2]])


@pytest.fixture
def two_triangles():
    """Two triangles glued along the edge {1, 2}."""
    return SimplicialComplex(4, [[0, 1, 2], [1, 2, 3]])


@pytest.fixture
def line_space():
    """Uniform sample of [0, 30] with spacing 0.25."""
    return SampledSpace.from_points(np.arange(121) * 0.25)


@pytest.fixture
def line_cover(line_space):
    """Tiling of the line sample by length-4 intervals."""
    return interval_cover(line_space, 4.0, 4.0)


class MatrixValidationMixin:
    """Mixin class providing matrix validation utilities."""

    @staticmethod
    def assert_projection(p: np.ndarray, atol: float = 1e-10):
        """Check p = p* = p²."""
        np.testing.assert_allclose(p, p.conj().T, atol=atol, err_msg="Projection must be self-adjoint")
        np.testing.assert_allclose(p @ p, p, atol=atol, err_msg="Projection must be idempotent")

    @staticmethod
    def assert_unitary(u: np.ndarray, atol: float = 1e-10):
        """Check u*u = uu* = 1."""
        eye = np.eye(u.shape[0])
        np.testing.assert_allclose(u.conj().T @ u, eye, atol=atol, err_msg="u*u must be the identity")
        np.testing.assert_allclose(u @ u.conj().T, eye, atol=atol, err_msg="uu* must be the identity")

    @staticmethod
    def assert_monotone(values: np.ndarray):
        """Check a sampled sequence is non-decreasing."""
        drops = np.where(np.diff(np.asarray(values, dtype=float)) < 0)[0]
        assert drops.size == 0, f"Sequence decreases at index {drops[:5]}"


@pytest.fixture
def matrix_validator():
    """Fixture providing matrix validation utilities."""
    return MatrixValidationMixin()


def pytest_configure(config):
    """Configure pytest with custom markers and settings."""
    config.addinivalue_line(
        "markers", "mathematical: Tests focusing on numerical precision and algorithm correctness"
    )
    config.addinivalue_line(
        "markers", "validation: Input validation and error-path tests"
    )


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers automatically."""
    for item in items:
        if "closed_form" in item.name or "oracle" in item.name:
            item.add_marker(pytest.mark.mathematical)

        if "invalid" in item.name or "malformed" in item.name or "schema" in item.name:
            item.add_marker(pytest.mark.validation)

        if "brute_force" in item.name or "pipeline" in item.name:
            item.add_marker(pytest.mark.slow)


# Suppress specific warnings for cleaner test output
@pytest.fixture(autouse=True)
def suppress_warnings():
    warnings.filterwarnings("ignore", category=DeprecationWarning)
