"""
Unit Tests for the Lipschitz Homotopy Module

Tests close and stabilized homotopies, conjugating unitaries, controlled
lifts and the boundary map on the square-lattice model.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.covers import SampledSpace
from modules.matrix_ktheory import FilteredMatrixMap
from modules.lipschitz_homotopy import (
    FilteredPath, HomotopyPreconditionError, LiftError, LipschitzHomotopyError,
    PointRestrictionOracle, SquareBoundaryOracle, PROJECTION_RATIO, UNITARY_RATIO,
    STABILIZED_PROJECTION_RATIO, STABILIZED_UNITARY_RATIO,
    boundary_map, close_projection_homotopy, close_unitary_homotopy, conjugating_unitary,
    lift_unitary, phase_loop, square_lattice, stabilized_projection_homotopy,
    stabilized_unitary_homotopy, winding_number,
)


def rotated_e11(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)


def phase(theta, n=2):
    return np.exp(1j * theta) * np.eye(n)


class TestCloseHomotopies:
    """Θ-interpolation and logarithm paths."""

    def test_close_projections(self, matrix_validator):
        p, q = rotated_e11(0.0), rotated_e11(0.05)
        path = close_projection_homotopy(p, q)
        np.testing.assert_allclose(path(0.0), p)
        np.testing.assert_allclose(path(1.0), q)
        for _, value in path.samples[::10]:
            matrix_validator.assert_projection(value, atol=1e-10)
        assert path.measured_lipschitz_in_t <= PROJECTION_RATIO * np.linalg.norm(p - q, 2) + 1e-9

    def test_projections_too_far_apart(self):
        with pytest.raises(HomotopyPreconditionError, match="1/12"):
            close_projection_homotopy(rotated_e11(0.0), rotated_e11(0.5))

    def test_close_unitaries_follow_the_phase(self):
        u, v = np.eye(2, dtype=complex), phase(0.1)
        path = close_unitary_homotopy(u, v)
        np.testing.assert_allclose(path(0.5), phase(0.05), atol=1e-12)
        np.testing.assert_allclose(path(1.0), v)
        assert path.measured_lipschitz_in_t == pytest.approx(0.1, rel=1e-3)
        assert path.measured_lipschitz_in_t <= UNITARY_RATIO

    def test_unitaries_too_far_apart(self):
        with pytest.raises(HomotopyPreconditionError, match="1/6"):
            close_unitary_homotopy(np.eye(2), phase(1.0))

    def test_filtered_level_is_reported(self):
        space = SampledSpace.from_points(np.linspace(0.0, 1.0, 6))
        xs = space.points[:, 0]
        p = FilteredMatrixMap(space, np.array([rotated_e11(0.3 * x) for x in xs]), np.zeros((2, 2)))
        q = FilteredMatrixMap(space, np.array([rotated_e11(0.3 * x + 0.04) for x in xs]), np.zeros((2, 2)))
        report = close_projection_homotopy(p, q, steps=21).report()
        assert report['measured_level'] <= report['declared_level']
        assert report['class_defect'] < 1e-10

    def test_plain_matrices_have_no_level(self):
        report = close_projection_homotopy(rotated_e11(0.0), rotated_e11(0.01)).report()
        assert report['measured_level'] == 'N/A'

    def test_unknown_kind(self):
        with pytest.raises(LipschitzHomotopyError):
            FilteredPath(lambda t: np.eye(1)[None], np.eye(1), 'idempotent')


class TestStabilizedHomotopies:
    """Chain-based homotopies after stabilization."""

    @pytest.fixture
    def projection_chain(self):
        return [rotated_e11(0.07 * k) for k in range(4)]

    def test_projection_endpoints_and_padding(self, projection_chain, matrix_validator):
        p, q = projection_chain[0], projection_chain[-1]
        path = stabilized_projection_homotopy(p, q, projection_chain, n_samples=241)
        k, l = path.padding
        assert (k, l) == (12, 12)
        start = np.zeros((2 + k + l,) * 2, dtype=complex)
        start[:2, :2] = p
        start[2:2 + k, 2:2 + k] = np.eye(k)
        end = start.copy()
        end[:2, :2] = q
        np.testing.assert_allclose(path(0.0), start, atol=1e-12)
        np.testing.assert_allclose(path(1.0), end, atol=1e-12)
        assert path.class_defect() < 1e-8
        assert path.measured_lipschitz_in_t <= STABILIZED_PROJECTION_RATIO

    def test_chain_gap_names_the_index(self, projection_chain):
        chain = projection_chain[:2] + [rotated_e11(0.6)]
        with pytest.raises(HomotopyPreconditionError, match="index 1"):
            stabilized_projection_homotopy(chain[0], chain[-1], chain)

    def test_chain_must_match_endpoints(self, projection_chain):
        with pytest.raises(HomotopyPreconditionError):
            stabilized_projection_homotopy(rotated_e11(1.0), projection_chain[-1], projection_chain)

    def test_unitary_chain(self, matrix_validator):
        chain = [phase(0.1 * k) for k in range(3)]
        path = stabilized_unitary_homotopy(chain[0], chain[-1], chain, n_samples=241)
        assert path.padding == (8, 0)
        end = np.eye(10, dtype=complex)
        end[:2, :2] = chain[-1]
        np.testing.assert_allclose(path(1.0), end, atol=1e-12)
        for _, value in path.samples[::20]:
            matrix_validator.assert_unitary(value, atol=1e-9)
        assert path.measured_lipschitz_in_t <= STABILIZED_UNITARY_RATIO

    def test_equal_endpoints_give_constant_path(self):
        p = rotated_e11(0.2)
        path = stabilized_projection_homotopy(p, p)
        assert path.measured_lipschitz_in_t == 0.0


class TestConjugatingUnitary:
    """Unitaries conjugating the ends of a projection path."""

    def test_constant_path_gives_identity(self):
        p = rotated_e11(0.4)
        path = FilteredPath.from_function(lambda t: p, 'projection')
        result = conjugating_unitary(path)
        np.testing.assert_allclose(result['u'], np.eye(2), atol=1e-12)
        assert result['residual'] < 1e-12

    def test_rotation_path(self, matrix_validator):
        path = FilteredPath.from_function(lambda t: rotated_e11(t * math.pi / 6), 'projection')
        result = conjugating_unitary(path)
        u = result['u']
        matrix_validator.assert_unitary(u, atol=1e-10)
        assert result['residual'] < 1e-9
        np.testing.assert_allclose(u @ rotated_e11(0.0) @ u.conj().T, rotated_e11(math.pi / 6), atol=1e-9)
        # the rotation itself, up to a phase on each eigenline
        c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
        assert abs(u[0, 0]) == pytest.approx(c, abs=1e-6)
        assert abs(u[1, 0]) == pytest.approx(s, abs=1e-6)

    def test_identity_path_reaches_u(self):
        path = FilteredPath.from_function(lambda t: rotated_e11(0.3 * t), 'projection')
        result = conjugating_unitary(path)
        identity_path = result['identity_path']
        np.testing.assert_allclose(identity_path(0.0), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(identity_path(1.0), result['u'], atol=1e-9)

    def test_unitary_path_rejected(self):
        path = FilteredPath.from_function(lambda t: phase(t), 'unitary')
        with pytest.raises(HomotopyPreconditionError):
            conjugating_unitary(path)


class TestLifts:
    """Controlled surjections and lifted unitaries."""

    @pytest.fixture
    def point_oracle(self):
        return PointRestrictionOracle(SampledSpace.from_points(np.arange(5.0)), point=0)

    def test_lift_restricts_to_input(self, point_oracle):
        g = FilteredMatrixMap(point_oracle.quotient_space, np.array([[[2.0]]]), np.zeros((1, 1)))
        lifted = point_oracle.lift(g)
        assert lifted.base.n == 5
        np.testing.assert_allclose(lifted.values[:, 0, 0], 2.0)
        checks = point_oracle.check_lift(g)
        assert checks['norm']['verdict'] == 'PASS'
        assert checks['level']['verdict'] == 'PASS'

    def test_phase_path_lifts_to_constant_phase(self, point_oracle):
        quotient = point_oracle.quotient_space

        def v(t):
            return FilteredMatrixMap(quotient, np.array([[[np.exp(0.8j * t)]]]), np.eye(1))

        result = lift_unitary(point_oracle, FilteredPath.from_function(v, 'unitary'))
        np.testing.assert_allclose(result['u'].values[:, 0, 0], np.exp(0.8j), atol=1e-10)
        assert result['residual'] < 1e-10
        assert result['unitary_defect'] < 1e-10

    def test_path_must_start_at_identity(self, point_oracle):
        quotient = point_oracle.quotient_space

        def v(t):
            return FilteredMatrixMap(quotient, np.array([[[np.exp(1j * (t + 0.5))]]]), np.eye(1))

        with pytest.raises(LiftError):
            lift_unitary(point_oracle, FilteredPath.from_function(v, 'unitary'))

    def test_square_lattice_boundary_order(self):
        space, order = square_lattice(2)
        assert space.n == 25
        assert len(order) == 16
        first = space.points[order[0]]
        np.testing.assert_allclose(first, [2.0, -2.0])
        steps = np.linalg.norm(np.diff(space.points[np.append(order, order[0])], axis=0), axis=1)
        np.testing.assert_allclose(steps, 1.0)

    def test_radial_lift_restricts_to_boundary(self):
        oracle = SquareBoundaryOracle(3)
        loop = phase_loop(oracle, 1)
        lifted = oracle.lift(loop)
        centre = int(np.argmin(np.abs(oracle.space.points).max(axis=1)))
        assert np.abs(lifted.values[centre]).max() == 0.0


class TestBoundaryMap:
    """Index map on winding loops."""

    def test_winding_number(self):
        theta = np.linspace(0.0, 2 * math.pi, 40, endpoint=False)
        for k in (-2, -1, 0, 1, 3):
            assert winding_number(np.exp(1j * k * theta)) == k
        with pytest.raises(LipschitzHomotopyError):
            winding_number([1.0, 0.0, -1.0])

    def test_winding_of_unitary_stack_uses_det(self):
        theta = np.linspace(0.0, 2 * math.pi, 30, endpoint=False)
        stack = np.array([np.diag([np.exp(1j * t), 1.0]) for t in theta])
        assert winding_number(stack) == 1

    @pytest.mark.parametrize("winding", [-2, -1, 0, 1, 2])
    def test_index_equals_winding(self, winding):
        oracle = SquareBoundaryOracle(3)
        loop = phase_loop(oracle, winding)
        assert winding_number(loop.values[:, 0, 0]) == winding
        result = boundary_map(oracle, loop)
        assert result['rank'] == 1
        assert result['lift_residual'] < 1e-8
        assert result['projection_defect'] < 1e-8
        assert result['index'] == winding

    def test_perturbed_loop_keeps_its_index(self):
        oracle = SquareBoundaryOracle(3)
        angles = np.arctan2(oracle.quotient_space.points[:, 1], oracle.quotient_space.points[:, 0])
        loop = phase_loop(oracle, 1, 0.2 * np.sin(2 * angles))
        assert boundary_map(oracle, loop)['index'] == 1

    def test_unitary_must_live_on_quotient(self):
        oracle = SquareBoundaryOracle(2)
        wrong = FilteredMatrixMap(oracle.space, np.ones((oracle.space.n, 1, 1)), np.eye(1))
        with pytest.raises(LiftError):
            boundary_map(oracle, wrong)
