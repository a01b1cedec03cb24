"""
Unit Tests for the Matrix K-Theory Module

Tests the normalising function, P_{t,D}, the difference construction, the
Riesz projection Θ, filtered matrix maps and the lattice index pairing.
"""

import math
import os
import sys
from unittest.mock import patch

import numpy as np
import pytest
from scipy.special import sici

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.covers import SampledSpace
from modules.matrix_ktheory import (
    LatticeDirac, FilteredMatrixMap, MatrixDomainError, DefectTooLargeError, SpectralGapError,
    bott_projection, cat0_rescale, check_filtration_axioms, check_odd, chi, chi_of, commutator_norm,
    chi_spectral_support_error, constant_projection, difference_idempotent, e13, index_pairing,
    lattice_chern_number, line_dirac, lipschitz_level, p_tD, pairing_pipeline, pairing_record,
    power_series_level_bound, power_series_level_check,
    propagation, random_graded_dirac, rank_by_count, reference_rank, scalar_bound_constants,
    spectral_projection_schur, theta, theta_scalar, twisted_defect,
)
from utils.validation import NotConvergedError


def chi_closed_form(x):
    si, _ = sici(x)
    return 2.0 / math.pi * (si - (1.0 - math.cos(x)) / x)


def random_projection(n, k, rng):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return Q[:, :k] @ Q[:, :k].conj().T


class TestChi:
    """The normalising function χ."""

    def test_chi_one_closed_form(self):
        assert chi(1.0) == pytest.approx(0.30964, abs=1e-5)
        assert chi(1.0) == pytest.approx(chi_closed_form(1.0), abs=1e-10)

    @pytest.mark.parametrize("x", [5e-4, 0.3, 7.0, 49.0, 80.0, 1e3])
    def test_matches_closed_form_across_branches(self, x):
        assert chi(x) == pytest.approx(chi_closed_form(x), abs=1e-9)

    def test_odd_with_unit_limits(self):
        assert chi(-2.5) == pytest.approx(-chi(2.5))
        assert chi(0.0) == 0.0
        assert chi(math.inf) == 1.0
        assert chi(-math.inf) == -1.0
        with pytest.raises(MatrixDomainError):
            chi(float('nan'))

    def test_fourier_transform_support(self):
        assert chi_spectral_support_error() < 1e-2

    def test_chi_of_diagonal_matrix(self):
        D = np.diag([-3.0, 0.0, 2.0])
        np.testing.assert_allclose(np.diag(chi_of(D, 2.0)).real, [chi(-1.5), 0.0, chi(1.0)], atol=1e-12)
        with pytest.raises(MatrixDomainError):
            chi_of(D, 0.0)

    def test_chi_of_rejects_non_hermitian(self):
        with pytest.raises(MatrixDomainError):
            chi_of(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


class TestPtD:
    """The idempotent P_{t,D}."""

    def test_exact_idempotent(self, rng):
        D, grading = random_graded_dirac(3, rng, scale=2.0)
        P, e11 = p_tD(D, grading, 1.0)
        np.testing.assert_allclose(P @ P, P, atol=1e-10)
        assert np.trace(e11).real == pytest.approx(3.0)

    def test_gapped_operator_gives_rank_of_e11(self, rng):
        D, grading = random_graded_dirac(2, rng, gap=50.0)
        P, e11 = p_tD(D, grading, 1.0)
        assert rank_by_count(P) == rank_by_count(e11)

    def test_preconditions(self, rng):
        D, grading = random_graded_dirac(2, rng)
        with pytest.raises(MatrixDomainError):
            p_tD(D, grading, 0.5)
        with pytest.raises(MatrixDomainError):
            p_tD(D + np.eye(4), grading, 1.0)
        with pytest.raises(MatrixDomainError):
            p_tD(D, np.array([1, 1, 0, -1]), 1.0)

    def test_line_dirac_is_odd(self):
        D, grading, space = line_dirac(6, 0.5)
        assert check_odd(D, grading) == 0.0
        assert space.n == 6

    def test_off_grading_entries_of_chi_vanish(self):
        lattice = LatticeDirac(2, 1.0)
        F = chi_of(lattice.odd_dirac, 1.0)
        assert check_odd(F, lattice.grading) < 1e-10

    def test_propagation_of_nearest_neighbour_operator(self):
        D, _, space = line_dirac(5, 1.0)
        # basis is (plus block, minus block), so group per point manually
        order = np.ravel(np.column_stack([np.arange(5), np.arange(5) + 5]))
        assert propagation(D[np.ix_(order, order)], space, 1e-12, block=2) == pytest.approx(1.0)

    def test_commutator_with_multiplication_operator(self):
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert commutator_norm(np.eye(2), np.array([0.0, 1.0])) == 0.0
        assert commutator_norm(swap, np.array([0.0, 1.0])) == pytest.approx(1.0)
        assert commutator_norm(swap, np.array([0.0, 3.0])) == pytest.approx(3.0)


class TestDifferenceAndTheta:
    """The difference idempotent d(α, β) and Θ."""

    def test_scalar_difference(self):
        d = difference_idempotent(np.array([[1.0]]), np.array([[0.0]]))
        np.testing.assert_allclose(d, np.diag([1.0, 0.0, 1.0, 0.0]), atol=1e-14)
        assert rank_by_count(d) - rank_by_count(e13(1)) == 1

    def test_difference_is_idempotent(self, rng):
        alpha, beta = random_projection(3, 1, rng), random_projection(3, 2, rng)
        d = difference_idempotent(alpha, beta)
        np.testing.assert_allclose(d @ d, d, atol=1e-10)
        assert rank_by_count(d) - rank_by_count(e13(3)) == -1

    def test_non_idempotent_input(self):
        with pytest.raises(DefectTooLargeError):
            difference_idempotent(np.array([[0.5]]), np.array([[0.0]]))

    def test_theta_of_diagonal(self):
        result = theta(np.diag([0.95, 0.03]), M=64)
        np.testing.assert_allclose(result, np.diag([1.0, 0.0]), atol=1e-12)

    def test_theta_scalar_matches_quadrature(self):
        values = np.array([0.95, 0.03, 0.6, 0.2])
        for M in (4, 8, 64):
            np.testing.assert_allclose(np.diag(theta(np.diag(values), M=M)), theta_scalar(values, M),
                                       atol=1e-12)
        with pytest.raises(MatrixDomainError):
            theta_scalar(values, 2)

    def test_theta_fixes_idempotents(self, rng):
        p = random_projection(4, 2, rng)
        np.testing.assert_allclose(theta(p), p, atol=1e-12)

    def test_theta_matches_schur_projection(self, rng):
        S = np.eye(4) + 0.5 * np.triu(rng.normal(size=(4, 4)), 1)
        e = S @ np.diag([1.0, 1.0, 0.0, 0.0]) @ np.linalg.inv(S)
        e = e + 0.01 * rng.normal(size=(4, 4))
        if np.linalg.norm(e @ e - e, 2) >= 0.25:
            pytest.skip("perturbation left the spectral-gap regime")
        np.testing.assert_allclose(theta(e, M=128), spectral_projection_schur(e), atol=1e-8)

    def test_theta_needs_spectral_gap(self):
        with pytest.raises(SpectralGapError):
            theta(0.5 * np.eye(2))
        with pytest.raises(NotConvergedError):
            theta(0.5 * np.eye(2))

    def test_scalar_bound_constants(self):
        assert scalar_bound_constants(1.0, 1.0, 1.0) == (0.25, 256.0)
        assert scalar_bound_constants(2.0, 1.0, 2.0) == (0.25, 1024.0)
        with pytest.raises(MatrixDomainError):
            scalar_bound_constants(0.0, 1.0, 1.0)


class TestFilteredMaps:
    """Lipschitz levels of matrix-valued maps."""

    @pytest.fixture
    def rotation_map(self):
        space = SampledSpace.from_points(np.linspace(0.0, 2.0, 9))

        def rot(a):
            c, s = math.cos(a), math.sin(a)
            return np.array([[c * c, c * s], [c * s, s * s]])

        return FilteredMatrixMap(space, np.array([rot(0.3 * x) for x in space.points[:, 0]]))

    def test_constant_map_has_level_zero(self, line_space):
        e = constant_projection(line_space, np.diag([1.0, 0.0]))
        assert lipschitz_level(e) == 0.0

    def test_rotation_level(self, rotation_map):
        # ‖p(a) − p(b)‖ = |sin(a − b)| for rank-one projections
        expected = math.sin(0.3 * 0.25) / 0.25
        assert lipschitz_level(rotation_map) == pytest.approx(expected, rel=1e-9)

    def test_filtration_axioms(self, rotation_map):
        other = rotation_map.map(lambda v: v @ v + 0.5 * np.eye(2))
        report = check_filtration_axioms(rotation_map, other)
        assert report['verdict'] == 'PASS'
        assert report['total'] == 4

    def test_power_series_majorant(self):
        # Σ k|c_k| ‖a‖^{k−1} for 1 + x + x²/2 at ‖a‖ = 2
        assert power_series_level_bound([1.0, 1.0, 0.5], 2.0) == pytest.approx(3.0)
        assert power_series_level_bound([5.0], 10.0) == 0.0

    def test_power_series_levels(self, rotation_map):
        assert power_series_level_check(rotation_map, 'exp')['verdict'] == 'PASS'
        assert power_series_level_check(rotation_map.scaled(0.5), 'log1m')['verdict'] == 'PASS'
        with pytest.raises(MatrixDomainError):
            power_series_level_check(rotation_map, 'sin')

    def test_shape_checked(self, line_space):
        with pytest.raises(MatrixDomainError):
            FilteredMatrixMap(line_space, np.zeros((3, 2, 2)))

    def test_rescaling_lowers_the_level(self):
        p = bott_projection(4, 1.0, radius=3.0)
        rescaled = cat0_rescale(p, [0.0, 0.0], 2.0)
        assert lipschitz_level(rescaled) <= lipschitz_level(p) + 1e-12
        with pytest.raises(MatrixDomainError):
            cat0_rescale(p, [0.0, 0.0], 0.5)


class TestLattice:
    """Wilson lattice and the index pairing."""

    def test_hamiltonian_is_hermitian(self):
        lattice = LatticeDirac(2, 0.5)
        np.testing.assert_allclose(lattice.D, lattice.D.conj().T, atol=1e-14)
        assert lattice.D.shape == (50, 50)
        assert check_odd(lattice.odd_dirac, lattice.grading) == 0.0

    def test_bott_projection_values(self, matrix_validator):
        p = bott_projection(3, 1.0, radius=2.0)
        for v in p.values:
            matrix_validator.assert_projection(v)
        corner = p.values[0]
        np.testing.assert_allclose(corner, np.diag([0.0, 1.0]), atol=1e-14)

    def test_chern_number_oracle(self):
        side = 2 * 8 + 1
        p = bott_projection(8, 1.0, radius=6.0)
        reflected = bott_projection(8, 1.0, radius=6.0, reflect=True)
        assert lattice_chern_number(p.values, side) == pytest.approx(1.0, abs=1e-8)
        assert lattice_chern_number(reflected.values, side) == pytest.approx(-1.0, abs=1e-8)

    def test_equal_projections_pair_to_zero(self):
        lattice = LatticeDirac(2, 1.0)
        e22 = constant_projection(lattice.space, np.diag([0.0, 1.0]))
        assert index_pairing(lattice, e22, e22, 1.0) == 0

    def test_pairing_preconditions(self):
        lattice = LatticeDirac(2, 1.0)
        p = bott_projection(2, 1.0, radius=1.5)
        q = constant_projection(p.base, p.plus_part)
        with pytest.raises(MatrixDomainError):
            index_pairing(lattice, p, q, 1e-6)
        with pytest.raises(MatrixDomainError):
            index_pairing(lattice, p, q, 4.0, M=1)
        half = constant_projection(p.base, 0.5 * np.eye(2))
        with pytest.raises(DefectTooLargeError):
            index_pairing(lattice, half, q, 4.0)

    def test_undersized_t_fails_the_spectral_gap(self):
        lattice = LatticeDirac(4, 1.0)
        p = bott_projection(4, 1.0, radius=3.0)
        q = constant_projection(p.base, p.plus_part)
        with patch('modules.matrix_ktheory.twisted_defect', return_value=0.3):
            with pytest.raises(SpectralGapError):
                index_pairing(lattice, p, q, 1.0)

    def test_twisted_defect_matches_dense_product(self, rng):
        space = SampledSpace.from_points(np.arange(3.0))
        P = random_projection(6, 3, rng)
        f = FilteredMatrixMap(space, np.array([random_projection(2, 1, rng) for _ in range(3)]))
        X = np.kron(P, np.eye(2)) @ f.multiplication_operator(inner=2)
        expected = np.linalg.norm(X @ X - X, 2)
        assert twisted_defect(P, f) == pytest.approx(expected, rel=1e-10)
        assert twisted_defect(P, f, dense_limit=0) == pytest.approx(expected, rel=1e-6)
        assert twisted_defect(P, constant_projection(space, np.eye(2))) == pytest.approx(0.0, abs=1e-12)

    def test_difference_count_matches_explicit_theta(self):
        lattice = LatticeDirac(1, 1.0, -0.7)
        p = constant_projection(lattice.space, np.eye(2))
        q = constant_projection(lattice.space, np.diag([0.0, 1.0]))
        V = lattice.positive_projection_basis()
        W = np.kron(V @ V.conj().T, np.eye(2))
        e11 = np.kron(np.diag((lattice.grading > 0).astype(complex)), np.eye(2))
        p_op, q_op = p.multiplication_operator(inner=2), q.multiplication_operator(inner=2)
        a = difference_idempotent(W @ p_op, W @ q_op)
        b = difference_idempotent(e11 @ p_op, e11 @ q_op)
        d = difference_idempotent(a, b)
        explicit = rank_by_count(theta(d, M=16)) - rank_by_count(e13(a.shape[0]))
        record = pairing_record(lattice, p, q, 1.0, M=16)
        assert record['index'] == explicit
        assert record['reference_rank_difference'] == lattice.n_sites
        assert reference_rank(p) - reference_rank(q) == lattice.n_sites

    def test_bott_pairing_matches_chern_oracle(self):
        lattice = LatticeDirac(8, 1.0, -1.0)
        for reflect, expected in ((False, 1), (True, -1)):
            p = bott_projection(8, 1.0, radius=7.5, reflect=reflect)
            q = constant_projection(p.base, p.plus_part)
            chern = int(round(lattice_chern_number(p.values, 2 * 8 + 1)))
            assert chern == expected
            assert index_pairing(lattice, p, q, 16.0) == chern
            assert index_pairing(lattice, p, q, 32.0, M=128) == chern

    def test_rescaled_support_radius(self):
        p = bott_projection(8, 1.0, radius=3.0)
        q = constant_projection(p.base, p.plus_part)
        for s in (1.0, 2.0):
            p_s, q_s = cat0_rescale(p, [0.0, 0.0], s), cat0_rescale(q, [0.0, 0.0], s)
            support = p_s.support(q_s)
            assert support.size > 0
            assert np.linalg.norm(p.base.points[support], axis=1).max() <= s * (3.0 + 1.0)

    def test_pairing_invariant_under_rescaling(self):
        p = bott_projection(8, 1.0, radius=7.5)
        values = []
        for s in (1.0, 2.0, 4.0):
            lattice = LatticeDirac(8, s)
            p_s = cat0_rescale(p, [0.0, 0.0], s, target=lattice.space)
            q_s = constant_projection(lattice.space, p.plus_part)
            values.append(index_pairing(lattice, p_s, q_s, 16.0 / s))
        assert values == [1, 1, 1]

    @pytest.mark.slow
    def test_pipeline_record_for_equal_projections(self):
        lattice = LatticeDirac(2, 1.0)
        e22 = constant_projection(lattice.space, np.diag([0.0, 1.0]))
        record = pairing_pipeline(lattice, e22, e22, 4.0)
        assert record['t'] == 4.0
        assert record['level'] == 0.0
        assert record['lambda2'] == 0.0
        assert record['d_tpq'].shape[0] == record['d_tpq'].shape[1]
        assert record['defect'] >= 0.0

    @pytest.mark.slow
    def test_full_size_bott_pairing(self):
        lattice = LatticeDirac(16, 0.5, -1.0)
        q = constant_projection(lattice.space, np.diag([0.0, 1.0]))
        for reflect in (False, True):
            p = bott_projection(16, 0.5, radius=7.5, reflect=reflect)
            chern = int(round(lattice_chern_number(p.values, 2 * 16 + 1)))
            assert index_pairing(lattice, p, q, 32.0) == chern == (-1 if reflect else 1)
