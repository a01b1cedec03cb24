"""
Unit Tests for the Smith Normal Form Utilities

Tests the factorisation D = PAQ, integer kernels, solvability in the image
and finitely presented abelian groups.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from utils.smith_normal_form import (
    SNF, AbelianGroup, SmithNormalFormError, _matmul,
    in_image, integer_kernel, smith_normal_form, solve_in_image,
)


def int_det(M):
    return int(round(np.linalg.det(np.array(M, dtype=float))))


class TestFactorisation:
    """D = PAQ with unimodular P and Q."""

    def test_textbook_example(self):
        A = [[2, 4, 4], [-6, 6, 12], [10, -4, -16]]
        D, P, Q = smith_normal_form(A)
        assert [D[i, i] for i in range(3)] == [2, 6, 12]
        assert (_matmul(_matmul(P, np.array(A, dtype=object)), Q) == D).all()
        assert abs(int_det(P)) == 1
        assert abs(int_det(Q)) == 1

    def test_diagonal_divisibility(self, rng):
        A = rng.integers(-9, 10, size=(4, 3))
        diag = SNF(A).run().diagonal
        nonzero = [d for d in diag if d != 0]
        assert all(d > 0 for d in nonzero)
        assert all(b % a == 0 for a, b in zip(nonzero, nonzero[1:]))

    def test_rank_of_singular_matrix(self):
        assert SNF([[1, 2], [2, 4]]).run().rank == 1

    def test_large_entries_do_not_overflow(self):
        big = 2 ** 70
        D, _, _ = smith_normal_form([[big, 0], [0, big * 3]])
        assert D[0, 0] == big

    def test_vector_becomes_column(self):
        D, _, _ = smith_normal_form([4, 6])
        assert D.shape == (2, 1)
        assert D[0, 0] == 2

    @pytest.mark.parametrize("A", [[[1.5, 2]], np.zeros((2, 2, 2))])
    def test_invalid_matrices(self, A):
        with pytest.raises(SmithNormalFormError):
            SNF(A)


class TestLatticeQueries:
    """Kernels and preimages over ℤ."""

    def test_integer_kernel(self):
        K = integer_kernel([[1, 2]])
        assert K.shape == (2, 1)
        assert int(K[0, 0]) + 2 * int(K[1, 0]) == 0
        assert abs(int(K[1, 0])) == 1

    def test_full_rank_kernel_is_empty(self):
        assert integer_kernel([[1, 0], [0, 1]]).shape == (2, 0)

    def test_solve_in_image(self):
        A = [[2, 0], [0, 3]]
        x = solve_in_image(A, [4, 9])
        assert [int(v) for v in x] == [2, 3]
        assert solve_in_image(A, [3, 0]) is None
        assert in_image(A, [0, -6])

    def test_length_mismatch(self):
        with pytest.raises(SmithNormalFormError):
            solve_in_image([[1, 0]], [1, 2])

    def test_empty_column_space(self):
        A = np.zeros((2, 0), dtype=int)
        assert solve_in_image(A, [0, 0]).shape == (0,)
        assert solve_in_image(A, [1, 0]) is None


class TestAbelianGroup:
    """ℤⁿ modulo a relation lattice."""

    def test_mixed_group(self):
        G = AbelianGroup(2, [[2, 0], [0, 0]])
        assert G.invariant_factors() == [2, 0]
        assert G.describe() == "Z/2 + Z"

    def test_trivial_and_free(self):
        assert AbelianGroup(1, [[1]]).is_trivial()
        assert AbelianGroup(0).describe() == "0"
        assert AbelianGroup(3).describe() == "Z + Z + Z"

    def test_class_membership(self):
        G = AbelianGroup(1, [[2]])
        assert G.is_zero([4])
        assert not G.is_zero([3])
        assert AbelianGroup(2).is_zero([0, 0])

    def test_dict_form(self):
        assert AbelianGroup(1, [[4]]).to_dict() == {'rank': 1, 'relations': [[4]]}

    def test_invalid_groups(self):
        with pytest.raises(SmithNormalFormError):
            AbelianGroup(-1)
        with pytest.raises(SmithNormalFormError):
            AbelianGroup(2, [[1, 2, 3]])
