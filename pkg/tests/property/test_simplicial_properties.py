"""
Property-Based Testing for Simplicial Complexes

Key Properties Validated:
- Mesh distances form a (pseudo)metric on sampled points
- Distances inside one simplex never exceed the ℓ¹ distance
- Subdivision coordinates map back to the original point
- The collar homotopy moves S_1/3 points toward the barycenter
"""

import numpy as np
from hypothesis import given, settings, strategies as st

# Add parent directory to path for imports
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.simplicial import (
    SimplicialComplex, SimplicialPoint, barycentric_subdivision, collar_homotopy,
    distance_matrix, from_subdivision, l1_distance_same_simplex, random_point,
    random_pure_complex, region_min_coefficient, to_subdivision,
)

seeds = st.integers(0, 2 ** 32 - 1)


class TestSimplicialMathematicalProperties:
    """Metric and subdivision invariants."""

    @given(seed=seeds)
    @settings(max_examples=25, deadline=None)
    def test_distance_matrix_is_a_metric(self, seed):
        rng = np.random.default_rng(seed)
        X = random_pure_complex(2, 3, rng)
        tops = X.top_simplices()
        points = [random_point(tops[int(rng.integers(len(tops)))], rng) for _ in range(4)]
        D = distance_matrix(X, points, eps=0.25)
        assert np.allclose(D, D.T)
        assert np.all(np.diag(D) == 0.0)
        assert np.all(D >= 0.0)
        for i in range(4):
            for j in range(4):
                assert np.all(D[i, j] <= D[i, :] + D[:, j] + 1e-9)

    @given(seed=seeds)
    @settings(max_examples=25, deadline=None)
    def test_same_simplex_distance_is_at_most_l1(self, seed):
        rng = np.random.default_rng(seed)
        X = SimplicialComplex(3, [[0, 1, 2]])
        x, y = random_point((0, 1, 2), rng), random_point((0, 1, 2), rng)
        D = distance_matrix(X, [x, y], eps=0.5)
        assert D[0, 1] <= l1_distance_same_simplex(x, y, X) + 1e-12
        assert l1_distance_same_simplex(x, y) <= 2.0 + 1e-12

    @given(seed=seeds, m=st.integers(1, 3))
    @settings(max_examples=30, deadline=None)
    def test_subdivision_round_trip(self, seed, m):
        rng = np.random.default_rng(seed)
        X = SimplicialComplex(m + 1, [list(range(m + 1))])
        _, faces = barycentric_subdivision(X)
        x = random_point(tuple(range(m + 1)), rng)
        back = from_subdivision(to_subdivision(x, faces), faces)
        assert l1_distance_same_simplex(back, x) <= 1e-9

    @given(m=st.integers(1, 4), lam=st.floats(0.0, 1.0),
           raw=st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5))
    @settings(max_examples=60, deadline=None)
    def test_collar_moves_inward(self, m, lam, raw):
        # place a point on the S_1/3 level set by mixing with the barycenter
        b = 1.0 / (m + 1)
        w = np.asarray(raw[:m + 1]) / np.sum(raw[:m + 1])
        if b - w.min() < 1e-3:
            w = np.eye(m + 1)[0]
        s = (b - 1.0 / (3 * (m + 1))) / (b - w.min())
        coords = b + s * (w - b)
        x = SimplicialPoint({v: c for v, c in enumerate(coords)})
        y = collar_homotopy(x, lam, m)
        assert region_min_coefficient(y, m) >= region_min_coefficient(x, m) - 1e-12
        assert l1_distance_same_simplex(x, y) <= lam / 4.0 * l1_distance_same_simplex(
            x, SimplicialPoint.barycenter(range(m + 1))) + 1e-12
