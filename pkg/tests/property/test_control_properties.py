"""
Property-Based Testing for the Control Calculus

Generates random control-function trees and inductive systems and checks the
invariants every caller relies on.

Key Properties Validated:
- Trees built from monotone pieces stay monotone
- Generalized and threshold inverses bracket their argument
- Measured uniform-control pairs always verify
"""

import math

import numpy as np
from hypothesis import given, settings, strategies as st, assume

# Add parent directory to path for imports
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.control_calculus import (
    Compose, Const, GeneralizedInverse, Linear, Max, MonotoneTable, Power, Scale, Sum,
    UniformControlPair, check_monotone, evaluate, measure_uniform_control,
    five_lemma_pair, identity, measured_pair, random_inductive_system, split_exact_sequence,
    threshold_inverse, verify_uniform_control,
)

GRID = np.linspace(0.0, 10.0, 41)

leaves = st.one_of(
    st.builds(Const, st.floats(0.0, 10.0)),
    st.builds(Linear, st.floats(0.0, 5.0), st.floats(0.0, 5.0)),
    st.builds(Power, st.floats(0.25, 2.0)),
)


def _extend(children):
    return st.one_of(
        st.builds(lambda ts: Sum(tuple(ts)), st.lists(children, min_size=1, max_size=3)),
        st.builds(lambda ts: Max(tuple(ts)), st.lists(children, min_size=1, max_size=3)),
        st.builds(Scale, st.floats(0.0, 5.0), children),
        st.builds(Compose, children, children),
    )


control_trees = st.recursive(leaves, _extend, max_leaves=6)

# nested powers above one overflow near the evaluation ceiling
tame_trees = st.recursive(
    st.one_of(
        st.builds(Const, st.floats(0.0, 10.0)),
        st.builds(Linear, st.floats(0.0, 5.0), st.floats(0.0, 5.0)),
        st.builds(Power, st.floats(0.25, 1.0)),
    ),
    _extend, max_leaves=6)


@st.composite
def monotone_tables(draw):
    n = draw(st.integers(1, 6))
    steps = draw(st.lists(st.floats(0.1, 5.0), min_size=n, max_size=n))
    rises = draw(st.lists(st.floats(0.0, 5.0), min_size=n, max_size=n))
    return MonotoneTable(tuple(np.cumsum(steps)), tuple(np.cumsum(rises)))


class TestControlMathematicalProperties:
    """Monotonicity and inverse properties of control functions."""

    @given(tree=control_trees)
    @settings(max_examples=100, deadline=None)
    def test_random_trees_are_monotone(self, tree):
        result = check_monotone(tree, GRID, tol=1e-9)
        assert result['is_monotone'], result['violation']

    @given(tree=control_trees)
    @settings(max_examples=50, deadline=None)
    def test_values_are_non_negative(self, tree):
        assert all(evaluate(tree, x) >= 0.0 for x in GRID)

    @given(table=monotone_tables())
    @settings(max_examples=50, deadline=None)
    def test_tables_are_monotone(self, table):
        xs = np.linspace(0.0, 2.0 * table.xs[-1] + 1.0, 60)
        assert check_monotone(table, xs, tol=1e-9)['is_monotone']

    @given(a=st.floats(0.1, 10.0), b=st.floats(0.0, 5.0), x=st.floats(0.0, 100.0))
    @settings(max_examples=100, deadline=None)
    def test_generalized_inverse_of_linear(self, a, b, x):
        inverse = evaluate(GeneralizedInverse(Linear(a, b)), x)
        if x < b:
            assert inverse == 0.0
        else:
            assert math.isclose(inverse, (x - b) / a, rel_tol=1e-6, abs_tol=1e-6)

    @given(tree=tame_trees, x=st.floats(0.0, 50.0))
    @settings(max_examples=60, deadline=None)
    def test_generalized_inverse_stays_below(self, tree, x):
        G = Sum((tree, Linear(1.0)))
        assume(evaluate(G, 0.0) <= x)
        y = evaluate(GeneralizedInverse(G), x)
        assert evaluate(G, y) <= x + 1e-6 * max(1.0, x)

    @given(tree=tame_trees, c=st.floats(0.0, 100.0), floor=st.floats(0.0, 5.0))
    @settings(max_examples=60, deadline=None)
    def test_threshold_inverse_reaches_threshold(self, tree, c, floor):
        F = Sum((tree, Linear(1.0)))
        t = threshold_inverse(F, c, floor)
        assert t >= floor + 1.0
        assert evaluate(F, t - 1.0) >= c - 1e-9


class TestInductiveSystemProperties:
    """Random coherent systems and their measured controls."""

    @given(seed=st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_random_systems_are_coherent(self, seed):
        system = random_inductive_system(np.random.default_rng(seed))
        assert system.check_coherence()

    @given(seed=st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_measured_pair_verifies(self, seed):
        system = random_inductive_system(np.random.default_rng(seed))
        measured = measure_uniform_control(system)
        pair = UniformControlPair(measured['L0'], Linear(1.0, measured['delay']))
        assert verify_uniform_control(system, pair)['verdict'] == 'PASS'

    @given(seed=st.integers(0, 2 ** 32 - 1), slack=st.floats(0.0, 3.0))
    @settings(max_examples=30, deadline=None)
    def test_chased_pair_controls_split_middle(self, seed, slack):
        sequence = split_exact_sequence(np.random.default_rng(seed))
        assert sequence.check_exact()
        controls = {name: identity() for name in ('F1', 'F2', 'F3', 'F4')}
        controls.update({name: Linear(1.0, slack) for name in ('Z21', 'E23', 'E34')})
        pairs = {j: measured_pair(sequence.systems[j]) for j in (1, 2, 4, 5)}
        pair = five_lemma_pair(controls, pairs)
        assert verify_uniform_control(sequence.systems[3], pair)['verdict'] == 'PASS'
