from __future__ import annotations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lazyctrl.mincut import InfeasibleSplitError, cut_weight, min_bisection_split, stoer_wagner

from oracles import exhaustive_bisection


def _sym(upper: np.ndarray) -> np.ndarray:
    w = np.triu(upper, 1)
    return w + w.T


def test_triangle_example():
    a, b, c = 0, 1, 2
    w = np.zeros((3, 3))
    w[a, b] = w[b, a] = 1
    w[a, c] = w[c, a] = 2
    w[b, c] = w[c, b] = 3
    side_a, side_b = min_bisection_split({a, b, c}, w, 2)
    assert (side_a, side_b) == (frozenset({a}), frozenset({b, c}))
    assert cut_weight(w, side_a, side_b) == 3


def test_two_vertices_split_into_singletons():
    w = np.array([[0, 4.5], [4.5, 0]])
    a, b = min_bisection_split([0, 1], w, 1)
    assert (a, b) == (frozenset({0}), frozenset({1}))
    assert cut_weight(w, a, b) == 4.5


def test_two_triangles_joined_by_light_edge():
    w = np.zeros((6, 6))
    for tri in ((0, 1, 2), (3, 4, 5)):
        for i in tri:
            for j in tri:
                if i != j:
                    w[i, j] = 10
    w[2, 3] = w[3, 2] = 1
    a, b = min_bisection_split(range(6), w, 3)
    assert {a, b} == {frozenset({0, 1, 2}), frozenset({3, 4, 5})}
    assert cut_weight(w, a, b) == 1


def test_split_works_on_vertex_subset():
    w = np.zeros((8, 8))
    w[5, 7] = w[7, 5] = 3.0
    w[2, 5] = w[5, 2] = 1.0
    a, b = min_bisection_split({2, 5, 7}, w, 2)
    assert {a, b} == {frozenset({2}), frozenset({5, 7})}


def test_infeasible_split_raises():
    w = np.zeros((5, 5))
    with pytest.raises(InfeasibleSplitError):
        min_bisection_split(range(5), w, 2)
    with pytest.raises(InfeasibleSplitError):
        min_bisection_split([3], w, 2)


def test_stoer_wagner_matches_networkx():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(2, 12))
        w = _sym(rng.random((n, n)) * (rng.random((n, n)) < 0.7))
        value, mask = stoer_wagner(w)
        assert value == pytest.approx(cut_weight(w, np.flatnonzero(mask), np.flatnonzero(~mask)))
        g = nx.Graph()
        g.add_nodes_from(range(n))
        for i in range(n):
            for j in range(i + 1, n):
                if w[i, j] > 0:
                    g.add_edge(i, j, weight=w[i, j])
        if nx.is_connected(g):
            expect, _ = nx.stoer_wagner(g)
        else:
            expect = 0.0
        assert value == pytest.approx(expect)


def test_stoer_wagner_needs_two_vertices():
    with pytest.raises(ValueError):
        stoer_wagner(np.zeros((1, 1)))


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, n), elements=st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.0])),
    st.integers((n + 1) // 2, n))))
def test_split_is_feasible_and_never_below_global_min(case):
    raw, limit = case
    w = _sym(raw)
    a, b = min_bisection_split(range(w.shape[0]), w, limit)
    assert a and b and not a & b and len(a | b) == w.shape[0]
    assert len(a) <= limit and len(b) <= limit
    best, glob = exhaustive_bisection(w, limit)
    got = cut_weight(w, a, b)
    assert got >= glob - 1e-9
    if best <= glob + 1e-9:
        assert got == pytest.approx(best)
