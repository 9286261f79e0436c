from __future__ import annotations

import itertools
import math
from fractions import Fraction
from math import prod

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubelab.hypergraph import (
    KPartiteHypergraph,
    is_uniformly_dense,
    neighborhood,
    uniform_density_refine,
)


def subsets_ordered(k):
    out = []
    for size in range(k + 1):
        out.extend(itertools.combinations(range(k), size))
    return out


def oracle_dense(G, c):
    """Plain-loop density check over every edge and every index subset."""
    c = Fraction(c)
    edges = [tuple(map(int, e)) for e in G.edges]
    for I in subsets_ordered(G.k):
        comp = [i for i in range(G.k) if i not in I]
        bound = c * prod(G.part_sizes[i] for i in comp)
        seen = {}
        for e in edges:
            seen.setdefault(tuple(e[i] for i in I), []).append(e)
        for key in sorted(seen):
            if Fraction(len(seen[key])) < bound:
                return False, (I, key)
    return True, None


def oracle_refine(G, eps):
    """Rescan-from-scratch refinement: repeatedly delete the class of the
    lexicographically first violating (I, g_I) until none remains."""
    eps = Fraction(eps)
    alive = {tuple(map(int, e)) for e in G.edges}
    m0 = len(alive)
    k = G.k
    bounds = {
        I: math.ceil(eps * m0 / (2**k * prod(G.part_sizes[i] for i in I)))
        for I in subsets_ordered(k)
    }
    while True:
        hit = None
        for I in subsets_ordered(k):
            cls = {}
            for e in alive:
                cls.setdefault(tuple(e[i] for i in I), []).append(e)
            for key in sorted(cls):
                if len(cls[key]) < bounds[I]:
                    hit = cls[key]
                    break
            if hit:
                break
        if hit is None:
            return sorted(alive)
        for e in hit:
            alive.discard(e)


@st.composite
def hypergraphs(draw):
    k = draw(st.integers(2, 3))
    sizes = tuple(draw(st.integers(2, 5)) for _ in range(k))
    cells = list(itertools.product(*[range(s) for s in sizes]))
    picks = draw(st.lists(st.sampled_from(cells), min_size=1, max_size=40))
    return KPartiteHypergraph(sizes, np.array(sorted(set(picks)), dtype=np.int64))


def test_canonicalization_dedupes_and_sorts():
    G = KPartiteHypergraph((2, 3), np.array([[1, 2], [0, 1], [1, 2], [0, 0]]))
    assert G.edges.tolist() == [[0, 0], [0, 1], [1, 2]]
    assert G.n_edges == 3
    assert G.density == pytest.approx(0.5)


def test_rejects_out_of_range_edges():
    with pytest.raises(ValueError):
        KPartiteHypergraph((2, 2), np.array([[0, 2]]))
    with pytest.raises(ValueError):
        KPartiteHypergraph((2, 2), np.array([[-1, 0]]))
    with pytest.raises(ValueError):
        KPartiteHypergraph((), np.zeros((0, 0)))


def test_neighborhood_examples():
    G = KPartiteHypergraph((2, 2), np.array([[0, 0], [0, 1], [1, 0]]))
    assert neighborhood(G, (), ()).tolist() == G.edges.tolist()
    assert neighborhood(G, (0,), (0,)).tolist() == [[0, 0], [0, 1]]
    assert neighborhood(G, (0,), (1,)).tolist() == [[1, 0]]
    assert neighborhood(G, (0, 1), (1, 1)).tolist() == []
    with pytest.raises(ValueError):
        neighborhood(G, (0, 0), (0, 0))
    with pytest.raises(ValueError):
        neighborhood(G, (0,), (5,))


def test_three_edge_square_survives_refine():
    # Two parts of size two, edges {(0,0),(0,1),(1,0)}, eps = 1/2: the class
    # thresholds are 3/16 and 3/32, both below one, so nothing is removed.
    G = KPartiteHypergraph((2, 2), np.array([[0, 0], [0, 1], [1, 0]]))
    assert Fraction(1, 2) * 3 / (4 * 2) == Fraction(3, 16)
    assert Fraction(1, 2) * 3 / (4 * 4) == Fraction(3, 32)
    assert uniform_density_refine(G, 0.5) == G


def test_complete_graph_is_fixed_point():
    for sizes in [(2, 2), (3, 4), (2, 3, 2)]:
        G = KPartiteHypergraph.complete(sizes)
        for eps in (0.1, 0.5, 0.9):
            assert uniform_density_refine(G, eps) == G
            ok, witness = is_uniformly_dense(G, 1.0)
            assert ok and witness is None


def test_single_sparse_row_is_deleted():
    # 91 edges: a complete 3 x 30 block plus the lone edge (0, 0).  At
    # eps = 0.9 the row class of vertex 0 has count 1 < ceil(0.9*91/16) = 6,
    # so exactly that edge goes; the block survives every threshold.
    rows = [(i, j) for i in (1, 2, 3) for j in range(30)] + [(0, 0)]
    G = KPartiteHypergraph((4, 30), np.array(sorted(rows), dtype=np.int64))
    refined = uniform_density_refine(G, 0.9)
    expect = KPartiteHypergraph((4, 30), np.array([(i, j) for i in (1, 2, 3) for j in range(30)]))
    assert refined == expect
    assert G.n_edges - refined.n_edges <= 0.9 * G.n_edges


def test_dense_check_violator_order():
    # Sparse corner: vertex pair (1,1) sits in a count-1 class for I=(0,).
    G = KPartiteHypergraph((2, 2), np.array([[0, 0], [0, 1], [1, 1]]))
    ok, witness = is_uniformly_dense(G, 1.0)
    assert not ok
    assert witness == oracle_dense(G, 1.0)[1]
    with pytest.raises(ValueError):
        is_uniformly_dense(G, 0.0)
    with pytest.raises(ValueError):
        is_uniformly_dense(G, 1.5)


@given(hypergraphs(), st.sampled_from([0.1, 0.5, 0.9]))
def test_dense_check_matches_oracle(G, c):
    assert is_uniformly_dense(G, c) == oracle_dense(G, c)


@given(hypergraphs(), st.sampled_from([0.1, 0.5, 0.9]))
def test_refine_postconditions(G, eps):
    refined = uniform_density_refine(G, eps)
    m, m2 = G.n_edges, refined.n_edges
    # Deletion budget, exact.
    assert Fraction(m - m2) <= Fraction(eps) * m
    # Survivor density against the ORIGINAL part sizes and edge count.
    c = Fraction(eps) * m / (2**G.k * prod(G.part_sizes))
    ok, witness = is_uniformly_dense(refined, c)
    assert ok, witness
    # Matches the rescan-from-scratch oracle edge for edge.
    assert [tuple(e) for e in refined.edges.tolist()] == oracle_refine(G, eps)


@given(hypergraphs(), st.sampled_from([0.1, 0.5, 0.9]))
def test_refine_idempotent(G, eps):
    once = uniform_density_refine(G, eps)
    assert uniform_density_refine(once, eps) == once


def test_refine_rejects_bad_eps():
    G = KPartiteHypergraph.complete((2, 2))
    for eps in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            uniform_density_refine(G, eps)
