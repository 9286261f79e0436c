"""k-partite hypergraphs and uniform-density refinement.

Vertices of part i are the integers 0..sizes[i]-1; edges are duplicate-free
k-tuples stored as lexicographically sorted integer rows.  Multi-index
subsets I use 0-based positions.

Thresholds are exact rationals (eps converted via Fraction) reduced to
integer ceilings, so the refinement loop and the density checker compare
integer counts exactly and can never disagree on a boundary case.
"""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import math
from fractions import Fraction
from math import prod
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "KPartiteHypergraph",
    "neighborhood",
    "is_uniformly_dense",
    "uniform_density_refine",
]


@dataclasses.dataclass(frozen=True)
class KPartiteHypergraph:
    """Finite k-partite hypergraph with integer vertex labels per part."""

    part_sizes: tuple[int, ...]
    edges: np.ndarray

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.part_sizes)
        if len(sizes) == 0 or any(s <= 0 for s in sizes):
            raise ValueError(f"part sizes must be positive, got {sizes}")
        if prod(sizes) > 2**62:
            raise ValueError("vertex space too large to index")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, len(sizes))
        if len(edges):
            if edges.min() < 0 or (edges >= np.array(sizes)).any():
                raise ValueError("edge component outside its part")
            keys = _subset_keys(sizes, edges, tuple(range(len(sizes))))
            uniq = np.unique(keys)
            edges = np.stack(_unpack_keys(sizes, tuple(range(len(sizes))), uniq), axis=1)
        object.__setattr__(self, "part_sizes", sizes)
        object.__setattr__(self, "edges", np.ascontiguousarray(edges, dtype=np.int64))

    @property
    def k(self) -> int:
        return len(self.part_sizes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def density(self) -> float:
        return self.n_edges / prod(self.part_sizes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KPartiteHypergraph):
            return NotImplemented
        return self.part_sizes == other.part_sizes and np.array_equal(self.edges, other.edges)

    @classmethod
    def complete(cls, part_sizes: Sequence[int]) -> "KPartiteHypergraph":
        grids = np.meshgrid(*[np.arange(s) for s in part_sizes], indexing="ij")
        edges = np.stack(grids, axis=-1).reshape(-1, len(part_sizes))
        return cls(tuple(part_sizes), edges)


def _subset_keys(sizes: Sequence[int], edges: np.ndarray, I: tuple[int, ...]) -> np.ndarray:
    """Pack the I-components of each edge into one integer; order is lex in g_I."""
    keys = np.zeros(len(edges), dtype=np.int64)
    for i in I:
        keys = keys * sizes[i] + edges[:, i]
    return keys


def _unpack_keys(sizes: Sequence[int], I: tuple[int, ...], keys: np.ndarray) -> list[np.ndarray]:
    cols: list[np.ndarray] = []
    keys = keys.copy()
    for i in reversed(I):
        cols.append(keys % sizes[i])
        keys //= sizes[i]
    return list(reversed(cols))


def _check_indices(G: KPartiteHypergraph, I: Iterable[int]) -> tuple[int, ...]:
    I = tuple(int(i) for i in I)
    if len(set(I)) != len(I) or any(not 0 <= i < G.k for i in I):
        raise ValueError(f"invalid index subset {I} for arity {G.k}")
    return I


def neighborhood(G: KPartiteHypergraph, I: Iterable[int], a_I: Sequence[int]) -> np.ndarray:
    """Edges whose I-components equal a_I (all edges for I = ())."""
    I = _check_indices(G, I)
    a_I = tuple(int(a) for a in a_I)
    if len(a_I) != len(I):
        raise ValueError(f"a_I has length {len(a_I)}, expected {len(I)}")
    for i, a in zip(I, a_I):
        if not 0 <= a < G.part_sizes[i]:
            raise ValueError(f"vertex {a} outside part {i}")
    mask = np.ones(G.n_edges, dtype=bool)
    for i, a in zip(I, a_I):
        mask &= G.edges[:, i] == a
    return G.edges[mask]


def _all_subsets(k: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for size in range(k + 1):
        out.extend(itertools.combinations(range(k), size))
    return out


def _ceil_bound(t: Fraction) -> int:
    """Smallest integer B with: integer count < t  iff  count < B."""
    return math.ceil(t)


def is_uniformly_dense(
    G: KPartiteHypergraph, c: float | Fraction
) -> tuple[bool, tuple[tuple[int, ...], tuple[int, ...]] | None]:
    """Check #n_G[g_I] >= c * prod_{i not in I} #A_i for every edge g and every I.

    Returns (flag, first violator (I, g_I)), violators ordered by (|I|, I, g_I).
    Comparisons are exact for rational c.
    """
    c = Fraction(c)
    if not 0 < c <= 1:
        raise ValueError(f"c must be in (0,1], got {c}")
    if G.n_edges == 0:
        return True, None
    for I in _all_subsets(G.k):
        complement = [i for i in range(G.k) if i not in I]
        bound = _ceil_bound(c * prod(G.part_sizes[i] for i in complement))
        keys = _subset_keys(G.part_sizes, G.edges, I)
        uniq, counts = np.unique(keys, return_counts=True)
        bad = np.flatnonzero(counts < bound)
        if len(bad):
            key = np.int64(uniq[bad[0]])
            g_I = tuple(int(col) for col in _unpack_keys(G.part_sizes, I, key))
            return False, (I, g_I)
    return True, None


def uniform_density_refine(G: KPartiteHypergraph, eps: float) -> KPartiteHypergraph:
    """Delete sparse neighborhood classes until every survivor is dense.

    While some multi-index I and tuple g_I present in the current graph has
    #n[g_I] < (eps/2^k) * #G / prod_{i in I} #A_i (thresholds fixed from the
    ORIGINAL edge count), all edges in that class are removed.  Violators are
    processed in a deterministic queue ordered by (|I|, I, g_I).

    The survivor keeps at least (1-eps)#G edges and is uniformly dense at
    level eps/2^k times the original density; the test suite asserts both.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0,1), got {eps}")
    m = G.n_edges
    if m == 0:
        return G
    eps_frac = Fraction(eps)
    k = G.k
    subsets = _all_subsets(k)
    bounds = {
        I: _ceil_bound(eps_frac * m / (2**k * prod(G.part_sizes[i] for i in I)))
        for I in subsets
    }
    inv: dict[tuple[int, ...], np.ndarray] = {}
    uniq: dict[tuple[int, ...], np.ndarray] = {}
    counts: dict[tuple[int, ...], np.ndarray] = {}
    any_violation = False
    for I in subsets:
        u, iv, c = np.unique(
            _subset_keys(G.part_sizes, G.edges, I), return_inverse=True, return_counts=True
        )
        uniq[I], inv[I], counts[I] = u, iv, c
        if (c < bounds[I]).any():
            any_violation = True
    if not any_violation:
        return G

    # Edge index lists per (I, unique key), grouped via one stable argsort per I.
    groups: dict[tuple[int, ...], list[np.ndarray]] = {}
    for I in subsets:
        order = np.argsort(inv[I], kind="stable")
        groups[I] = np.split(order, np.cumsum(counts[I])[:-1])

    heap: list[tuple[int, tuple[int, ...], int, int]] = []
    queued: set[tuple[tuple[int, ...], int]] = set()

    def maybe_queue(I: tuple[int, ...], uidx: int) -> None:
        if 0 < counts[I][uidx] < bounds[I] and (I, uidx) not in queued:
            heapq.heappush(heap, (len(I), I, int(uniq[I][uidx]), uidx))
            queued.add((I, uidx))

    for I in subsets:
        for uidx in np.flatnonzero(counts[I] < bounds[I]):
            maybe_queue(I, int(uidx))

    alive = np.ones(m, dtype=bool)
    while heap:
        _, I, _, uidx = heapq.heappop(heap)
        queued.discard((I, uidx))
        victims = groups[I][uidx][alive[groups[I][uidx]]]
        if len(victims) == 0:
            continue
        alive[victims] = False
        for J in subsets:
            touched = inv[J][victims]
            dec = np.bincount(touched, minlength=len(counts[J]))
            counts[J] -= dec
            for ui in np.flatnonzero((dec > 0) & (counts[J] > 0) & (counts[J] < bounds[J])):
                maybe_queue(J, int(ui))
    return KPartiteHypergraph(G.part_sizes, G.edges[alive])
