"""Lines through the unit cube and their dyadic tube rasterizations.

A line is stored as (p, v): it passes through (p, 0) with unit direction v,
v_n >= 1/2, so it is a graph over the last coordinate.  The tube around a
line at scale delta is the 2*n*delta-neighborhood of the line clipped to
[-1,1]^n.  Its raster is the set of delta-cells whose closed cube meets the
line itself; the neighborhood is fat enough that every such cube lies inside
the tube, so rasters (and the shadings they bound) are honest subsets of the
region.  The raster volume is between delta^(n-1)/8 and 8*delta^(n-1): a
graph line crosses each x_n-layer in O(1) cells, with the extreme 8 attained
by an axis line sitting on two grid planes.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Sequence

import numpy as np

from tubelab.grid import CellSet, Resolution

__all__ = [
    "LineL",
    "Tube",
    "angle_between",
    "line_dist",
    "in_standard_class",
    "clipped_length",
    "cells_meeting_line",
    "rasterize",
    "essentially_distinct",
    "covers",
    "sl2_line",
]


def angle_between(v: Sequence[float], w: Sequence[float]) -> float:
    """Angle between unit vectors, computed from the chord for stability."""
    chord = float(np.linalg.norm(np.asarray(v, float) - np.asarray(w, float)))
    return 2.0 * math.asin(min(1.0, chord / 2.0))


@dataclasses.dataclass(frozen=True)
class LineL:
    """Line (p,0) + R*v with unit v and v_n >= 1/2.

    Coordinates are stored as tuples so lines are hashable and compare
    exactly.  The position bound |p_i| <= 1/n of the standard class is not
    enforced here (determinant-one families land outside it); use
    in_standard_class to test it.
    """

    p: tuple[float, ...]
    v: tuple[float, ...]

    def __post_init__(self) -> None:
        p = tuple(float(x) for x in self.p)
        v = tuple(float(x) for x in self.v)
        n = len(v)
        if n not in (2, 3) or len(p) != n - 1:
            raise ValueError(f"need |v| in {{2,3}} and |p| = |v|-1, got {len(p)}, {n}")
        norm = math.sqrt(sum(x * x for x in v))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be unit within 1e-12, |v| = {norm!r}")
        if v[-1] < 0.5:
            raise ValueError(f"v_n must be >= 1/2 (graph over x_n), got {v[-1]!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return len(self.v)

    @property
    def p_vec(self) -> np.ndarray:
        return np.array(self.p, dtype=float)

    @property
    def v_vec(self) -> np.ndarray:
        return np.array(self.v, dtype=float)

    def base_point(self) -> np.ndarray:
        return np.append(self.p_vec, 0.0)

    def point_at(self, s: float) -> np.ndarray:
        return self.base_point() + s * self.v_vec

    def sort_key(self) -> tuple[float, ...]:
        return self.v + self.p


def line_dist(a: LineL, b: LineL) -> float:
    """Metric |p - p'| + angle(v, v')."""
    if a.n != b.n:
        raise ValueError("lines live in different dimensions")
    return float(np.linalg.norm(a.p_vec - b.p_vec)) + angle_between(a.v, b.v)


def in_standard_class(line: LineL) -> bool:
    """Position bound |p_i| <= 1/n of the standard line class."""
    return all(abs(x) <= 1.0 / line.n + 1e-12 for x in line.p)


def clipped_length(line: LineL, lo: float = -1.0, hi: float = 1.0) -> float:
    """Length of the line intersected with the axis box [lo,hi]^n."""
    q = line.base_point()
    v = line.v_vec
    s_lo, s_hi = -math.inf, math.inf
    for i in range(line.n):
        if v[i] == 0.0:
            if not lo <= q[i] <= hi:
                return 0.0
            continue
        t0, t1 = (lo - q[i]) / v[i], (hi - q[i]) / v[i]
        if t0 > t1:
            t0, t1 = t1, t0
        s_lo, s_hi = max(s_lo, t0), min(s_hi, t1)
    return max(0.0, s_hi - s_lo)


@dataclasses.dataclass(frozen=True)
class Tube:
    """A line together with a dyadic scale; the region is implicit."""

    line: LineL
    res: Resolution

    def __post_init__(self) -> None:
        if self.line.n != self.res.n:
            raise ValueError(f"line dimension {self.line.n} != grid dimension {self.res.n}")

    @property
    def delta(self) -> float:
        return self.res.delta


def cells_meeting_line(line: LineL, delta: float, cells: np.ndarray) -> np.ndarray:
    """Mask of cells (lo-corner indices, shape (m, n)) whose closed cube meets the line.

    Standard slab clip of the line against each cube; a zero direction
    component degenerates to a membership test on that axis.
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, line.n)
    q = line.base_point()
    v = line.v_vec
    lo = cells * delta
    hi = lo + delta
    m = cells.shape[0]
    s_lo = np.full(m, -np.inf)
    s_hi = np.full(m, np.inf)
    ok = np.ones(m, dtype=bool)
    # Subnormal v[i] overflows the quotient to +-inf, which min/max handle.
    with np.errstate(over="ignore"):
        for i in range(line.n):
            if v[i] == 0.0:
                ok &= (lo[:, i] <= q[i]) & (q[i] <= hi[:, i])
                continue
            t0 = (lo[:, i] - q[i]) / v[i]
            t1 = (hi[:, i] - q[i]) / v[i]
            s_lo = np.maximum(s_lo, np.minimum(t0, t1))
            s_hi = np.minimum(s_hi, np.maximum(t0, t1))
    # Slack covers float noise plus line coordinates quantized to 12 decimal
    # places (text round-trips); 1e-9 in parameter units is ~1e-9 spatially,
    # six orders below the smallest cell (delta >= 2^-9).
    return ok & (s_lo <= s_hi + 1e-9)


@functools.lru_cache(maxsize=4096)
def rasterize(tube: Tube) -> CellSet:
    """Cells of [-1,1]^n whose closed cube meets the coaxial line.

    Marches layer by layer along x_n (v_n >= 1/2 makes the line a graph);
    within a layer the segment's bounding box, padded by one cell, bounds
    the candidates, and the exact slab test decides each one.
    """
    res = tube.res
    n, d = res.n, res.delta
    half = 1 << res.k
    q = tube.line.base_point()
    v = tube.line.v_vec

    layers = np.arange(-half, half, dtype=np.int64)
    s0 = (layers * d - q[-1]) / v[-1]
    s1 = ((layers + 1) * d - q[-1]) / v[-1]
    ends = np.stack([q[None, :-1] + s[:, None] * v[None, :-1] for s in (s0, s1)])
    lo_idx = np.floor(ends.min(axis=0) / d).astype(np.int64) - 1
    width = int((np.floor(ends.max(axis=0) / d).astype(np.int64) + 1 - lo_idx).max()) + 1

    rng = np.arange(width, dtype=np.int64)
    if n == 2:
        offs = rng.reshape(-1, 1)
    else:
        offs = np.stack(np.meshgrid(rng, rng, indexing="ij"), axis=-1).reshape(-1, 2)
    cand = lo_idx[:, None, :] + offs[None, :, :]
    cells = np.concatenate(
        [cand, np.broadcast_to(layers[:, None, None], cand.shape[:2] + (1,))], axis=2
    ).reshape(-1, n)
    inside = ((cells[:, :-1] >= -half) & (cells[:, :-1] < half)).all(axis=1)
    cells = cells[inside]
    return CellSet(res, cells[cells_meeting_line(tube.line, d, cells)])


def essentially_distinct(a: Tube, b: Tube) -> bool:
    """True iff the coaxial lines are further than delta apart (d > delta)."""
    if a.res != b.res:
        raise ValueError(f"scale mismatch: {a.res} vs {b.res}")
    return line_dist(a.line, b.line) > a.delta


def covers(coarse: Tube, fine: Tube) -> bool:
    """A rho-tube covers a delta-tube iff d(lines) <= rho/2 (needs delta <= rho)."""
    if coarse.line.n != fine.line.n:
        raise ValueError("lines live in different dimensions")
    rho, delta = coarse.delta, fine.delta
    if delta > rho:
        raise ValueError(f"fine scale {delta} exceeds coarse scale {rho}")
    return line_dist(coarse.line, fine.line) <= rho / 2.0


def sl2_line(a: float, b: float, c: float, d: float, tol: float = 1e-9) -> LineL:
    """Line (a,b,0) + R*(c,d,1) for a determinant-one parameter matrix.

    Requires a*d - b*c = 1 within tol and c^2 + d^2 <= 3 (so the normalized
    direction keeps v_3 >= 1/2).  The position (a,b) may fall outside the
    standard class; see in_standard_class.
    """
    det = a * d - b * c
    if abs(det - 1.0) > tol:
        raise ValueError(f"parameter determinant must be 1, got {det!r}")
    norm = math.sqrt(c * c + d * d + 1.0)
    if 1.0 / norm < 0.5:
        raise ValueError(f"direction (c,d,1) too shallow: c^2+d^2 = {c*c+d*d!r} > 3")
    return LineL(p=(a, b), v=(c / norm, d / norm, 1.0 / norm))
