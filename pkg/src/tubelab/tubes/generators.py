"""Seeded tube-family constructors and direction pruning.

Counts are desk-scale: the separated-direction generator caps the per-axis
direction count at 16 in dimension three, so families stay in the hundreds
of tubes at every k.  All randomness flows through the counter-based
generator in tubelab._rng, keyed by (seed, tag), so outputs are
platform-identical.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from tubelab._rng import make_rng
from tubelab.grid import CellSet, Resolution, dyadic_exponent
from tubelab.tubes.family import TubeFamily
from tubelab.tubes.geometry import LineL, Tube, angle_between, cells_meeting_line, sl2_line

__all__ = [
    "family_from_lines",
    "gen_direction_separated",
    "gen_sticky_cantor",
    "gen_sl2",
    "gen_from_lineset",
    "prune_overrepresented",
]

_TAG_SEPARATED = 11
_TAG_STICKY = 13

_MAX_AXIS_DIRS_3D = 16


def family_from_lines(lines: Sequence[LineL], k: int) -> TubeFamily:
    """Family at scale 2^-k with full shadings."""
    if not lines:
        raise ValueError("need at least one line")
    res = Resolution(k, lines[0].n)
    return TubeFamily.from_lines(list(lines), res)


def _random_positions(rng: np.random.Generator, count: int, n: int, delta: float) -> np.ndarray:
    """Positions on the delta-grid strictly inside |p_i| <= 1/n - delta."""
    limit = max(0, int(math.floor((1.0 / n - delta) / delta)))
    return delta * rng.integers(-limit, limit + 1, size=(count, n - 1))


def gen_direction_separated(k: int, seed: int, n: int = 3) -> TubeFamily:
    """Full-shading tubes whose directions are pairwise at least delta apart.

    n=2 uses 2^k equally spaced angles (step 1.05*delta, so adjacent chords
    exceed delta); n=3 uses a square slope grid over [-0.35, 0.35]^2 with
    spacing at least 1.6*delta and at most 16 values per axis.
    """
    res = Resolution(k, n)
    delta = res.delta
    rng = make_rng(seed, _TAG_SEPARATED)
    if n == 2:
        half = 1 << (k - 1) if k >= 1 else 1
        theta = (np.arange(-half, half) + 0.5) * 1.05 * delta
        dirs = np.stack([np.sin(theta), np.cos(theta)], axis=1)
    elif n == 3:
        m = min(int(0.4375 * 2 ** k), _MAX_AXIS_DIRS_3D)
        m = max(m, 1)
        vals = -0.35 + (np.arange(m) + 0.5) * (0.7 / m)
        sx, sy = np.meshgrid(vals, vals, indexing="ij")
        raw = np.stack([sx.ravel(), sy.ravel(), np.ones(m * m)], axis=1)
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    else:
        raise ValueError(f"n must be 2 or 3, got {n}")
    pos = _random_positions(rng, len(dirs), n, delta)
    lines = [LineL(p=tuple(pos[i]), v=tuple(dirs[i])) for i in range(len(dirs))]
    return family_from_lines(lines, k)


def gen_sticky_cantor(k: int, branching: int = 4, seed: int = 0) -> TubeFamily:
    """Tubes through the origin whose slopes form a Cantor set.

    Starting from the slope square [-1/2, 1/2)^2, each step subdivides every
    kept cell 4x4 and keeps `branching` children (seeded choice).  Depth is
    floor((k-1)/2), keeping the finest cell side at >= 2*delta so distinct
    slope cells give essentially distinct tubes (the angle between slope
    vectors (s, 1) shrinks by at most 1 + |s|^2 <= 5/4 under normalization).
    At every dyadic level 4^-j the slopes occupy at most branching^j cells,
    so each rho-cover in the dyadic chain stays small.
    """
    if not 1 <= branching <= 16:
        raise ValueError(f"branching must be in [1, 16], got {branching}")
    res = Resolution(k, 3)
    rng = make_rng(seed, _TAG_STICKY)
    levels = max(1, (k - 1) // 2)
    cells = [(0, 0)]
    side = 1.0
    for _ in range(levels):
        nxt = []
        for (i, j) in cells:
            picks = np.sort(rng.choice(16, size=branching, replace=False))
            for t in picks:
                nxt.append((4 * i + int(t) // 4, 4 * j + int(t) % 4))
        cells = nxt
        side /= 4.0
    slopes = (np.array(cells, dtype=float) + 0.5) * side - 0.5
    raw = np.concatenate([slopes, np.ones((len(slopes), 1))], axis=1)
    dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    lines = [LineL(p=(0.0, 0.0), v=tuple(d)) for d in dirs]
    return family_from_lines(lines, k)


def gen_sl2(k: int) -> TubeFamily:
    """Determinant-one line family (a,b,0) + R(c,d,1), ad - bc = 1, on a
    delta-net around the identity parameters.  Deterministic."""
    if k < 3:
        # at k <= 2 the net reaches a = 1 - 2*delta <= 1/2, where
        # d = (1 + bc)/a leaves the direction class
        raise ValueError(f"the determinant-one net needs k >= 3, got {k}")
    res = Resolution(k, 3)
    delta = res.delta
    steps = 2
    offsets = delta * np.arange(-steps, steps + 1)
    lines = []
    for da in offsets:
        for b in offsets:
            for c in offsets:
                a = 1.0 + da
                d = (1.0 + b * c) / a
                lines.append(sl2_line(a, b, c, d))
    return family_from_lines(lines, k)


def gen_from_lineset(lines: Sequence[LineL], cube_cover: CellSet) -> TubeFamily:
    """Shade each line's tube with the cover cells the line passes through.

    A cell counts as met when the line intersects the closed cube.  Cover
    cells outside [-1,1]^n are dropped first; the survivors that meet the
    line form a subset of the full raster, so shadings are always legal.
    """
    if not lines:
        raise ValueError("need at least one line")
    res = cube_cover.res
    half = 1 << res.k
    in_cube = ((cube_cover.cells >= -half) & (cube_cover.cells < half)).all(axis=1)
    cells = cube_cover.cells[in_cube]
    tubes, shadings = [], []
    for line in lines:
        if line.n != res.n:
            raise ValueError("line dimension does not match the cover grid")
        ok = cells_meeting_line(line, res.delta, cells)
        tubes.append(Tube(line, res))
        shadings.append(CellSet(res, cells[ok]))
    return TubeFamily(res, tuple(tubes), tuple(shadings))


def fiber_measure(lines: Sequence[LineL], v: Sequence[float], scale: float) -> float:
    """Measure of positions p with (p, v) within 2*scale of the line set.

    Counted on the scale-grid of the position space [-1,1]^(n-1); the metric
    is |p - p_j| + angle(v, v_j).
    """
    n = lines[0].n
    angs = np.array([angle_between(v, l.v) for l in lines])
    keep = angs <= 2.0 * scale
    if not keep.any():
        return 0.0
    ps = np.array([l.p for l in lines], dtype=float).reshape(len(lines), n - 1)[keep]
    slack = 2.0 * scale - angs[keep]
    m = int(round(1.0 / scale))
    grid1 = (np.arange(-m, m) + 0.5) * scale
    if n == 2:
        pts = grid1.reshape(-1, 1)
    else:
        gx, gy = np.meshgrid(grid1, grid1, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dists = np.linalg.norm(pts[:, None, :] - ps[None, :, :], axis=2)
    hit = (dists <= slack[None, :]).any(axis=1)
    return float(hit.sum()) * scale ** (n - 1)


def prune_overrepresented(
    lines: Sequence[LineL], t: float, scale_list: Sequence[float]
) -> list[LineL]:
    """Drop directions whose fiber measure exceeds scale^(n-1-t) at any scale."""
    if not lines:
        return []
    n = lines[0].n
    bad_dirs: set[tuple[float, ...]] = set()
    for v in sorted({l.v for l in lines}):
        for scale in scale_list:
            if fiber_measure(lines, v, scale) > scale ** (n - 1 - t) + 1e-12:
                bad_dirs.add(v)
                break
    return [l for l in lines if l.v not in bad_dirs]
