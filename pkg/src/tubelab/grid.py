"""Dyadic grids, cell sets, and covering/dimension certificates.

The carrier type for every discretized object in this package is a finite
union of half-open dyadic cells ``[c*delta, (c+1)*delta)^n`` at resolution
``delta = 2**-k``, stored as sorted duplicate-free integer index rows.  Set
algebra, measures, and covering numbers are exact integer computations;
floating point enters only when cells meet geometric primitives.

Two rasterization conventions are used consistently everywhere:

* **outer** (primitive -> cells): a cell belongs to the raster of a geometric
  primitive when its center is within the primitive's reach extended by the
  cell circumradius ``sqrt(n)*delta/2``.  Outer rasters over-cover, so
  containment claims made against them are conservative.
* **inner** (cells -> certificate numerators): a cell counts as inside a ball
  or strip only when its whole closed cube does.  Inner counts never exceed
  the continuum measure, so certified constants are honest at the recorded
  net.

Certificates (:class:`ADCertificate`, :class:`FrostmanCertificate`,
:class:`LineConcentrationCertificate`) record the worst ratio over an explicit
finite net together with the witness attaining it; ``verify`` re-evaluates the
witness from scratch.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Resolution",
    "CellSet",
    "ADCertificate",
    "FrostmanCertificate",
    "LineConcentrationCertificate",
    "measure",
    "covering_number",
    "neighborhood",
    "adset_constant",
    "frostman_constant",
    "line_concentration",
    "aligned_box",
    "random_cellset",
    "dyadic_exponent",
]

# Derived one-dimensional sets (projections, dot products, angles) overflow the
# unit box, so indices are admitted up to BOUND_FACTOR * 2**k on every axis.
BOUND_FACTOR = 8

MAX_K = 9


@dataclasses.dataclass(frozen=True)
class Resolution:
    """Dyadic scale 2**-k in dimension n."""

    k: int
    n: int

    def __post_init__(self) -> None:
        if not 0 <= self.k <= MAX_K:
            raise ValueError(f"k must be in [0, {MAX_K}], got {self.k}")
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2, or 3, got {self.n}")

    @property
    def delta(self) -> float:
        return 2.0 ** -self.k

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.k * self.n)

    @property
    def index_bound(self) -> int:
        return BOUND_FACTOR * (1 << self.k)


def _pack(res: Resolution, cells: np.ndarray) -> np.ndarray:
    """Encode index rows as single int64 keys; key order == lexicographic order."""
    b = res.index_bound
    m = 2 * b + 1
    keys = np.zeros(len(cells), dtype=np.int64)
    for i in range(res.n):
        keys = keys * m + (cells[:, i].astype(np.int64) + b)
    return keys


def _canonical(res: Resolution, cells: np.ndarray) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] != res.n:
        raise ValueError(f"cells must have shape (m, {res.n}), got {cells.shape}")
    if len(cells) == 0:
        return cells.reshape(0, res.n)
    if np.abs(cells).max() > res.index_bound:
        raise ValueError(f"cell index exceeds bound {res.index_bound}")
    keys = _pack(res, cells)
    _, idx = np.unique(keys, return_index=True)
    return np.ascontiguousarray(cells[idx])


@dataclasses.dataclass(frozen=True)
class CellSet:
    """Finite union of dyadic cells; rows sorted lexicographically, no duplicates."""

    res: Resolution
    cells: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", _canonical(self.res, self.cells))

    # -- construction ------------------------------------------------------

    @classmethod
    def empty(cls, res: Resolution) -> "CellSet":
        return cls(res, np.zeros((0, res.n), dtype=np.int64))

    @classmethod
    def from_points(cls, res: Resolution, points: np.ndarray) -> "CellSet":
        """Cells containing the given points (points on cell boundaries go down)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor(pts / res.delta).astype(np.int64)
        return cls(res, idx)

    # -- basic queries ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.res == other.res and np.array_equal(self.cells, other.cells)

    @property
    def measure(self) -> float:
        return len(self.cells) * self.res.cell_volume

    def centers(self) -> np.ndarray:
        return (self.cells + 0.5) * self.res.delta

    def is_empty(self) -> bool:
        return len(self.cells) == 0

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) index ranges, inclusive.  Errors on the empty set."""
        if self.is_empty():
            raise ValueError("empty cell set has no bounding box")
        return self.cells.min(axis=0), self.cells.max(axis=0)

    # -- set algebra (exact) -------------------------------------------------

    def _check_same_grid(self, other: "CellSet") -> None:
        if self.res != other.res:
            raise ValueError(f"resolution mismatch: {self.res} vs {other.res}")

    def union(self, other: "CellSet") -> "CellSet":
        self._check_same_grid(other)
        return CellSet(self.res, np.concatenate([self.cells, other.cells]))

    def intersection(self, other: "CellSet") -> "CellSet":
        self._check_same_grid(other)
        mask = np.isin(_pack(self.res, self.cells), _pack(self.res, other.cells))
        return CellSet(self.res, self.cells[mask])

    def difference(self, other: "CellSet") -> "CellSet":
        self._check_same_grid(other)
        mask = ~np.isin(_pack(self.res, self.cells), _pack(self.res, other.cells))
        return CellSet(self.res, self.cells[mask])

    def issubset(self, other: "CellSet") -> bool:
        self._check_same_grid(other)
        return bool(np.isin(_pack(self.res, self.cells), _pack(self.res, other.cells)).all())

    def member_mask(self, cells: np.ndarray) -> np.ndarray:
        """Boolean mask: which of the given index rows are members."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.res.n)
        return np.isin(_pack(self.res, cells), _pack(self.res, self.cells))


def measure(E: CellSet) -> float:
    """Exact Lebesgue measure: #cells * delta^n."""
    return E.measure


def dyadic_exponent(value: float) -> int:
    """j such that value == 2**-j, else ValueError."""
    if value <= 0:
        raise ValueError(f"expected a positive dyadic value, got {value}")
    j = round(-math.log2(value))
    if 2.0 ** -j != value:
        raise ValueError(f"expected an exact power of two, got {value}")
    return j


def coarse_cells(E: CellSet, rho: float) -> CellSet:
    """The rho-cells intersecting E (exact: dyadic cells nest)."""
    j = dyadic_exponent(rho)
    if j > E.res.k:
        raise ValueError(f"rho={rho} is finer than the grid delta={E.res.delta}")
    shift = E.res.k - j
    coarse = CellSet(Resolution(j, E.res.n), E.cells >> shift)
    return coarse


def covering_number(E: CellSet, rho: float) -> int:
    """Number of grid-aligned rho-cells intersecting E; 0 for the empty set."""
    if E.is_empty():
        return 0
    return len(coarse_cells(E, rho))


def neighborhood(E: CellSet, r: float) -> CellSet:
    """Cells whose closed cube comes within distance r of some cell of E.

    Membership is decided at cell centers: a candidate cell joins when the
    distance from its center to the closed cube union of E is <= r.  With
    r = delta this yields exactly the 3^n block around each cell.
    """
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if E.is_empty():
        return E
    res = E.res
    q = r / res.delta
    rad = int(math.floor(q + 0.5))
    axis = np.arange(-rad, rad + 1, dtype=np.int64)
    gap = np.maximum(0.0, np.abs(axis) - 0.5)
    grids = np.meshgrid(*([gap] * res.n), indexing="ij")
    ok = sum(g * g for g in grids) <= q * q
    offs = np.stack(np.meshgrid(*([axis] * res.n), indexing="ij"), axis=-1).reshape(-1, res.n)
    offs = offs[ok.reshape(-1)]
    out: list[np.ndarray] = []
    chunk = max(1, int(4e6) // max(1, len(offs)))
    bound = res.index_bound
    for lo in range(0, len(E.cells), chunk):
        block = E.cells[lo : lo + chunk, None, :] + offs[None, :, :]
        block = block.reshape(-1, res.n)
        block = block[np.all(np.abs(block) <= bound, axis=1)]
        out.append(block)
    return CellSet(res, np.concatenate(out))


def aligned_box(res: Resolution, lo: Sequence[int], hi: Sequence[int]) -> CellSet:
    """All cells with lo[i] <= index_i < hi[i]."""
    axes = [np.arange(int(a), int(b), dtype=np.int64) for a, b in zip(lo, hi)]
    if any(len(ax) == 0 for ax in axes):
        return CellSet.empty(res)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, res.n)
    return CellSet(res, grid)


def random_cellset(res: Resolution, density: float, rng: np.random.Generator) -> CellSet:
    """Bernoulli(density) sample of the cells of [0,1)^n."""
    if not 0 <= density <= 1:
        raise ValueError(f"density must be in [0,1], got {density}")
    side = 1 << res.k
    mask = rng.random(side**res.n) < density
    idx = np.flatnonzero(mask)
    coords = []
    for _ in range(res.n):
        coords.append(idx % side)
        idx //= side
    return CellSet(res, np.stack(coords[::-1], axis=1).astype(np.int64))


# -- inner intersections with balls and strips --------------------------------


def _far_corner_sq(centers: np.ndarray, x: np.ndarray, delta: float) -> np.ndarray:
    """Squared distance from x to the farthest corner of each cell."""
    d = np.abs(centers - x[None, :]) + delta / 2.0
    return np.einsum("ij,ij->i", d, d)


def ball_inner_cells(E: CellSet, x: Sequence[float], r: float) -> CellSet:
    """Cells of E whose closed cube lies inside the closed ball B(x, r)."""
    if E.is_empty():
        return E
    x = np.asarray(x, dtype=float)
    keep = _far_corner_sq(E.centers(), x, E.res.delta) <= r * r
    return CellSet(E.res, E.cells[keep])


def strip_inner_mask(E: CellSet, normal: np.ndarray, offset: float, r: float) -> np.ndarray:
    """Mask of cells of E whose closed cube lies inside {|p.normal - offset| <= r}.

    normal must be a unit vector; the exact cube criterion is
    |center.normal - offset| + (sum |normal_i|) * delta/2 <= r.
    """
    slack = float(np.abs(normal).sum()) * E.res.delta / 2.0
    proj = E.centers() @ np.asarray(normal, dtype=float)
    return np.abs(proj - offset) <= r - slack


# -- certificates --------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class NetSpec:
    """Finite search net recorded inside a certificate."""

    kind: str
    center_lo: tuple[int, ...] = ()
    center_hi: tuple[int, ...] = ()
    radii: tuple[float, ...] = ()
    rhos: tuple[float, ...] = ()
    directions: int = 0
    offset_step: float = 0.0


def _dyadic_radii(lo: float, hi: float) -> tuple[float, ...]:
    out = []
    r = lo
    while r <= hi:
        out.append(r)
        r *= 2.0
    return tuple(out)


def _center_net(E: CellSet) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
    """Centers of the cells of bbox(E) inflated by one cell, on the delta/2-shifted grid."""
    lo, hi = E.bbox()
    lo = lo - 1
    hi = hi + 1
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, E.res.n)
    centers = (grid + 0.5) * E.res.delta
    return centers, tuple(int(a) for a in lo), tuple(int(b) for b in hi)


@dataclasses.dataclass(frozen=True)
class ADCertificate:
    """Worst covering ratio sup E_rho(E cap B(x,r)) / (r/rho)^alpha over the net."""

    alpha: float
    rho_floor: float
    constant: float
    witness_center: tuple[float, ...]
    witness_r: float
    witness_rho: float
    net: NetSpec

    def verify(self, E: CellSet, tol: float = 1e-9) -> bool:
        inner = ball_inner_cells(E, self.witness_center, self.witness_r)
        got = covering_number(inner, self.witness_rho) / (self.witness_r / self.witness_rho) ** self.alpha
        return abs(got - self.constant) <= tol * max(1.0, self.constant)


@dataclasses.dataclass(frozen=True)
class FrostmanCertificate:
    """Worst mass ratio sup |E cap B(x,r)| / (r^alpha |E|) over the net."""

    alpha: float
    constant: float
    witness_center: tuple[float, ...]
    witness_r: float
    net: NetSpec

    def verify(self, E: CellSet, tol: float = 1e-9) -> bool:
        inner = ball_inner_cells(E, self.witness_center, self.witness_r)
        got = inner.measure / (self.witness_r**self.alpha * E.measure)
        return abs(got - self.constant) <= tol * max(1.0, self.constant)


@dataclasses.dataclass(frozen=True)
class LineConcentrationCertificate:
    """Worst strip ratio sup |E cap N_r(l)| / (r^zeta |E|) over a line net (n=2)."""

    zeta: float
    constant: float
    witness_theta: float
    witness_offset: float
    witness_r: float
    net: NetSpec

    def verify(self, E: CellSet, tol: float = 1e-9) -> bool:
        normal = np.array([-math.sin(self.witness_theta), math.cos(self.witness_theta)])
        count = int(strip_inner_mask(E, normal, self.witness_offset, self.witness_r).sum())
        got = count * E.res.cell_volume / (self.witness_r**self.zeta * E.measure)
        return abs(got - self.constant) <= tol * max(1.0, self.constant)


def _group_min_dist(E: CellSet, rho: float, centers: np.ndarray) -> tuple[np.ndarray, int]:
    """Per (center, rho-cell): squared farthest-corner distance minimized over member cells.

    Returns (dist_sq array of shape (len(centers), n_groups), n_groups).
    """
    j = dyadic_exponent(rho)
    shift = E.res.k - j
    keys = _pack(Resolution(j, E.res.n), E.cells >> shift)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    starts = np.flatnonzero(np.concatenate([[True], sorted_keys[1:] != sorted_keys[:-1]]))
    cell_centers = (E.cells[order] + 0.5) * E.res.delta
    out = np.empty((len(centers), len(starts)))
    half = E.res.delta / 2.0
    chunk = max(1, int(2e7) // max(1, len(E.cells)))
    for lo in range(0, len(centers), chunk):
        block = centers[lo : lo + chunk]
        d = np.abs(cell_centers[None, :, :] - block[:, None, :]) + half
        d2 = np.einsum("cij,cij->ci", d, d)
        out[lo : lo + chunk] = np.minimum.reduceat(d2, starts, axis=1)
    return out, len(starts)


def adset_constant(E: CellSet, alpha: float, rho_floor: float) -> ADCertificate:
    """Certify the worst Ahlfors-David covering ratio of E over an explicit net.

    The net: ball centers on the delta/2-shifted grid of bbox(E) inflated by
    one cell, dyadic rho in [rho_floor, 1], dyadic r in [rho, 4].  Ball
    intersections use the inner-cell convention, so the constant is a lower
    approximation of the continuum supremum at this net.
    """
    if E.is_empty():
        raise ValueError("adset_constant: empty set")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    j_floor = dyadic_exponent(rho_floor)
    if j_floor > E.res.k:
        raise ValueError(f"rho_floor={rho_floor} finer than grid delta={E.res.delta}")
    centers, lo, hi = _center_net(E)
    rhos = tuple(2.0**-j for j in range(j_floor, -1, -1))
    best = (-1.0, (0.0,) * E.res.n, 0.0, 0.0)
    for rho in rhos:
        radii = _dyadic_radii(rho, 4.0)
        dist_sq, _ = _group_min_dist(E, rho, centers)
        for r in radii:
            counts = (dist_sq <= r * r).sum(axis=1)
            ratio = counts / (r / rho) ** alpha
            i = int(np.argmax(ratio))
            if ratio[i] > best[0]:
                best = (float(ratio[i]), tuple(float(c) for c in centers[i]), r, rho)
    net = NetSpec(kind="ball", center_lo=lo, center_hi=hi, radii=_dyadic_radii(rho_floor, 4.0), rhos=rhos)
    return ADCertificate(alpha, rho_floor, best[0], best[1], best[2], best[3], net)


def frostman_constant(E: CellSet, alpha: float) -> FrostmanCertificate:
    """Certify the worst Frostman mass ratio of E over an explicit ball net."""
    if E.is_empty():
        raise ValueError("frostman_constant: empty set")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    centers, lo, hi = _center_net(E)
    radii = _dyadic_radii(E.res.delta, 4.0)
    cell_centers = E.centers()
    half = E.res.delta / 2.0
    total = E.measure
    vol = E.res.cell_volume
    best = (-1.0, (0.0,) * E.res.n, 0.0)
    chunk = max(1, int(2e7) // max(1, len(E.cells)))
    for clo in range(0, len(centers), chunk):
        block = centers[clo : clo + chunk]
        d = np.abs(cell_centers[None, :, :] - block[:, None, :]) + half
        d2 = np.einsum("cij,cij->ci", d, d)
        for r in radii:
            counts = (d2 <= r * r).sum(axis=1)
            ratio = counts * vol / (r**alpha * total)
            i = int(np.argmax(ratio))
            if ratio[i] > best[0]:
                best = (float(ratio[i]), tuple(float(c) for c in block[i]), r)
    net = NetSpec(kind="ball", center_lo=lo, center_hi=hi, radii=radii)
    return FrostmanCertificate(alpha, best[0], best[1], best[2], net)


def line_concentration(E: CellSet, zeta: float) -> LineConcentrationCertificate:
    """Certify the worst line-strip concentration of a planar set.

    Net: directions theta = i*delta in [0, pi), offsets on the delta-grid
    covering the projected range, dyadic widths r in [delta, 4].
    """
    if E.res.n != 2:
        raise ValueError("line_concentration is defined for n=2")
    if E.is_empty():
        raise ValueError("line_concentration: empty set")
    if not 0 < zeta <= 1:
        raise ValueError(f"zeta must be in (0,1], got {zeta}")
    delta = E.res.delta
    n_dirs = int(math.ceil(math.pi / delta))
    radii = _dyadic_radii(delta, 4.0)
    centers = E.centers()
    m = len(E.cells)
    best = (-1.0, 0.0, 0.0, 0.0)
    for i in range(n_dirs):
        theta = i * delta
        normal = np.array([-math.sin(theta), math.cos(theta)])
        slack = float(np.abs(normal).sum()) * delta / 2.0
        proj = np.sort(centers @ normal)
        s_lo = math.floor(proj[0] / delta)
        s_hi = math.ceil(proj[-1] / delta)
        offsets = np.arange(s_lo, s_hi + 1) * delta
        for r in radii:
            w = r - slack
            if w < 0:
                continue
            hi_idx = np.searchsorted(proj, offsets + w, side="right")
            lo_idx = np.searchsorted(proj, offsets - w, side="left")
            counts = hi_idx - lo_idx
            jbest = int(np.argmax(counts))
            ratio = counts[jbest] / (m * r**zeta)
            if ratio > best[0]:
                best = (float(ratio), theta, float(offsets[jbest]), r)
    net = NetSpec(kind="strip", radii=radii, directions=n_dirs, offset_step=delta)
    return LineConcentrationCertificate(zeta, best[0], best[1], best[2], best[3], net)
