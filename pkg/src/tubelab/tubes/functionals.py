"""Per-cell functionals over shaded tube families.

All sums run over shading cells (indicator supports), so results are exact
grid sums rather than quadrature.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from typing import Callable, Sequence

import numpy as np

from tubelab.grid import ADCertificate, CellSet, Resolution, _pack, adset_constant, coarse_cells, dyadic_exponent
from tubelab.tubes.family import TubeFamily

__all__ = [
    "mlk_functional",
    "PlaneMap",
    "PlanemapResult",
    "broad_narrow_planemap",
    "cordoba_bound",
    "GrainStats",
    "grain_decomposition",
    "SliceStats",
    "slice_slope_spectrum",
]


def _cell_membership(F: TubeFamily) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted (cell_keys, boundaries, tube_ids): cell i owns ids[b[i]:b[i+1]]."""
    keys_list, ids_list = [], []
    for i, y in enumerate(F.shadings):
        if len(y):
            keys_list.append(_pack(F.res, y.cells))
            ids_list.append(np.full(len(y), i, dtype=np.int64))
    if not keys_list:
        return np.zeros(0, np.int64), np.zeros(1, np.int64), np.zeros(0, np.int64)
    keys = np.concatenate(keys_list)
    ids = np.concatenate(ids_list)
    order = np.lexsort((ids, keys))
    keys, ids = keys[order], ids[order]
    uniq_mask = np.concatenate([[True], keys[1:] != keys[:-1]])
    starts = np.flatnonzero(uniq_mask)
    bounds = np.append(starts, len(keys))
    return keys[starts], bounds, ids


def _ordered_triple_sum(dirs: np.ndarray, counts: np.ndarray) -> float:
    """Sum of |det(u_a, u_b, u_c)| over ordered triples with multiplicity."""
    cross = np.cross(dirs[:, None, :], dirs[None, :, :])
    dets = np.abs(np.einsum("abi,ci->abc", cross, dirs))
    return float(np.einsum("a,b,c,abc->", counts, counts, counts, dets))


def mlk_functional(F: TubeFamily) -> tuple[float, float]:
    """Trilinear transversality functional against its counting benchmark.

    lhs = delta^3 * sum over cells of sqrt(sum over ordered tube triples
    through the cell of |v1 wedge v2 wedge v3|); rhs = (delta^2 #T)^(3/2).
    Cells with fewer than three tubes contribute zero exactly (a wedge with
    a repeated direction vanishes).
    """
    if F.res.n != 3:
        raise ValueError("the trilinear functional needs n = 3")
    delta = F.delta
    rhs = (delta ** 2 * len(F)) ** 1.5
    _, bounds, ids = _cell_membership(F)
    sizes = np.diff(bounds)
    dirs_all = F.directions()
    lhs = 0.0
    cache: dict[bytes, float] = {}
    for ci in np.flatnonzero(sizes >= 3):
        members = ids[bounds[ci] : bounds[ci + 1]]
        sig = members.tobytes()
        val = cache.get(sig)
        if val is None:
            u, cnt = np.unique(dirs_all[members], axis=0, return_counts=True)
            val = _ordered_triple_sum(u, cnt.astype(float)) if len(u) >= 3 else 0.0
            cache[sig] = val
        lhs += math.sqrt(val)
    return delta ** 3 * lhs, rhs


@dataclasses.dataclass(frozen=True)
class PlaneMap:
    """Unit vector attached to each cell of a set."""

    cells: CellSet
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vectors, dtype=float).reshape(len(self.cells), self.cells.res.n)
        norms = np.linalg.norm(vec, axis=1)
        if len(vec) and np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("plane map vectors must be unit")
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def constant(cls, E: CellSet, v: Sequence[float]) -> "PlaneMap":
        v = np.asarray(v, dtype=float)
        return cls(E, np.tile(v / np.linalg.norm(v), (len(E), 1)))

    def vector_at(self, cells: np.ndarray) -> np.ndarray:
        """Vectors for the given index rows (rows must be members)."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.cells.res.n)
        own = _pack(self.cells.res, self.cells.cells)
        want = _pack(self.cells.res, cells)
        pos = np.searchsorted(own, want)
        if (pos >= len(own)).any() or (own[np.minimum(pos, len(own) - 1)] != want).any():
            raise KeyError("cell not in the plane map's domain")
        return self.vectors[pos]


@dataclasses.dataclass(frozen=True)
class PlanemapResult:
    narrow: PlaneMap
    broad: CellSet
    flagged: CellSet
    dot_max: np.ndarray


def broad_narrow_planemap(
    F: TubeFamily, wedge_threshold: float, count_threshold: int
) -> PlanemapResult:
    """Split union cells into broad and narrow; fit a plane map on the narrow.

    A cell is broad when at least count_threshold unordered tube triples
    through it have |v1 wedge v2 wedge v3| >= wedge_threshold.  On a narrow
    cell the lexicographically first pair maximizing |v1 wedge v2| defines
    V = v1 x v2 normalized; cells with no transversal pair are flagged.
    dot_max[i] = max over tubes through narrow cell i of |V . dir|.
    """
    if F.res.n != 3:
        raise ValueError("plane maps need n = 3")
    keys, bounds, ids = _cell_membership(F)
    union = F.union_shading()
    dirs = F.directions()

    def classify(members: np.ndarray):
        m = len(members)
        u = dirs[members]
        if m >= 3 and count_threshold >= 1:
            combs = np.array(list(itertools.combinations(range(m), 3)))
            dets = np.abs(
                np.einsum("ij,ij->i", np.cross(u[combs[:, 0]], u[combs[:, 1]]), u[combs[:, 2]])
            )
            if int((dets >= wedge_threshold).sum()) >= count_threshold:
                return ("broad",)
        if m < 2:
            return ("flagged",)
        cross = np.cross(u[:, None, :], u[None, :, :])
        wedge = np.linalg.norm(cross, axis=2)
        iu = np.triu_indices(m, k=1)
        flat = wedge[iu]
        if flat.max() <= 0.0:
            return ("flagged",)
        best = int(np.argmax(flat))
        vec = cross[iu[0][best], iu[1][best]]
        vec = vec / np.linalg.norm(vec)
        return ("narrow", vec, float(np.abs(u @ vec).max()))

    cache: dict[bytes, tuple] = {}
    broad_rows, flagged_rows, narrow_rows = [], [], []
    vectors, dot_maxes = [], []
    for ci in range(len(keys)):
        members = ids[bounds[ci] : bounds[ci + 1]]
        sig = members.tobytes()
        verdict = cache.get(sig)
        if verdict is None:
            verdict = classify(members)
            cache[sig] = verdict
        if verdict[0] == "broad":
            broad_rows.append(ci)
        elif verdict[0] == "flagged":
            flagged_rows.append(ci)
        else:
            narrow_rows.append(ci)
            vectors.append(verdict[1])
            dot_maxes.append(verdict[2])
    def pick(rows: list[int]) -> CellSet:
        return CellSet(F.res, union.cells[np.array(rows, dtype=np.int64)]) if rows else CellSet.empty(F.res)
    narrow_cells = pick(narrow_rows)
    pm = PlaneMap(narrow_cells, np.array(vectors, dtype=float).reshape(len(narrow_cells), 3))
    return PlanemapResult(
        narrow=pm,
        broad=pick(broad_rows),
        flagged=pick(flagged_rows),
        dot_max=np.array(dot_maxes, dtype=float),
    )


def cordoba_bound(Q: CellSet, F: TubeFamily) -> tuple[float, float]:
    """Union measure inside Q against the L2 overlap lower bound.

    bound = (sum_i |Q ∩ Y_i|)^2 / integral over Q of (sum_i chi_i)^2; the
    union measure always dominates it (Cauchy-Schwarz), asserted here.
    """
    if Q.res != F.res:
        raise ValueError("box and family live on different grids")
    vol = F.res.cell_volume
    union, counts = F.multiplicity()
    sel = Q.cells[union.member_mask(Q.cells)]
    keys_u = _pack(F.res, union.cells)
    rows = np.searchsorted(keys_u, _pack(F.res, sel))
    c = counts[rows] if len(sel) else np.zeros(0, dtype=np.int64)
    union_measure = len(sel) * vol
    denom = vol * float((c.astype(float) ** 2).sum())
    if denom == 0.0:
        raise ValueError("no tube shading meets the box")
    numer = (vol * float(c.sum())) ** 2
    bound = numer / denom
    if union_measure < bound - 1e-12:
        raise AssertionError("overlap bound exceeded the union measure")
    return union_measure, bound


@dataclasses.dataclass(frozen=True)
class GrainStats:
    """Projection statistics for one sqrt(rho)-ball of the decomposition."""

    ball_cell: tuple[int, ...]
    normal: np.ndarray
    cell_count: int
    grain_count: int
    run_count: int
    projected: CellSet
    certificate: ADCertificate


def grain_decomposition(E: CellSet, V: PlaneMap, rho: float, sigma: float) -> list[GrainStats]:
    """Project E within each sqrt(rho)-ball along the local plane-map normal.

    rho must be an even dyadic power (so sqrt(rho) is dyadic).  For each
    sqrt(rho)-cell of E: take the E-cells whose centers lie in the closed
    ball of radius sqrt(rho) around the cell center, project those centers
    onto V at the lexicographically first E-cell of that sqrt(rho)-cell, and
    bucket the values into rho-intervals.  grain_count is the number of
    occupied rho-intervals, run_count the number of maximal consecutive runs;
    the projected set also gets a 1-D AD certificate at exponent 1 - sigma.
    """
    if not E.issubset(V.cells):
        raise ValueError("plane map is not defined on all of E")
    j = dyadic_exponent(rho)
    if j % 2 or j == 0:
        raise ValueError(f"rho must be 4^-m with m >= 1, got {rho}")
    sqrt_rho = 2.0 ** -(j // 2)
    res1 = Resolution(j, 1)
    coarse = coarse_cells(E, sqrt_rho)
    shift = E.res.k - (j // 2)
    centers = E.centers()
    out: list[GrainStats] = []
    for ball_cell in coarse.cells:
        p = (ball_cell + 0.5) * sqrt_rho
        in_ball = np.linalg.norm(centers - p, axis=1) <= sqrt_rho + 1e-12
        in_cell = np.flatnonzero(((E.cells >> shift) == ball_cell).all(axis=1))
        v = V.vector_at(E.cells[in_cell[0]][None, :])[0]
        dots = centers[in_ball] @ v
        idx = np.floor(dots / rho).astype(np.int64)
        projected = CellSet(res1, idx[:, None])
        occupied = projected.cells[:, 0]
        runs = int(np.count_nonzero(np.diff(occupied) > 1) + 1) if len(occupied) else 0
        cert = adset_constant(projected, alpha=1.0 - sigma, rho_floor=rho)
        out.append(
            GrainStats(
                ball_cell=tuple(int(x) for x in ball_cell),
                normal=v,
                cell_count=int(in_ball.sum()),
                grain_count=len(projected),
                run_count=runs,
                projected=projected,
                certificate=cert,
            )
        )
    return out


@dataclasses.dataclass(frozen=True)
class SliceStats:
    """Slope-projection statistics for one z-slab."""

    z_index: int
    z0: float
    slope: float
    projected: CellSet
    covering: int
    certificate: ADCertificate


def slice_slope_spectrum(
    E: CellSet, f: Callable[[float], float], sigma: float
) -> list[SliceStats]:
    """Project each z-slab of E along (1, f(z0), 0) and certify the result.

    For each occupied delta-slab with center height z0: project the slab's
    cell centers to x + f(z0)*y, bucket into delta-intervals, and report the
    projected set, its cell count (the delta-covering number), and its 1-D
    AD certificate at exponent 1 - sigma.
    """
    if E.res.n != 3:
        raise ValueError("slice projections need n = 3")
    delta = E.res.delta
    res1 = Resolution(E.res.k, 1)
    out: list[SliceStats] = []
    for zc in np.unique(E.cells[:, 2]):
        z0 = (zc + 0.5) * delta
        a = float(f(z0))
        rows = E.cells[E.cells[:, 2] == zc]
        vals = (rows[:, 0] + 0.5) * delta + a * (rows[:, 1] + 0.5) * delta
        idx = np.floor(vals / delta).astype(np.int64)
        projected = CellSet(res1, idx[:, None])
        cert = adset_constant(projected, alpha=1.0 - sigma, rho_floor=delta)
        out.append(
            SliceStats(
                z_index=int(zc),
                z0=z0,
                slope=a,
                projected=projected,
                covering=len(projected),
                certificate=cert,
            )
        )
    return out
