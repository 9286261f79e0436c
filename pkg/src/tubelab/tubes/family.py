"""Shaded tube families: admissibility, refinements, coarse covers, rescaling."""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Sequence

import numpy as np

from tubelab.grid import CellSet, Resolution, _pack, coarse_cells, dyadic_exponent
from tubelab.tubes.geometry import LineL, Tube, line_dist, rasterize

__all__ = [
    "TubeFamily",
    "AdmissibilityReport",
    "ExtremalityReport",
    "RescaleMap",
    "admissibility_check",
    "extremality_report",
    "constant_multiplicity_refinement",
    "cover_by_rho_tubes",
    "balanced_check",
    "balance_refine",
    "unit_rescale",
]


@dataclasses.dataclass(frozen=True)
class TubeFamily:
    """Tubes at one scale, each with a shading inside its raster."""

    res: Resolution
    tubes: tuple[Tube, ...]
    shadings: tuple[CellSet, ...]

    def __post_init__(self) -> None:
        tubes = tuple(self.tubes)
        shadings = tuple(self.shadings)
        if len(tubes) != len(shadings):
            raise ValueError(f"{len(tubes)} tubes vs {len(shadings)} shadings")
        for i, (t, y) in enumerate(zip(tubes, shadings)):
            if t.res != self.res:
                raise ValueError(f"tube {i} at {t.res}, family at {self.res}")
            if y.res != self.res:
                raise ValueError(f"shading {i} at {y.res}, family at {self.res}")
            if not y.issubset(rasterize(t)):
                raise ValueError(f"shading {i} leaves its tube")
        object.__setattr__(self, "tubes", tubes)
        object.__setattr__(self, "shadings", shadings)

    def __len__(self) -> int:
        return len(self.tubes)

    @property
    def delta(self) -> float:
        return self.res.delta

    def entries(self) -> Iterable[tuple[Tube, CellSet]]:
        return zip(self.tubes, self.shadings)

    def lines(self) -> list[LineL]:
        return [t.line for t in self.tubes]

    def directions(self) -> np.ndarray:
        return np.array([t.line.v for t in self.tubes], dtype=float).reshape(len(self), self.res.n)

    def union_shading(self) -> CellSet:
        if not self.shadings:
            return CellSet.empty(self.res)
        return CellSet(self.res, np.concatenate([y.cells for y in self.shadings]))

    def mass(self) -> float:
        return float(sum(y.measure for y in self.shadings))

    def multiplicity(self) -> tuple[CellSet, np.ndarray]:
        """(union shading, per-cell count of shadings containing the cell)."""
        union = self.union_shading()
        if union.is_empty():
            return union, np.zeros(0, dtype=np.int64)
        keys = np.concatenate([_pack(self.res, y.cells) for y in self.shadings])
        uniq, counts = np.unique(keys, return_counts=True)
        # uniq is sorted and equals the packed keys of the (sorted) union.
        return union, counts

    def restrict(self, keep: CellSet) -> "TubeFamily":
        """Intersect every shading with the given cell set."""
        return TubeFamily(self.res, self.tubes, tuple(y.intersection(keep) for y in self.shadings))

    @classmethod
    def from_lines(cls, lines: Sequence[LineL], res: Resolution) -> "TubeFamily":
        """Family with full shadings (every raster cell shaded)."""
        tubes = tuple(Tube(l, res) for l in lines)
        return cls(res, tubes, tuple(rasterize(t) for t in tubes))


# -- admissibility and extremality -------------------------------------------


@dataclasses.dataclass(frozen=True)
class AdmissibilityReport:
    """Results of the three-part family check at exponents (s, t).

    For each dyadic rho in [delta, 1]: the greedy rho-cover size, and the
    maximum number of members whose directions share one rho-net bucket
    (a factor-9 overestimate of the largest pairwise-parallel clique at
    that scale, never an underestimate).
    """

    delta: float
    s: float
    t: float
    distinct_ok: bool
    min_pairwise_dist: float
    rhos: tuple[float, ...]
    cover_sizes: tuple[int, ...]
    parallel_counts: tuple[int, ...]
    parallel_bound: float
    parallel_ok: bool
    mass: float
    mass_bound: float
    mass_ok: bool
    union_measure: float

    def all_ok(self) -> bool:
        return self.distinct_ok and self.parallel_ok and self.mass_ok


def _pairwise_min_dist(lines: Sequence[LineL]) -> float:
    if len(lines) < 2:
        return math.inf
    p = np.array([l.p for l in lines], dtype=float)
    v = np.array([l.v for l in lines], dtype=float)
    best = math.inf
    for i in range(len(lines) - 1):
        dp = np.linalg.norm(p[i + 1 :] - p[i], axis=1)
        chord = np.linalg.norm(v[i + 1 :] - v[i], axis=1)
        ang = 2.0 * np.arcsin(np.minimum(1.0, chord / 2.0))
        best = min(best, float((dp + ang).min()))
    return best


def _greedy_line_cover(lines: Sequence[LineL], rho: float) -> tuple[list[int], np.ndarray]:
    """First-fit cover of lines by earlier lines, in lex (v, p) order.

    Returns (center indices, assignment of each line to its center).  Every
    line sits within rho/2 of its center; centers are pairwise > rho/2 apart.
    """
    if not lines:
        return [], np.zeros(0, dtype=np.int64)
    order = sorted(range(len(lines)), key=lambda i: lines[i].sort_key())
    p = np.array([l.p for l in lines], dtype=float).reshape(len(lines), -1)
    v = np.array([l.v for l in lines], dtype=float).reshape(len(lines), -1)
    centers: list[int] = []
    assign = np.full(len(lines), -1, dtype=np.int64)
    for i in order:
        if centers:
            dp = np.linalg.norm(p[centers] - p[i], axis=1)
            chord = np.linalg.norm(v[centers] - v[i], axis=1)
            dist = dp + 2.0 * np.arcsin(np.minimum(1.0, chord / 2.0))
            near = np.flatnonzero(dist <= rho / 2.0)
            if len(near):
                assign[i] = centers[int(near[0])]
                continue
        centers.append(i)
        assign[i] = i
    return centers, assign


def _max_parallel_bucket(dirs: np.ndarray, rho: float) -> int:
    """Largest count of directions in one cube of the rho-grid on S^{n-1}."""
    if len(dirs) == 0:
        return 0
    keys = np.floor(dirs / rho).astype(np.int64)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    return int(counts.max())


def admissibility_check(F: TubeFamily, s: float, t: float) -> AdmissibilityReport:
    """Three-part check: pairwise distinctness, per-scale parallel counts
    against delta^-t, and total shading mass against delta^s."""
    delta = F.delta
    lines = F.lines()
    min_dist = _pairwise_min_dist(lines)
    distinct_ok = min_dist > delta

    dirs = F.directions()
    rhos, cover_sizes, parallel_counts = [], [], []
    for j in range(F.res.k, -1, -1):
        rho = 2.0 ** -j
        centers, _ = _greedy_line_cover(lines, rho)
        rhos.append(rho)
        cover_sizes.append(len(centers))
        parallel_counts.append(_max_parallel_bucket(dirs, rho))
    parallel_bound = delta ** -t
    parallel_ok = all(c <= parallel_bound + 1e-9 for c in parallel_counts)

    mass = F.mass()
    mass_bound = delta ** s
    mass_ok = mass >= mass_bound - 1e-12
    return AdmissibilityReport(
        delta=delta,
        s=s,
        t=t,
        distinct_ok=distinct_ok,
        min_pairwise_dist=min_dist,
        rhos=tuple(rhos),
        cover_sizes=tuple(cover_sizes),
        parallel_counts=tuple(parallel_counts),
        parallel_bound=parallel_bound,
        parallel_ok=parallel_ok,
        mass=mass,
        mass_bound=mass_bound,
        mass_ok=mass_ok,
        union_measure=F.union_shading().measure,
    )


@dataclasses.dataclass(frozen=True)
class ExtremalityReport:
    admissibility: AdmissibilityReport
    eps: float
    sigma: float
    union_measure: float
    union_bound: float
    union_ok: bool
    is_extremal: bool

    def margins(self) -> dict[str, float]:
        a = self.admissibility
        return {
            "distinct": a.min_pairwise_dist - a.delta,
            "parallel": a.parallel_bound - max(a.parallel_counts, default=0),
            "mass": a.mass - a.mass_bound,
            "union": self.union_bound - self.union_measure,
        }


def extremality_report(F: TubeFamily, eps: float, sigma: float) -> ExtremalityReport:
    """Admissible at (eps, eps) and union measure at most delta^(sigma-eps)."""
    if not 0.0 <= sigma <= F.res.n:
        raise ValueError(f"sigma must be in [0, {F.res.n}], got {sigma}")
    adm = admissibility_check(F, eps, eps)
    union_bound = F.delta ** (sigma - eps)
    union_ok = adm.union_measure <= union_bound + 1e-12
    return ExtremalityReport(
        admissibility=adm,
        eps=eps,
        sigma=sigma,
        union_measure=adm.union_measure,
        union_bound=union_bound,
        union_ok=union_ok,
        is_extremal=adm.all_ok() and union_ok,
    )


# -- refinements ---------------------------------------------------------------


def constant_multiplicity_refinement(F: TubeFamily) -> tuple[TubeFamily, int]:
    """Restrict shadings to the most massive dyadic multiplicity class.

    Cells are binned by multiplicity into classes [2^j, 2^(j+1)); the class
    with the largest total mass (sum of multiplicities, ties toward larger j)
    is kept.  Keeps at least 1/max(1, 2*ceil(log2 #T)) of the shading mass.
    """
    union, counts = F.multiplicity()
    if union.is_empty():
        return F, 1
    j_class = np.floor(np.log2(counts)).astype(np.int64)
    classes = np.unique(j_class)
    masses = [int(counts[j_class == j].sum()) for j in classes]
    best = classes[max(range(len(classes)), key=lambda i: (masses[i], classes[i]))]
    keep = CellSet(F.res, union.cells[j_class == best])
    return F.restrict(keep), int(2 ** best)


def cover_by_rho_tubes(F: TubeFamily, rho: float) -> TubeFamily:
    """Greedy cover of the family by rho-tubes with inherited shadings.

    Coarse coaxial lines are a first-fit subset of the fine lines in lex
    (v, p) order, so each fine line is within rho/2 of its center and the
    centers are pairwise more than rho/2 (hence rho/6) apart.  A coarse
    shading is the set of rho-cells meeting any covered member's shading,
    clipped to the coarse raster: a member sitting rho/2 away from its
    center can shade rho-cells off the coarse line, and those are dropped
    to keep the shading legal.
    """
    j = dyadic_exponent(rho)
    if j > F.res.k:
        raise ValueError(f"rho={rho} is finer than the family scale {F.delta}")
    res_c = Resolution(j, F.res.n)
    lines = F.lines()
    centers, assign = _greedy_line_cover(lines, rho)
    tubes_c, shadings_c = [], []
    for c in centers:
        tube_c = Tube(lines[c], res_c)
        member_cells = [
            coarse_cells(F.shadings[i], rho).cells
            for i in range(len(F))
            if assign[i] == c and not F.shadings[i].is_empty()
        ]
        if member_cells:
            shading = CellSet(res_c, np.concatenate(member_cells))
            shading = shading.intersection(rasterize(tube_c))
        else:
            shading = CellSet.empty(res_c)
        tubes_c.append(tube_c)
        shadings_c.append(shading)
    return TubeFamily(res_c, tuple(tubes_c), tuple(shadings_c))


def _require_cover(coarse: TubeFamily, fine: TubeFamily) -> float:
    rho = coarse.delta
    if fine.delta > rho:
        raise ValueError("fine family is coarser than the cover")
    clines = coarse.lines()
    for i, line in enumerate(fine.lines()):
        if not any(line_dist(line, cl) <= rho / 2.0 for cl in clines):
            raise ValueError(f"tube {i} is not covered by any coarse tube")
    return rho


def _coarse_positions(coarse: TubeFamily, fine: TubeFamily) -> tuple[np.ndarray, np.ndarray, int]:
    """Match each fine union cell to its coarse union cell.

    Returns (pos, hit, n_coarse): pos[i] is the index of the coarse cell
    containing fine cell i (valid where hit[i]).
    """
    E_c = coarse.union_shading()
    E_f = fine.union_shading()
    coarse_keys = _pack(E_c.res, E_c.cells)
    shift = fine.res.k - coarse.res.k
    if len(E_f) == 0 or len(coarse_keys) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool), len(coarse_keys)
    fine_up = _pack(E_c.res, E_f.cells >> shift)
    pos = np.searchsorted(coarse_keys, fine_up)
    pos_c = np.minimum(pos, len(coarse_keys) - 1)
    hit = coarse_keys[pos_c] == fine_up
    return pos_c, hit, len(coarse_keys)


def balanced_check(coarse: TubeFamily, fine: TubeFamily) -> bool:
    """True iff every rho-cube of the coarse union holds equally many fine cells."""
    _require_cover(coarse, fine)
    pos, hit, n_coarse = _coarse_positions(coarse, fine)
    if n_coarse == 0:
        return True
    counts = np.bincount(pos[hit], minlength=n_coarse)
    return int(counts.max()) == int(counts.min())


def balance_refine(coarse: TubeFamily, fine: TubeFamily) -> TubeFamily:
    """Trim fine shadings so each coarse rho-cube holds the same cell count.

    The target is the minimum count over coarse cubes; inside each cube the
    lexicographically first cells of the fine union are kept, and fine cells
    outside the coarse union are dropped.
    """
    _require_cover(coarse, fine)
    E_f = fine.union_shading()
    pos, hit, n_coarse = _coarse_positions(coarse, fine)
    if n_coarse == 0 or len(E_f) == 0:
        return fine.restrict(CellSet.empty(fine.res))
    counts = np.bincount(pos[hit], minlength=n_coarse)
    target = int(counts.min())
    # Stable sort by coarse cell keeps lex order of fine cells within a cube.
    rows = np.flatnonzero(hit)
    order = rows[np.argsort(pos[rows], kind="stable")]
    group_sizes = np.bincount(pos[rows], minlength=n_coarse)
    starts = np.concatenate([[0], np.cumsum(group_sizes)[:-1]])
    rank = np.arange(len(order)) - np.repeat(starts, group_sizes)
    kept = CellSet(fine.res, E_f.cells[order[rank < target]])
    return fine.restrict(kept)


# -- unit rescaling ------------------------------------------------------------


def _rotation_to_axis(w: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector w to e_n (identity when w = e_n)."""
    n = len(w)
    b = np.zeros(n)
    b[-1] = 1.0
    dot = float(w @ b)
    if dot > 1.0 - 1e-15:
        return np.eye(n)
    u = w + b
    return np.eye(n) - np.outer(u, u) / (1.0 + dot) + 2.0 * np.outer(b, w)


@dataclasses.dataclass(frozen=True)
class RescaleMap:
    """Affine map: rotate a coarse tube's line to the x_n-axis, then dilate
    transverse coordinates by c/rho and the axis by c."""

    rotation: np.ndarray
    offset: np.ndarray
    rho: float
    c: float

    @property
    def n(self) -> int:
        return len(self.offset)

    @property
    def det_linear(self) -> float:
        return self.c ** self.n * self.rho ** (1 - self.n)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) @ self.rotation.T - self.offset
        out = pts * (self.c / self.rho)
        out[:, -1] = pts[:, -1] * self.c
        return out

    def line_image(self, line: LineL) -> LineL:
        v = self.rotation @ line.v_vec
        y0 = self.rotation @ line.base_point() - self.offset
        p_hat = (y0 - (y0[-1] / v[-1]) * v)[:-1]
        vnew = np.append(v[:-1] / self.rho, v[-1])
        vnew /= np.linalg.norm(vnew)
        return LineL(p=tuple(self.c * p_hat / self.rho), v=tuple(vnew))


def unit_rescale(F: TubeFamily, coarse: Tube) -> tuple[TubeFamily, RescaleMap]:
    """Rescale a covered family to scale delta/rho in coarse-tube coordinates.

    The coarse line goes to the x_n-axis; the dilation constant c <= 1 is the
    largest keeping every image position inside |p_i| <= 1/n.  New shadings
    are the delta/rho-cells containing images of old shading cell centers,
    clipped to the image tube's raster.
    """
    rho = coarse.delta
    if rho <= F.delta:
        raise ValueError(f"coarse scale {rho} must exceed the family scale {F.delta}")
    for i, t in enumerate(F.tubes):
        if line_dist(t.line, coarse.line) > rho / 2.0:
            raise ValueError(f"tube {i} is not covered by the coarse tube")
    n = F.res.n
    k_new = F.res.k - coarse.res.k
    res_new = Resolution(k_new, n)

    # Send the midpoint of the coarse line's cube chunk to the origin, so the
    # image family is centered rather than hanging off one end of the cube.
    U = _rotation_to_axis(coarse.line.v_vec)
    q = coarse.line.base_point()
    w = coarse.line.v_vec
    s_lo, s_hi = -math.inf, math.inf
    for i in range(n):
        if w[i] != 0.0:
            t0, t1 = (-1.0 - q[i]) / w[i], (1.0 - q[i]) / w[i]
            s_lo, s_hi = max(s_lo, min(t0, t1)), min(s_hi, max(t0, t1))
    s_mid = 0.5 * (s_lo + s_hi) if s_lo <= s_hi else 0.0
    offset = U @ (q + s_mid * w)

    # Largest c <= 1 keeping all image positions inside the standard class.
    p_hats = []
    for t in F.tubes:
        v = U @ t.line.v_vec
        y0 = U @ t.line.base_point() - offset
        p_hats.append((y0 - (y0[-1] / v[-1]) * v)[:-1])
    c = 1.0
    for p_hat in p_hats:
        top = float(np.abs(p_hat).max())
        if top > 0:
            c = min(c, rho / (n * top))
    phi = RescaleMap(rotation=U, offset=offset, rho=rho, c=c)

    tubes_new, shadings_new = [], []
    for t, y in F.entries():
        t_new = Tube(phi.line_image(t.line), res_new)
        if y.is_empty():
            shadings_new.append(CellSet.empty(res_new))
        else:
            img = CellSet.from_points(res_new, phi.apply(y.centers()))
            shadings_new.append(img.intersection(rasterize(t_new)))
        tubes_new.append(t_new)
    return TubeFamily(res_new, tuple(tubes_new), tuple(shadings_new)), phi
