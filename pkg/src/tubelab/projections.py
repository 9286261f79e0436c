"""Projection-side operations on planar cell sets.

Energies, direction selection against a direction/point incidence graph,
two-ends reductions, anisotropic renormalization, dyadic coarsening, pair
pruning against line concentration, and the structured/spread dichotomy for
dot-product sets.

Everything here is deterministic: searches scan fixed dyadic nets in a fixed
order (scale, then angle, then offset), ties are broken by the first scan
hit, and every returned object either carries enough data to be recounted or
re-verifies itself from its inputs.  Directions are unit vectors
``e(theta) = (cos theta, sin theta)`` and a direction projects a point by the
dot product ``e(theta) . x`` throughout.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .grid import (
    ADCertificate,
    CellSet,
    FrostmanCertificate,
    Resolution,
    adset_constant,
    coarse_cells,
    dyadic_exponent,
    frostman_constant,
)
from .hypergraph import KPartiteHypergraph, uniform_density_refine

__all__ = [
    "DirectionSet",
    "KaufmanSelection",
    "TwoEndsResult",
    "RenormalizeResult",
    "CoarsenResult",
    "ThinTubesCertificate",
    "AWitness",
    "BWitness",
    "DichotomyVerdict",
    "riesz_energy",
    "directional_energy",
    "radial_projection",
    "kaufman_select",
    "two_ends_reduce",
    "anisotropic_renormalize",
    "coarsen",
    "thin_tubes_prune",
    "dot_product_set",
    "sw_dichotomy",
]

TWO_PI = 2.0 * math.pi

# Strip inflation used when flagging concentrated pairs: a surviving partner
# within r of a tested line pins that line to angle <= 2r (the pair is >= 1/2
# apart), so over a point spread of diameter <= 3 the whole r-strip sits
# inside the 8r-strip of the surviving pair.
CAPTURE = 8.0
MAX_SPREAD = 3.0


def _check_exponent(r: float) -> None:
    if not 0.0 < r < 2.0:
        raise ValueError(f"energy exponent must lie in (0, 2), got {r}")


def _pair_energy(vals: np.ndarray, r: float, floor: float) -> float:
    # all ordered pairs, diagonal included, each weighted 1/m^2; distances
    # are floored so the diagonal contributes floor^-r
    m = len(vals)
    total = 0.0
    chunk = max(1, int(2e7) // max(1, m))
    for lo in range(0, m, chunk):
        diff = vals[lo : lo + chunk, None, :] - vals[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.maximum(dist, floor, out=dist)
        total += float((dist ** -r).sum())
    return total / (m * m)


def riesz_energy(F: CellSet, r: float) -> float:
    """Discrete r-energy of F: the mean of max(|x-y|, delta/2)^-r over
    ordered pairs of cell centers."""
    _check_exponent(r)
    if F.is_empty():
        raise ValueError("riesz_energy: empty set")
    return _pair_energy(F.centers(), r, F.res.delta / 2.0)


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def directional_energy(theta: float, F: CellSet, r: float) -> float:
    """r-energy of the dot projection e(theta) . F, with the same delta/2
    floor as :func:`riesz_energy`.

    A set inside a line orthogonal to e(theta) collapses to a point and
    returns exactly (delta/2)^-r, the maximum possible value.
    """
    _check_exponent(r)
    if F.is_empty():
        raise ValueError("directional_energy: empty set")
    if F.res.n != 2:
        raise ValueError("directional_energy requires planar cells")
    vals = (F.centers() @ _unit(theta)).reshape(-1, 1)
    return _pair_energy(vals, r, F.res.delta / 2.0)


# -- direction sets -----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class DirectionSet:
    """A finite set of directions stored as 1-D angle cells.

    Cell i covers angles [i*delta, (i+1)*delta); indices lie in
    [0, 2pi/delta], so each direction has one representative and the last
    cell absorbs the wrap-around sliver below 2pi.  In graphs pairing
    directions with cells, direction vertex j is row j of ``cells.cells``.
    """

    cells: CellSet

    def __post_init__(self) -> None:
        if self.cells.res.n != 1:
            raise ValueError("DirectionSet requires 1-D angle cells")
        if len(self.cells):
            lo, hi = self.cells.bbox()
            if lo[0] < 0 or hi[0] > int(TWO_PI / self.cells.res.delta):
                raise ValueError("direction indices must cover angles in [0, 2pi)")

    @property
    def res(self) -> Resolution:
        return self.cells.res

    @property
    def delta(self) -> float:
        return self.cells.res.delta

    @classmethod
    def from_angles(cls, res: Resolution, angles: Sequence[float]) -> "DirectionSet":
        a = np.mod(np.asarray(angles, dtype=float), TWO_PI)
        idx = np.floor(a / res.delta).astype(np.int64).reshape(-1, 1)
        return cls(CellSet(res, idx))

    @classmethod
    def all_directions(cls, res: Resolution) -> "DirectionSet":
        idx = np.arange(int(TWO_PI / res.delta) + 1, dtype=np.int64).reshape(-1, 1)
        return cls(CellSet(res, idx))

    def angles(self) -> np.ndarray:
        """Midpoint angle of each direction cell, ascending."""
        return (self.cells.cells[:, 0] + 0.5) * self.delta

    def unit_vectors(self) -> np.ndarray:
        a = self.angles()
        return np.stack([np.cos(a), np.sin(a)], axis=1)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def measure(self) -> float:
        return len(self.cells) * self.delta


def radial_projection(A: CellSet, a: Sequence[float]) -> DirectionSet:
    """Directions from the vantage point a to the cell centers of A.

    The vantage point must be at distance >= 4*delta from every closed cell
    of A, so each cell subtends only a few angle cells.
    """
    if A.is_empty():
        raise ValueError("radial_projection: empty set")
    if A.res.n != 2:
        raise ValueError("radial_projection requires planar cells")
    p = np.asarray(a, dtype=float)
    d = A.res.delta
    lo = A.cells * d
    gap = np.maximum(np.maximum(lo - p, p - (lo + d)), 0.0)
    dist = np.hypot(gap[:, 0], gap[:, 1])
    if dist.min() < 4.0 * d - 1e-12:
        raise ValueError("vantage point closer than 4*delta to the set")
    v = A.centers() - p
    ang = np.mod(np.arctan2(v[:, 1], v[:, 0]), TWO_PI)
    idx = np.floor(ang / d).astype(np.int64).reshape(-1, 1)
    return DirectionSet(CellSet(Resolution(A.res.k, 1), idx))


# -- graph-driven direction selection ------------------------------------------


@dataclasses.dataclass(frozen=True)
class KaufmanSelection:
    """Outcome of :func:`kaufman_select`.

    theta is the midpoint angle of the chosen direction cell, fiber the cells
    paired with it after refinement, projected the 1-D cell set of
    e(theta) . fiber, and covering its cardinality.  degenerate flags a
    multi-cell fiber whose projection collapsed to a single cell.
    """

    theta: float
    theta_index: int
    survivors: DirectionSet
    fiber: CellSet
    projected: CellSet
    covering: int
    energy: float
    degenerate: bool


def kaufman_select(
    directions: DirectionSet, F: CellSet, H: KPartiteHypergraph, r: float
) -> KaufmanSelection:
    """Refine a direction/cell incidence graph, then pick the surviving
    direction whose paired cells project with the least r-energy.

    Vertex i of part 0 is direction i (row order of ``directions``), vertex
    j of part 1 is cell j of F.  Refinement at eps = 1/2 keeps at least half
    the edges while each survivor pairs with at most len(F) cells, so the
    survivor count is at least (1/2) * density(H) * len(directions); that
    bound is exact, not asymptotic.  Ties in energy go to the smallest
    angle.
    """
    _check_exponent(r)
    if F.res.n != 2:
        raise ValueError("kaufman_select requires planar cells")
    if H.k != 2 or H.part_sizes != (len(directions), len(F)):
        raise ValueError(
            f"graph parts {H.part_sizes} do not match "
            f"({len(directions)}, {len(F)})"
        )
    if H.n_edges == 0:
        raise ValueError("kaufman_select: empty incidence graph")
    refined = uniform_density_refine(H, 0.5)
    if refined.n_edges == 0:  # refine keeps >= half the edges
        raise RuntimeError("refinement emptied a nonempty graph")
    edges = refined.edges
    surv = np.unique(edges[:, 0])
    survivors = DirectionSet(CellSet(directions.res, directions.cells.cells[surv]))
    angles = directions.angles()
    starts = np.searchsorted(edges[:, 0], surv, side="left")
    ends = np.searchsorted(edges[:, 0], surv, side="right")
    best = None
    for vi, s, e in zip(surv, starts, ends):
        fiber = CellSet(F.res, F.cells[edges[s:e, 1]])
        en = directional_energy(angles[vi], fiber, r)
        if best is None or en < best[0]:
            best = (en, int(vi), fiber)
    energy, theta_index, fiber = best
    theta = float(angles[theta_index])
    vals = fiber.centers() @ _unit(theta)
    proj = np.floor(vals / F.res.delta).astype(np.int64).reshape(-1, 1)
    projected = CellSet(Resolution(F.res.k, 1), proj)
    covering = len(projected)
    return KaufmanSelection(
        theta=theta,
        theta_index=theta_index,
        survivors=survivors,
        fiber=fiber,
        projected=projected,
        covering=covering,
        energy=energy,
        degenerate=covering == 1 and len(fiber) > 1,
    )


# -- two-ends reduction ----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TwoEndsResult:
    """A strip (angle theta, center offset, half-width w) and the subset of
    the input inside it, maximizing count * w^-zeta over the dyadic net."""

    w: float
    theta: float
    offset: float
    subset: CellSet
    score: float
    depth: int


def _strip_counts(p: np.ndarray, offs: np.ndarray, w: float) -> np.ndarray:
    # p sorted; strips |x - c| <= w, center convention
    return np.searchsorted(p, offs + w, side="right") - np.searchsorted(
        p, offs - w, side="left"
    )


def two_ends_reduce(A: CellSet, zeta: float, _depth: int = 0) -> TwoEndsResult:
    """Pass to a subset concentrated in one strip but spread within it.

    Scans every strip of the dyadic net (angles i*delta in [0, pi), offsets
    on the delta-grid of the projected range, dyadic half-widths w in
    [delta, 1]) and keeps the subset maximizing count * w^-zeta; ties go to
    the smallest w, then the lexicographically first (theta, offset).  Both
    guarantees follow from maximality over that same net: the subset holds
    at least (1/2) * w^zeta of the input, and its mass within any net strip
    of half-width r <= w is at most (r/w)^zeta times its size.  The checks
    are still executed; a violation (impossible for in-range inputs) retries
    inside the offending strip, giving up after k levels.
    """
    if not 0.0 < zeta <= 0.25:
        raise ValueError(f"zeta must lie in (0, 1/4], got {zeta}")
    if A.is_empty():
        raise ValueError("two_ends_reduce: empty set")
    if A.res.n != 2:
        raise ValueError("two_ends_reduce requires planar cells")
    res = A.res
    d = res.delta
    side = 1 << res.k
    lo, hi = A.bbox()
    if lo.min() < -side or hi.max() >= side:
        raise ValueError("two_ends_reduce expects cells inside [-1, 1]^2")
    if _depth > res.k:
        raise RuntimeError("two-ends recursion exceeded the resolution depth")

    centers = A.centers()
    m = len(A)
    n_dirs = int(math.ceil(math.pi / d))
    projs = []
    for i in range(n_dirs):
        th = i * d
        raw = centers @ np.array([-math.sin(th), math.cos(th)])
        p = np.sort(raw)
        offs = np.arange(math.floor(p[0] / d), math.ceil(p[-1] / d) + 1) * d
        projs.append((raw, p, offs))

    best = None  # (score, w, theta_i, offset)
    for j in range(res.k, -1, -1):
        w = 2.0 ** -j
        for i in range(n_dirs):
            _, p, offs = projs[i]
            counts = _strip_counts(p, offs, w)
            a = int(np.argmax(counts))
            score = counts[a] * w ** -zeta
            if best is None or score > best[0]:
                best = (score, w, i, float(offs[a]))
    score, w, ti, c = best
    theta = ti * d
    raw = projs[ti][0]
    subset = CellSet(res, A.cells[np.abs(raw - c) <= w])

    ok = len(subset) >= 0.5 * w ** zeta * m - 1e-9
    worst = None  # (violation score, theta_i, offset, r)
    if ok:
        sub_centers = subset.centers()
        msub = len(subset)
        for i in range(n_dirs):
            th = i * d
            p = np.sort(sub_centers @ np.array([-math.sin(th), math.cos(th)]))
            offs = np.arange(math.floor(p[0] / d), math.ceil(p[-1] / d) + 1) * d
            for jj in range(res.k, -1, -1):
                rr = 2.0 ** -jj
                if rr > w:
                    continue
                counts = _strip_counts(p, offs, rr)
                a = int(np.argmax(counts))
                if counts[a] > (rr / w) ** zeta * msub + 1e-9:
                    ok = False
                    v = counts[a] * rr ** -zeta
                    if worst is None or v > worst[0]:
                        worst = (v, i, float(offs[a]), rr)
    if ok:
        return TwoEndsResult(w, theta, c, subset, float(score), _depth)

    if worst is None:  # mass bound failed with nothing to recurse into
        raise RuntimeError("two-ends invariant failed without a witness strip")
    _, wi, wc, wr = worst
    th = wi * d
    p = subset.centers() @ np.array([-math.sin(th), math.cos(th)])
    inner = CellSet(res, subset.cells[np.abs(p - wc) <= wr])
    return two_ends_reduce(inner, zeta, _depth + 1)


# -- anisotropic renormalization ---------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RenormalizeResult:
    """Pigeonholed subset and its image under the map sending the rectangle
    [x0, x0+1] x [y0, y0+w] onto the unit square."""

    kept: CellSet
    image: CellSet
    rect: tuple[float, float, float]
    levels: tuple[float, ...]
    input_certificate: ADCertificate
    image_certificate: ADCertificate


def _occupancy_classes(keys: np.ndarray) -> tuple[np.ndarray, int]:
    """Boolean keep-mask picking the heaviest dyadic occupancy class.

    Rows sharing a key form one cube; cubes are binned by floor(log2(count))
    and the class with the largest total count wins, ties to the larger
    exponent.  Returns the mask and the winning exponent.
    """
    _, inv, occ = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    cls = np.floor(np.log2(occ)).astype(np.int64)
    mass = np.bincount(cls, weights=occ.astype(float))
    winner = int(np.flatnonzero(mass == mass.max()).max())
    return (cls == winner)[inv], winner


def anisotropic_renormalize(
    E: CellSet,
    rect: tuple[float, float, float],
    eps: float,
    max_constant: float | None = None,
) -> RenormalizeResult:
    """Renormalize a set inside a 1 x w axis-aligned rectangle to the unit
    square, pigeonholing occupancies so the image stays a dimension-1 set.

    rect = (x0, y0, w) describes [x0, x0+1] x [y0, y0+w] with w dyadic,
    2*delta <= w <= 1 and w >= delta^(1-eps).  Occupancy classes are
    equalized at the scales 2^-(T*j), T = ceil(1/eps), inside the image
    square; the kept subset must retain a (delta/w)^eps fraction of E
    (RuntimeError otherwise, which no in-contract input triggers at these
    scales).  The image is the set of delta/w-cells overlapping the image of
    the kept cells in positive area, and both the input and the image carry
    alpha = 1 covering certificates.
    """
    if E.is_empty():
        raise ValueError("anisotropic_renormalize: empty set")
    if E.res.n != 2:
        raise ValueError("anisotropic_renormalize requires planar cells")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    x0, y0, w = rect
    jw = dyadic_exponent(w)
    d = E.res.delta
    if not 2.0 * d <= w <= 1.0:
        raise ValueError(f"rectangle height w={w} outside [2*delta, 1]")
    if w < d ** (1.0 - eps) - 1e-12:
        raise ValueError(f"rectangle height w={w} below delta^(1-eps)")
    lo = E.cells * d
    tol = 1e-9
    inside = (
        (lo[:, 0] >= x0 - tol)
        & (lo[:, 0] + d <= x0 + 1.0 + tol)
        & (lo[:, 1] >= y0 - tol)
        & (lo[:, 1] + d <= y0 + w + tol)
    )
    if not inside.all():
        raise ValueError("cells stick out of the rectangle")
    input_cert = adset_constant(E, 1.0, d)
    if max_constant is not None and input_cert.constant > max_constant:
        raise ValueError(
            f"input covering constant {input_cert.constant:.6g} exceeds "
            f"the claimed {max_constant:.6g}"
        )

    kp = E.res.k - jw
    T = int(math.ceil(1.0 / eps))
    levels = tuple(2.0 ** -(T * j) for j in range(1, kp) if T * j < kp)
    centers = E.centers()
    u = centers[:, 0] - x0
    v = (centers[:, 1] - y0) / w
    alive = np.arange(len(E))
    for r in levels:
        keys = np.stack(
            [np.floor(u[alive] / r), np.floor(v[alive] / r)], axis=1
        ).astype(np.int64)
        keep, _ = _occupancy_classes(keys)
        alive = alive[keep]
    kept = CellSet(E.res, E.cells[alive])
    if len(kept) < (d / w) ** eps * len(E) - 1e-9:
        raise RuntimeError("pigeonholing lost more than the (delta/w)^eps margin")

    dp = d / w
    res_img = Resolution(kp, 2)
    ulo = kept.cells[:, 0] * d - x0
    vlo = (kept.cells[:, 1] * d - y0) / w
    rows = []
    for du in (0.0, 1.0):
        for dv in (0.0, 1.0):
            ix = np.floor((ulo + du * d) / dp + (1e-9 if du == 0 else -1e-9))
            iy = np.floor((vlo + dv * dp) / dp + (1e-9 if dv == 0 else -1e-9))
            rows.append(np.stack([ix, iy], axis=1).astype(np.int64))
    image = CellSet(res_img, np.concatenate(rows, axis=0))
    image_cert = adset_constant(image, 1.0, dp)
    return RenormalizeResult(
        kept=kept,
        image=image,
        rect=(float(x0), float(y0), float(w)),
        levels=levels,
        input_certificate=input_cert,
        image_certificate=image_cert,
    )


# -- dyadic coarsening ----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class CoarsenResult:
    """Occupancy-equalized subset and its rho-cell coarsening.

    Every rho-cube of ``coarse`` holds exactly ``occupancy`` cells of
    ``kept`` (the lexicographically first ones of the winning class)."""

    kept: CellSet
    coarse: CellSet
    occupancy: int
    class_exponent: int
    input_certificate: FrostmanCertificate
    coarse_certificate: FrostmanCertificate


def coarsen(E: CellSet, rho: float, alpha: float) -> CoarsenResult:
    """Pigeonhole E so each rho-cube carries 0 or exactly m cells, then
    coarsen to the rho-grid.

    Cubes are classed by floor(log2(occupancy)); the heaviest class wins
    (ties to the larger exponent) and its cubes are trimmed to the minimum
    occupancy of the class.  The subset keeps at least a 1/(2k) fraction of
    E for in-contract inputs (RuntimeError if not), and the coarse set's
    Frostman constant degrades by at most an O(k) factor.
    """
    if E.is_empty():
        raise ValueError("coarsen: empty set")
    j = dyadic_exponent(rho)
    if j > E.res.k:
        raise ValueError(f"rho={rho} is finer than the grid delta={E.res.delta}")
    shift = E.res.k - j
    keys = E.cells >> shift
    _, inv, occ = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    cls = np.floor(np.log2(occ)).astype(np.int64)
    mass = np.bincount(cls, weights=occ.astype(float))
    winner = int(np.flatnonzero(mass == mass.max()).max())
    m = int(occ[cls == winner].min())

    idx = np.flatnonzero((cls == winner)[inv])
    g = inv[idx]
    order = np.argsort(g, kind="stable")
    gs = g[order]
    starts = np.flatnonzero(np.r_[True, np.diff(gs) > 0])
    sizes = np.diff(np.r_[starts, len(gs)])
    ranks = np.arange(len(gs)) - np.repeat(starts, sizes)
    final = idx[order[ranks < m]]
    kept = CellSet(E.res, E.cells[np.sort(final)])
    if len(kept) < len(E) / (2.0 * max(1, E.res.k)) - 1e-9:
        raise RuntimeError("occupancy classes split the set below the 1/(2k) margin")
    coarse = coarse_cells(kept, rho)
    return CoarsenResult(
        kept=kept,
        coarse=coarse,
        occupancy=m,
        class_exponent=winner,
        input_certificate=frostman_constant(E, alpha),
        coarse_certificate=frostman_constant(coarse, alpha),
    )


# -- pruning pairs against line concentration -------------------------------------


def _pair_badness(
    c1: np.ndarray, c2: np.ndarray, K: float, radii: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Mask of surviving pairs plus per-scale flag counts.

    Pair (i, j) dies at scale r when the CAPTURE*r strip around the line
    through (c1[i], c2[j]) holds at least K * r^(1/4) * len(c2) points of
    c2.
    """
    m1, m2 = len(c1), len(c2)
    mask = np.ones((m1, m2), dtype=bool)
    flagged = np.zeros(len(radii), dtype=np.int64)
    for i in range(m1):
        P = c2 - c1[i]
        norm = np.hypot(P[:, 0], P[:, 1])
        cross = P[:, 0][:, None] * P[:, 1][None, :] - P[:, 1][:, None] * P[:, 0][None, :]
        D = np.abs(cross) / norm[:, None]
        for s, r in enumerate(radii):
            bad = (D <= CAPTURE * r + 1e-12).sum(axis=1) >= K * r ** 0.25 * m2 - 1e-9
            flagged[s] += int(bad.sum())
            mask[i, bad] = False
    return mask, flagged


@dataclasses.dataclass(frozen=True, eq=False)
class ThinTubesCertificate:
    """Surviving pairs of a two-set family after removing, at every dyadic
    scale delta <= r < K^-4, the pairs whose joining line's CAPTURE*r strip
    is r^(1/4)-heavy in the second set.

    By the capture-factor argument, no surviving pair leaves a net strip of
    half-width r holding K * r^(1/4) * |A2| survivors, so the certificate is
    verified by construction; :meth:`verify` recomputes it bit for bit.
    """

    a1: CellSet
    a2: CellSet
    K: float
    t: float
    capture: float
    alpha_budget: float
    radii: tuple[float, ...]
    pair_mask: np.ndarray
    flagged_per_scale: tuple[int, ...]

    @property
    def density(self) -> float:
        return float(self.pair_mask.mean())

    @property
    def meets_budget(self) -> bool:
        return self.density >= 1.0 - self.a1.res.delta ** self.alpha_budget

    def verify(self) -> bool:
        """Recompute the pruning and recount survivor strips."""
        c1, c2 = self.a1.centers(), self.a2.centers()
        mask, flagged = _pair_badness(c1, c2, self.K, self.radii)
        if not np.array_equal(mask, self.pair_mask):
            return False
        if tuple(int(x) for x in flagged) != self.flagged_per_scale:
            return False
        m2 = len(c2)
        for i in range(len(c1)):
            cols = mask[i]
            if not cols.any():
                continue
            P = c2 - c1[i]
            norm = np.hypot(P[:, 0], P[:, 1])
            cross = (
                P[:, 0][:, None] * P[cols, 1][None, :]
                - P[:, 1][:, None] * P[cols, 0][None, :]
            )
            D = np.abs(cross) / norm[:, None]
            for r in self.radii:
                counts = (D <= r + 1e-12).sum(axis=1)
                if counts.max() >= self.K * r ** 0.25 * m2 - 1e-9:
                    return False
        return True

    def report(self) -> str:
        lines = [
            f"pairs: {self.pair_mask.size}",
            f"kept: {int(self.pair_mask.sum())}",
            f"density: {self.density:.12g}",
            f"K: {self.K:.12g}",
            f"t: {self.t:.12g}",
            f"scales: {len(self.radii)}",
            f"meets_budget: {self.meets_budget}",
        ]
        return "\n".join(lines)

    def scale_table(self) -> str:
        rows = ["r,flagged"]
        for r, f in zip(self.radii, self.flagged_per_scale):
            rows.append(f"{r:.12g},{f}")
        return "\n".join(rows)


def thin_tubes_prune(
    A1: CellSet, A2: CellSet, K: float, alpha_budget: float
) -> ThinTubesCertificate:
    """Remove pairs concentrated near lines and certify the survivors.

    A1 and A2 must share a planar grid, sit at least 1/2 apart pairwise,
    and span at most 3 (so the capture factor covers every tested strip).
    The scale range delta <= r < K^-4 is empty for large K, in which case
    everything survives.
    """
    if A1.res != A2.res or A1.res.n != 2:
        raise ValueError("thin_tubes_prune requires two planar sets on one grid")
    if A1.is_empty() or A2.is_empty():
        raise ValueError("thin_tubes_prune: empty set")
    if K <= 0 or alpha_budget <= 0:
        raise ValueError("K and alpha_budget must be positive")
    c1, c2 = A1.centers(), A2.centers()
    dmin, dmax = np.inf, 0.0
    chunk = max(1, int(2e7) // max(1, len(c2)))
    for lo in range(0, len(c1), chunk):
        diff = c1[lo : lo + chunk, None, :] - c2[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dmin = min(dmin, float(dist.min()))
        dmax = max(dmax, float(dist.max()))
    if dmin < 0.5 - 1e-12:
        raise ValueError(f"sets come within {dmin:.6g} < 1/2 of each other")
    if dmax > MAX_SPREAD + 1e-12:
        raise ValueError(f"pair span {dmax:.6g} exceeds {MAX_SPREAD}")
    d = A1.res.delta
    radii = tuple(
        2.0 ** -j for j in range(A1.res.k, -1, -1) if 2.0 ** -j < K ** -4.0
    )
    mask, flagged = _pair_badness(c1, c2, K, radii)
    mask.setflags(write=False)
    return ThinTubesCertificate(
        a1=A1,
        a2=A2,
        K=float(K),
        t=0.25,
        capture=CAPTURE,
        alpha_budget=float(alpha_budget),
        radii=radii,
        pair_mask=mask,
        flagged_per_scale=tuple(int(x) for x in flagged),
    )


# -- dot-product sets and the structured/spread dichotomy ---------------------------


def dot_product_set(
    A1: CellSet, A2: CellSet, A3: CellSet, G: KPartiteHypergraph
) -> CellSet:
    """1-D cells of (x1 - x2) . x3 over the triples of G.

    Vertex i of part j is row i of the j-th set's cells; an empty edge set
    gives the empty 1-D set.  Shrinking G shrinks the output.
    """
    sets = (A1, A2, A3)
    for s in sets:
        if s.res != A1.res or s.res.n != 2:
            raise ValueError("dot_product_set requires three planar sets on one grid")
    if G.k != 3 or G.part_sizes != tuple(len(s) for s in sets):
        raise ValueError(
            f"graph parts {G.part_sizes} do not match set sizes "
            f"{tuple(len(s) for s in sets)}"
        )
    res1 = Resolution(A1.res.k, 1)
    if G.n_edges == 0:
        return CellSet.empty(res1)
    c1, c2, c3 = (s.centers() for s in sets)
    d = A1.res.delta
    out = []
    chunk = 5_000_000
    for lo in range(0, G.n_edges, chunk):
        e = G.edges[lo : lo + chunk]
        vals = ((c1[e[:, 0]] - c2[e[:, 1]]) * c3[e[:, 2]]).sum(axis=1)
        out.append(np.floor(vals / d).astype(np.int64))
    return CellSet(res1, np.concatenate(out).reshape(-1, 1))


@dataclasses.dataclass(frozen=True)
class AWitness:
    """Structured side: orthogonal net lines heavy for all three sets."""

    theta: float
    offset: float
    offset_perp: float
    count1: int
    count2: int
    count3: int


@dataclasses.dataclass(frozen=True)
class BWitness:
    """Spread side: a window of the dot-product set with large covering."""

    rho: float
    interval: tuple[float, float]
    covering: int
    threshold: float


@dataclasses.dataclass(frozen=True)
class DichotomyVerdict:
    mode: str
    a_witness: AWitness | None
    b_witness: BWitness | None
    count_threshold: float

    def report(self) -> str:
        lines = [f"mode: {self.mode}", f"count_threshold: {self.count_threshold:.12g}"]
        a, b = self.a_witness, self.b_witness
        if a is not None:
            lines += [
                f"a_theta: {a.theta:.12g}",
                f"a_offset: {a.offset:.12g}",
                f"a_offset_perp: {a.offset_perp:.12g}",
                f"a_counts: {a.count1} {a.count2} {a.count3}",
            ]
        if b is not None:
            lines += [
                f"b_rho: {b.rho:.12g}",
                f"b_interval: {b.interval[0]:.12g} {b.interval[1]:.12g}",
                f"b_covering: {b.covering}",
                f"b_threshold: {b.threshold:.12g}",
            ]
        return "\n".join(lines)


def _scan_structured(
    A1: CellSet, A2: CellSet, A3: CellSet, thresh: float
) -> AWitness | None:
    d = A1.res.delta
    c1, c2, c3 = A1.centers(), A2.centers(), A3.centers()
    n_dirs = int(math.ceil(math.pi / d))
    for i in range(n_dirs):
        th = i * d
        nh = np.array([-math.sin(th), math.cos(th)])
        p1 = np.sort(c1 @ nh)
        p2 = np.sort(c2 @ nh)
        lo = math.floor(min(p1[0], p2[0]) / d)
        hi = math.ceil(max(p1[-1], p2[-1]) / d)
        offs = np.arange(lo, hi + 1) * d
        cnt1 = _strip_counts(p1, offs, d)
        cnt2 = _strip_counts(p2, offs, d)
        ok = (cnt1 >= thresh - 1e-9) & (cnt2 >= thresh - 1e-9)
        if not ok.any():
            continue
        eh = np.array([math.cos(th), math.sin(th)])
        p3 = np.sort(c3 @ eh)
        offs3 = np.arange(math.floor(p3[0] / d), math.ceil(p3[-1] / d) + 1) * d
        cnt3 = _strip_counts(p3, offs3, d)
        ok3 = cnt3 >= thresh - 1e-9
        if not ok3.any():
            continue
        j = int(np.flatnonzero(ok)[0])
        j3 = int(np.flatnonzero(ok3)[0])
        return AWitness(
            theta=th,
            offset=float(offs[j]),
            offset_perp=float(offs3[j3]),
            count1=int(cnt1[j]),
            count2=int(cnt2[j]),
            count3=int(cnt3[j3]),
        )
    return None


def _scan_spread(dots: CellSet, eps: float, eta: float) -> BWitness | None:
    if dots.is_empty():
        return None
    k = dots.res.k
    d = dots.res.delta
    idx = np.unique(dots.cells[:, 0])
    for jr in range(k, -1, -1):
        rho = 2.0 ** -jr
        cells_r = np.unique(idx >> (k - jr))
        min_len = d ** -eta * rho
        for e in range(3, -jr - 1, -1):  # window lengths 8 down to rho, dyadic
            L = 2.0 ** e
            if L < min_len - 1e-12:
                break
            W = 1 << (e + jr)
            need = W ** (1.0 - eps)
            if len(cells_r) < need - 1e-9:
                continue
            ts = np.arange(cells_r[0] - W + 1, cells_r[-1] + 1)
            counts = np.searchsorted(cells_r, ts + W, side="left") - np.searchsorted(
                cells_r, ts, side="left"
            )
            hits = np.flatnonzero(counts >= need - 1e-9)
            if len(hits):
                t = int(ts[hits[0]])
                return BWitness(
                    rho=rho,
                    interval=(t * rho, t * rho + L),
                    covering=int(counts[hits[0]]),
                    threshold=float(need),
                )
    return None


def sw_dichotomy(
    A1: CellSet,
    A2: CellSet,
    A3: CellSet,
    G: KPartiteHypergraph,
    eps: float,
    eta: float,
) -> DichotomyVerdict:
    """Decide whether a triple system is line-structured or dot-spread.

    Preconditions: the sets are planar on one grid with alpha = 1 covering
    constants at most delta^-eta, and G holds at least delta^(eta-3)
    triples.  Mode A reports orthogonal net lines ell, ell_perp whose
    delta-strips hold at least delta^(eps-1) cells of A1 and A2 (same
    strip) and of A3 (the perpendicular one); mode B reports a window I of
    the dot-product set, |I| >= delta^-eta * rho, covered by at least
    (|I|/rho)^(1-eps) rho-cells.  Both scans always run and the mode states
    exactly which witnesses exist.
    """
    sets = (A1, A2, A3)
    for s in sets:
        if s.res != A1.res or s.res.n != 2:
            raise ValueError("sw_dichotomy requires three planar sets on one grid")
        if s.is_empty():
            raise ValueError("sw_dichotomy: empty set")
    if G.k != 3 or G.part_sizes != tuple(len(s) for s in sets):
        raise ValueError(
            f"graph parts {G.part_sizes} do not match set sizes "
            f"{tuple(len(s) for s in sets)}"
        )
    if G.n_edges == 0:
        raise ValueError("sw_dichotomy: empty edge set")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    d = A1.res.delta
    for s in sets:
        cert = adset_constant(s, 1.0, d)
        if cert.constant > d ** -eta * (1.0 + 1e-9):
            raise ValueError(
                f"covering constant {cert.constant:.6g} exceeds delta^-eta "
                f"= {d ** -eta:.6g}"
            )
    if G.n_edges < d ** (eta - 3.0) - 1e-9:
        raise ValueError(
            f"{G.n_edges} triples fall short of delta^(eta-3) = {d ** (eta - 3.0):.6g}"
        )
    thresh = d ** (eps - 1.0)
    a_wit = _scan_structured(A1, A2, A3, thresh)
    b_wit = _scan_spread(dot_product_set(A1, A2, A3, G), eps, eta)
    if a_wit is not None and b_wit is not None:
        mode = "both"
    elif a_wit is not None:
        mode = "A"
    elif b_wit is not None:
        mode = "B"
    else:
        mode = "neither"
    return DichotomyVerdict(
        mode=mode, a_witness=a_wit, b_witness=b_wit, count_threshold=thresh
    )
