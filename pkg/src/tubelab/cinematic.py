"""Twisted projections, slope-curve families, and the flattening probe.

A twisted projection sends (x, y, z) to (x + f(z) y, z) for a base function f.
Tubes map to neighborhoods of plane curves a + b f(t) + d t f(t) + c t whose
parameters come straight from the tube's line, so families of tubes become
families of curves.  The curve families are "cinematic": the pointwise
(value, slope, curvature) separation of two curves controls the separation of
their parameters, which is what makes unions of their neighborhoods large.
This module verifies that inequality, measures L^p norms of image unions, and
tabulates how the image measure of a tube family scales with resolution.

Base functions are carried as SmoothFunction triples and their hypotheses
(f(0) = 0 where required, 1 <= |f'| <= 2, |f''| <= 1/100) are enforced by
dense sampling over the function's domain.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from tubelab.grid import CellSet, Resolution
from tubelab.parallel import pmap
from tubelab.smoothing import SmoothFunction
from tubelab.tubes import (
    LineL,
    Tube,
    family_from_lines,
    gen_direction_separated,
    gen_sl2,
    gen_sticky_cantor,
    rasterize,
)

__all__ = [
    "SlopeCurveParams",
    "ProbeRow",
    "poly_base",
    "validate_base_function",
    "twisted_project",
    "slope_curve",
    "curve_eval",
    "cinematic_gap",
    "lp_norm_union",
    "frostman_family_check",
    "params_from_line",
    "tube_image_deviation",
    "sigma_probe",
]


def poly_base(
    linear: float,
    quadratic: float,
    domain: tuple[float, float] = (0.0, 1.0),
    intercept: float = 0.0,
) -> SmoothFunction:
    """Quadratic base function intercept + linear*t + quadratic*t^2."""

    def value(t):
        t = np.asarray(t, dtype=float)
        return intercept + linear * t + quadratic * t * t

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return linear + 2.0 * quadratic * t

    def second(t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, 2.0 * quadratic)

    return SmoothFunction(value, deriv, second, domain)


def validate_base_function(f: SmoothFunction, require_zero: bool, samples: int = 1000) -> None:
    """Check the base-function hypotheses by sampling over f's domain."""
    lo, hi = f.domain
    if not (math.isfinite(lo) and math.isfinite(hi)) or not hi > lo:
        raise ValueError(f"base function needs a finite domain interval, got {f.domain}")
    ts = np.linspace(lo, hi, samples)
    d1 = np.abs(f.deriv(ts))
    d2 = np.abs(f.second(ts))
    if d1.min() < 1.0 - 1e-9 or d1.max() > 2.0 + 1e-9:
        raise ValueError(
            f"|f'| must stay within [1, 2], sampled range [{d1.min():.4g}, {d1.max():.4g}]"
        )
    if d2.max() > 0.01 + 1e-9:
        raise ValueError(f"|f''| must stay within 1/100, sampled max {d2.max():.4g}")
    if require_zero and lo <= 0.0 <= hi and abs(float(f(0.0))) > 1e-12:
        raise ValueError(f"base function must vanish at 0, got {float(f(0.0)):.4g}")


# -- twisted projection ------------------------------------------------------------


def twisted_project(E: CellSet, f: SmoothFunction) -> CellSet:
    """Image of a spatial cell set under (x, y, z) -> (x + f(z) y, z).

    Each cell center maps to a point that is thickened to an axis-aligned
    square of side delta; the image consists of every planar cell that square
    overlaps in positive area.  Centers map to centers when f is constant
    zero, so the image then equals the (x, z) coordinate projection
    cell-for-cell; in general each point marks at most two cells, so measures
    overestimate the exact center image by a factor of at most two.
    """
    if E.res.n != 3:
        raise ValueError(f"twisted projection needs a spatial set, got n = {E.res.n}")
    out_res = Resolution(E.res.k, 2)
    if E.is_empty():
        return CellSet.empty(out_res)
    d = E.res.delta
    centers = E.centers()
    u = (centers[:, 0] + f.value(centers[:, 2]) * centers[:, 1]) / d
    # cells j overlapping [u - 1/2, u + 1/2] in positive area: u - 3/2 < j < u + 1/2
    j_first = np.floor(u - 1.5).astype(np.int64) + 1
    j_last = np.ceil(u + 0.5).astype(np.int64) - 1
    rows = E.cells[:, 2]
    parts = [np.stack([j_first, rows], axis=1)]
    extra = j_last > j_first
    if extra.any():
        parts.append(np.stack([j_last[extra], rows[extra]], axis=1))
    return CellSet(out_res, np.concatenate(parts, axis=0))


# -- slope curves ------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class SlopeCurveParams:
    """Parameters of the curve a + b f(t) + d t f(t) + c t.

    The first three coordinates are the curve family's parameters; the shear c
    is shared across a family and drops out of pairwise comparisons.
    """

    a: float
    b: float
    d: float
    f: SmoothFunction
    c: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "d", "c"):
            val = getattr(self, name)
            if not -1.0 - 1e-12 <= val <= 1.0 + 1e-12:
                raise ValueError(f"parameter {name} = {val:.6g} outside [-1, 1]")
        validate_base_function(self.f, require_zero=True)


def slope_curve(params: SlopeCurveParams) -> SmoothFunction:
    """The curve of a parameter triple as an evaluable function of t."""
    f = params.f
    a, b, d, c = params.a, params.b, params.d, params.c

    def value(t):
        t = np.asarray(t, dtype=float)
        ft = f.value(t)
        return a + b * ft + d * t * ft + c * t

    def deriv(t):
        t = np.asarray(t, dtype=float)
        ft = f.value(t)
        f1 = f.deriv(t)
        return b * f1 + d * (ft + t * f1) + c

    def second(t):
        t = np.asarray(t, dtype=float)
        f1 = f.deriv(t)
        f2 = f.second(t)
        return b * f2 + d * (2.0 * f1 + t * f2)

    return SmoothFunction(value, deriv, second, f.domain)


def curve_eval(params: SlopeCurveParams, t):
    """Exact (g, g', g'') of the slope curve at t."""
    sc = slope_curve(params)
    ts = np.asarray(t, dtype=float)
    return sc.value(ts), sc.deriv(ts), sc.second(ts)


def cinematic_gap(p1: SlopeCurveParams, p2: SlopeCurveParams) -> tuple[float, float]:
    """Pointwise curve separation versus half the parameter distance.

    Returns (lhs, rhs) with lhs = inf_t |dg| + |dg'| + |dg''| and
    rhs = (|da| + |db| + |dd|) / 2.  The infimum runs over a 10^4-point grid
    on the shared base function's domain plus local refinement around the grid
    minimum down to a bracket of width 1e-6.  The separation property
    guarantees lhs >= rhs under the base-function hypotheses; a violation
    raises RuntimeError.
    """
    if p1.f is not p2.f:
        raise ValueError("parameters must share the same base function object")
    if p1.c != p2.c:
        raise ValueError(f"parameters must share the shear, got {p1.c} and {p2.c}")
    da, db, dd = p1.a - p2.a, p1.b - p2.b, p1.d - p2.d
    f = p1.f

    def objective(t):
        t = np.asarray(t, dtype=float)
        ft = f.value(t)
        f1 = f.deriv(t)
        f2 = f.second(t)
        g = da + db * ft + dd * t * ft
        g1 = db * f1 + dd * (ft + t * f1)
        g2 = db * f2 + dd * (2.0 * f1 + t * f2)
        return np.abs(g) + np.abs(g1) + np.abs(g2)

    lo, hi = f.domain
    ts = np.linspace(lo, hi, 10_000)
    vals = objective(ts)
    i = int(np.argmin(vals))
    best = float(vals[i])
    b_lo = float(ts[max(0, i - 1)])
    b_hi = float(ts[min(ts.size - 1, i + 1)])
    while b_hi - b_lo > 1e-6:
        sub = np.linspace(b_lo, b_hi, 33)
        sv = objective(sub)
        j = int(np.argmin(sv))
        best = min(best, float(sv[j]))
        b_lo = float(sub[max(0, j - 1)])
        b_hi = float(sub[min(32, j + 1)])
    rhs = 0.5 * (abs(da) + abs(db) + abs(dd))
    if best < rhs - 1e-9:
        raise RuntimeError(f"curve separation failed: inf {best:.6g} < {rhs:.6g}")
    return best, rhs


# -- norms and non-concentration -------------------------------------------------------


def lp_norm_union(images: Sequence[CellSet], p: float) -> float:
    """L^p norm of the multiplicity function of a list of planar cell sets.

    Each image contributes one unit of multiplicity on each of its cells; the
    norm is (sum over cells of multiplicity^p * delta^2)^(1/p).
    """
    if p < 1.0:
        raise ValueError(f"p must be at least 1, got {p}")
    images = list(images)
    if not images:
        return 0.0
    res = images[0].res
    if res.n != 2:
        raise ValueError(f"images must be planar, got n = {res.n}")
    stacks = []
    for im in images:
        if im.res != res:
            raise ValueError(f"images live on different grids: {im.res} vs {res}")
        if len(im):
            stacks.append(im.cells)
    if not stacks:
        return 0.0
    _, counts = np.unique(np.concatenate(stacks, axis=0), axis=0, return_counts=True)
    area = res.delta * res.delta
    return float((np.sum(counts.astype(float) ** p) * area) ** (1.0 / p))


def frostman_family_check(family: Sequence[SlopeCurveParams], eps: float) -> bool:
    """Ball-counting non-concentration test in the parameter metric.

    The metric is |da| + |db| + |dd|; the separation scale delta is the
    minimum pairwise distance (identical parameters are an error).  For every
    dyadic radius r = delta * 2^j up to twice the diameter, every open ball
    B(member, r) must contain at most delta^(-eps) * (r / delta) members.
    """
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    pts = np.array([[q.a, q.b, q.d] for q in family], dtype=float).reshape(-1, 3)
    m = pts.shape[0]
    if m <= 1:
        return True
    dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    off = dist[~np.eye(m, dtype=bool)]
    sep = float(off.min())
    if sep <= 0.0:
        raise ValueError("family is not separated in the parameter metric")
    r = sep
    top = 2.0 * float(dist.max())
    while r <= top:
        counts = (dist < r).sum(axis=1)
        if counts.max() > sep ** (-eps) * (r / sep) + 1e-9:
            return False
        r *= 2.0
    return True


# -- tubes to curves ---------------------------------------------------------------------


def params_from_line(line: LineL, f: SmoothFunction) -> SlopeCurveParams:
    """Curve parameters of a spatial line: position at height zero plus slopes."""
    if line.n != 3:
        raise ValueError(f"need a spatial line, got dimension {line.n}")
    vx, vy, vz = line.v
    return SlopeCurveParams(line.p[0], line.p[1], vy / vz, f, c=vx / vz)


def tube_image_deviation(line: LineL, f: SmoothFunction, k: int) -> tuple[float, float]:
    """Worst distance of a tube's twisted image from its slope curve.

    Returns (deviation, allowance) where the deviation is the max over image
    cell centers (x, z) of |x - (g(z) + c z)| and the allowance is the frozen
    envelope (1 + max|f|) * delta + 2 delta.  Rastered tube cells sit within
    half a cell of the line, the projection moves that offset by a factor
    1 + |f|, and the image thickening adds at most one more cell, so the
    deviation stays inside the allowance whenever |c|, |d| <= 1.
    """
    res = Resolution(k, 3)
    image = twisted_project(rasterize(Tube(line, res)), f)
    if image.is_empty():
        return 0.0, 0.0
    centers = image.centers()
    z = centers[:, 1]
    vx, vy, vz = line.v
    curve = (line.p[0] + (vx / vz) * z) + f.value(z) * (line.p[1] + (vy / vz) * z)
    dev = float(np.abs(centers[:, 0] - curve).max())
    fmax = float(np.abs(f.value(np.linspace(-1.0, 1.0, 1001))).max())
    return dev, (1.0 + fmax) * res.delta + 2.0 * res.delta


# -- resolution sweep --------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ProbeRow:
    """One resolution step of the flattening probe."""

    k: int
    n_tubes: int
    image_measure: float
    l32_norm: float
    log_ratio: float


def _probe_family(generator: str, k: int, seed: int):
    if generator == "single":
        norm = math.sqrt(0.3 * 0.3 + 0.2 * 0.2 + 1.0)
        line = LineL((0.1, -0.05), (0.3 / norm, 0.2 / norm, 1.0 / norm))
        return family_from_lines([line], k)
    if generator == "separated":
        return gen_direction_separated(k, seed, 3)
    if generator == "sticky":
        return gen_sticky_cantor(k, seed=seed)
    if generator == "sl2":
        return gen_sl2(k)
    raise ValueError(f"unknown generator {generator!r}")


def sigma_probe(
    generator: str, seed: int, f: SmoothFunction, k_list: Sequence[int], workers: int = 1
) -> tuple[ProbeRow, ...]:
    """Tabulate how twisted-image size scales with resolution.

    For each k the named family is generated, every tube is rastered (in
    parallel; the union is order-independent) and projected, and the row
    records the union measure, the L^{3/2} norm of the multiplicity function,
    and log |image| / log delta.  The base function must satisfy the slope
    hypotheses 1 <= |f'| <= 2 and |f''| <= 1/100.
    """
    validate_base_function(f, require_zero=False)
    rows = []
    for k in k_list:
        k = int(k)
        fam = _probe_family(generator, k, seed)
        rasters = pmap(rasterize, list(fam.tubes), workers)
        images = [twisted_project(cells, f) for cells in rasters]
        out_res = Resolution(k, 2)
        stacks = [im.cells for im in images if len(im)]
        if stacks:
            union = CellSet(out_res, np.concatenate(stacks, axis=0))
        else:
            union = CellSet.empty(out_res)
        measure = union.measure
        ratio = math.log(measure) / math.log(out_res.delta) if measure > 0.0 else 0.0
        rows.append(ProbeRow(k, len(fam), measure, lp_norm_union(images, 1.5), ratio))
    return tuple(rows)
