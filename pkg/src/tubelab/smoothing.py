"""Building C2 functions out of nested rectangle covers.

A nested rectangle family records, level by level, slanted rectangles whose
x-projections are well separated and which nest into the previous level.  From
such a family (plus function samples living inside the finest rectangles) one
can stitch together a twice differentiable function that tracks the samples,
has quantitatively bounded second derivative, and whose slope over each
rectangle's shadow stays close to that rectangle's slope.

Everything is assembled from one primitive: a smooth ramp that is 0 on the
first third of a window, climbs on the middle third, and is 1 afterwards.  The
ramp is a quintic polynomial on the climb, which keeps the whole construction
exactly C2 with closed-form derivatives.  Slope bounds for the ramp are
|phi'| <= 10 / a and |phi''| <= 60 / a**2 over a window of width a; the actual
extrema of the chosen profile (5.625 / a and 30 * sqrt(3) / a**2) are pinned
down in the tests so the profile cannot drift silently.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SmoothFunction",
    "Rectangle",
    "NestedRectangleFamily",
    "ReconstructionReport",
    "bump_phi",
    "bump_psi",
    "segment_function",
    "check_derivatives",
    "validate_rect_family",
    "reconstruct_c2",
    "aligned_family",
    "random_rect_family",
    "read_rect_family",
    "write_rect_family",
    "sample_csv",
]

# Extrema of the quintic ramp profile on a unit window.
RAMP_SLOPE_MAX = 5.625
RAMP_CURV_MAX = 30.0 * math.sqrt(3.0)


@dataclasses.dataclass(frozen=True)
class SmoothFunction:
    """A function bundled with closed-form first and second derivatives.

    ``value``, ``deriv`` and ``second`` accept and return numpy arrays (scalars
    are promoted).  ``domain`` records where the function is meant to be used;
    evaluation outside is still defined.
    """

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    second: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def check_derivatives(sf: SmoothFunction, points, step: float = 1e-5, rtol: float = 1e-4) -> bool:
    """Compare the analytic derivatives against centered finite differences.

    Centered differences carry truncation terms of order step^2 times the next
    two derivatives; those are budgeted from difference estimates of g''' and
    g'''' so that near-flat tails of sharply curved pieces do not fail
    spuriously.  Small absolute floors absorb float round-off; everything else
    must agree to ``rtol`` relative.
    """
    xs = np.asarray(points, dtype=float)
    up = sf.value(xs + step)
    dn = sf.value(xs - step)
    mid = sf.value(xs)
    fd1 = (up - dn) / (2.0 * step)
    fd2 = (up - 2.0 * mid + dn) / (step * step)
    a1 = sf.deriv(xs)
    a2 = sf.second(xs)
    s_up = sf.second(xs + step)
    s_dn = sf.second(xs - step)
    g3 = np.abs(s_up - s_dn) / (2.0 * step)
    g4 = np.abs(s_up - 2.0 * a2 + s_dn) / (step * step)
    tol1 = rtol * np.maximum(np.abs(a1), np.abs(fd1)) + 1e-7 + 0.5 * step * step * g3
    tol2 = rtol * np.maximum(np.abs(a2), np.abs(fd2)) + 1e-3 + 0.5 * step * step * g4
    return bool(np.all(np.abs(a1 - fd1) <= tol1) and np.all(np.abs(a2 - fd2) <= tol2))


# -- ramp and corner bumps ----------------------------------------------------------


def bump_phi(a: float) -> SmoothFunction:
    """Ramp over a window of width ``a``: 0 up to a/3, 1 from 2a/3 on.

    The climb is the quintic 6t^5 - 15t^4 + 10t^3 rescaled to the middle third,
    so phi is C2 on the whole line with one-sided derivatives vanishing at both
    window ends, phi(a/2) = 1/2, |phi'| <= 10/a and |phi''| <= 60/a^2.
    """
    if a <= 0.0:
        raise ValueError(f"window width must be positive, got {a}")
    inv = 1.0 / a

    def _t(x):
        return np.clip(3.0 * np.asarray(x, dtype=float) * inv - 1.0, 0.0, 1.0)

    def value(x):
        t = _t(x)
        return t * t * t * (t * (6.0 * t - 15.0) + 10.0)

    def deriv(x):
        t = _t(x)
        s = t * (1.0 - t)
        return 30.0 * s * s * (3.0 * inv)

    def second(x):
        t = _t(x)
        return 60.0 * t * (2.0 * t - 1.0) * (t - 1.0) * (9.0 * inv * inv)

    return SmoothFunction(value, deriv, second)


def bump_psi(a: float) -> SmoothFunction:
    """Corner bump (x - a) * phi_a(x): zero at both ends of the window.

    Its one-sided slope is 0 at x = 0 and exactly 1 at x = a, which is what
    lets segment functions leave a plateau with a prescribed slope while
    staying C2.  |psi'| <= 7 and |psi''| <= 64/a on the window.
    """
    phi = bump_phi(a)

    def value(x):
        x = np.asarray(x, dtype=float)
        return (x - a) * phi.value(x)

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return phi.value(x) + (x - a) * phi.deriv(x)

    def second(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * phi.deriv(x) + (x - a) * phi.second(x)

    return SmoothFunction(value, deriv, second)


# -- segment functions ---------------------------------------------------------------


def segment_function(x1: float, y1: float, x2: float, y2: float, a: float) -> SmoothFunction:
    """C2 function whose graph contains the segment (x1,y1)-(x2,y2).

    Linear on [x1, x2], identically zero outside [x1 - a, x2 + a], and glued
    with ramp/corner bumps so that values and slopes match at all four
    junctions.  Derivative bounds, with h = |y1| + |y2| and s the slope:
    |G'| <= 7 (h/a + |s|) and |G''| <= 64 (h/a^2 + |s|/a).
    """
    if not x2 > x1:
        raise ValueError(f"need x1 < x2, got {x1} and {x2}")
    if a <= 0.0:
        raise ValueError(f"fade-out width must be positive, got {a}")
    s = (y2 - y1) / (x2 - x1)
    phi = bump_phi(a)
    psi = bump_psi(a)

    def value(x):
        x = np.asarray(x, dtype=float)
        ul = x - x1 + a
        ur = a + x2 - x
        left = y1 * phi.value(ul) + s * psi.value(ul)
        mid = s * (x - x1) + y1
        right = y2 * phi.value(ur) - s * psi.value(ur)
        return np.where(x <= x1, left, np.where(x < x2, mid, right))

    def deriv(x):
        x = np.asarray(x, dtype=float)
        ul = x - x1 + a
        ur = a + x2 - x
        left = y1 * phi.deriv(ul) + s * psi.deriv(ul)
        right = -(y2 * phi.deriv(ur) - s * psi.deriv(ur))
        return np.where(x <= x1, left, np.where(x < x2, np.full_like(x, s), right))

    def second(x):
        x = np.asarray(x, dtype=float)
        ul = x - x1 + a
        ur = a + x2 - x
        left = y1 * phi.second(ul) + s * psi.second(ul)
        right = y2 * phi.second(ur) - s * psi.second(ur)
        return np.where(x <= x1, left, np.where(x < x2, np.zeros_like(x), right))

    return SmoothFunction(value, deriv, second, (x1 - a, x2 + a))


def _superpose(terms: Sequence[SmoothFunction], domain=(-math.inf, math.inf)) -> SmoothFunction:
    terms = tuple(terms)
    if not terms:
        def zero(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        return SmoothFunction(zero, zero, zero, domain)

    def value(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in terms:
            out = out + t.value(x)
        return out

    def deriv(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in terms:
            out = out + t.deriv(x)
        return out

    def second(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in terms:
            out = out + t.second(x)
        return out

    return SmoothFunction(value, deriv, second, domain)


# -- nested rectangle families --------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Rectangle:
    """A slanted rectangle: ``length`` along slope direction, ``width`` across.

    ``parent`` indexes the containing rectangle one level up (-1 at the top).
    """

    center: tuple[float, float]
    slope: float
    length: float
    width: float
    parent: int = -1

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.length > 0.0 or not self.width > 0.0:
            raise ValueError("rectangle dimensions must be positive")


@dataclasses.dataclass(frozen=True)
class NestedRectangleFamily:
    """Rectangles organized in levels j = 1..N with scales rho_j = delta^(j/N).

    Level j rectangles are rho_j^(1/2+eta) long and rho_j wide.  Structural
    invariants (separation of shadows, nesting, slope range, dimensions) are
    checked by :func:`validate_rect_family`, not on construction.
    """

    delta: float
    eta: float
    levels: tuple[tuple[Rectangle, ...], ...]

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        object.__setattr__(self, "levels", tuple(tuple(lv) for lv in self.levels))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_rectangles(self) -> int:
        return sum(len(lv) for lv in self.levels)

    def rho(self, level: int) -> float:
        if not self.levels:
            raise ValueError("empty family has no scales")
        return self.delta ** (level / len(self.levels))


def _axis_direction(slope: float) -> tuple[float, float]:
    c = 1.0 / math.hypot(1.0, slope)
    return c, slope * c


def _corners(R: Rectangle) -> tuple[tuple[float, float], ...]:
    ux, uy = _axis_direction(R.slope)
    hl, hw = R.length / 2.0, R.width / 2.0
    cx, cy = R.center
    return tuple(
        (cx + sa * hl * ux - sb * hw * uy, cy + sa * hl * uy + sb * hw * ux)
        for sa in (-1.0, 1.0)
        for sb in (-1.0, 1.0)
    )

def _x_shadow(R: Rectangle) -> tuple[float, float]:
    xs = [c[0] for c in _corners(R)]
    return min(xs), max(xs)


def _contains_point(R: Rectangle, point: tuple[float, float], tol: float) -> bool:
    ux, uy = _axis_direction(R.slope)
    vx = point[0] - R.center[0]
    vy = point[1] - R.center[1]
    along = vx * ux + vy * uy
    across = -vx * uy + vy * ux
    return abs(along) <= R.length / 2.0 + tol and abs(across) <= R.width / 2.0 + tol


def _coaxial_endpoints(R: Rectangle) -> tuple[tuple[float, float], tuple[float, float]]:
    ux, uy = _axis_direction(R.slope)
    hl = R.length / 2.0
    cx, cy = R.center
    return (cx - hl * ux, cy - hl * uy), (cx + hl * ux, cy + hl * uy)


def _axis_line(R: Rectangle, x: float) -> float:
    return R.center[1] + R.slope * (x - R.center[0])


def validate_rect_family(fam: NestedRectangleFamily) -> tuple[bool, tuple[str, ...]]:
    """Check all structural invariants; returns (flag, violation messages).

    Checks, per level: slopes within [-1, 1], dimensions matching the level
    scale, x-projections separated by at least the rectangle length, and (below
    the top level) a valid parent reference with all four corners inside the
    parent.  All checks are exact up to fixed float tolerances.
    """
    violations: list[str] = []
    for j, rects in enumerate(fam.levels, start=1):
        rho = fam.rho(j)
        length = rho ** (0.5 + fam.eta)
        shadows = []
        for i, R in enumerate(rects):
            tag = f"level {j} rectangle {i}"
            if not -1.0 - 1e-12 <= R.slope <= 1.0 + 1e-12:
                violations.append(f"{tag}: slope {R.slope:.6g} outside [-1, 1]")
            if not math.isclose(R.length, length, rel_tol=1e-9):
                violations.append(f"{tag}: length {R.length:.6g}, expected {length:.6g}")
            if not math.isclose(R.width, rho, rel_tol=1e-9):
                violations.append(f"{tag}: width {R.width:.6g}, expected {rho:.6g}")
            if j == 1:
                if R.parent != -1:
                    violations.append(f"{tag}: top level parent must be -1, got {R.parent}")
            elif not 0 <= R.parent < len(fam.levels[j - 2]):
                violations.append(f"{tag}: parent index {R.parent} out of range")
            else:
                P = fam.levels[j - 2][R.parent]
                outside = [c for c in _corners(R) if not _contains_point(P, c, 1e-12)]
                if outside:
                    cx, cy = outside[0]
                    violations.append(
                        f"{tag}: corner ({cx:.6g}, {cy:.6g}) is not contained in its parent"
                    )
            shadows.append(_x_shadow(R))
        shadows.sort()
        for (_, right), (lo, _) in zip(shadows, shadows[1:]):
            if lo - right < length - 1e-12:
                violations.append(
                    f"level {j}: x-projections not {length:.6g}-separated (gap {lo - right:.6g})"
                )
    return (not violations), tuple(violations)


# -- reconstruction --------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ReconstructionReport:
    """Measured quantities for the three reconstruction conclusions.

    ``slope_errors`` holds one (level, max error, scale bound) triple per
    level, where the error is max |g'(x) - slope(R)| over grid points in the
    coaxial shadow of each level rectangle R and the bound is
    rho_j / rho_{j+1}^(1/2+eta).
    """

    n_terms: int
    n_samples: int
    delta: float
    max_sample_error: float
    second_max: float
    second_bound: float
    slope_errors: tuple[tuple[int, float, float], ...]
    grid_points: int

    def report(self) -> str:
        lines = [
            f"terms: {self.n_terms}",
            f"samples: {self.n_samples}",
            f"max sample error: {self.max_sample_error:.6g} (target {self.delta:.6g})",
            f"max second derivative: {self.second_max:.6g} (scale {self.second_bound:.6g})",
            f"evaluation grid points: {self.grid_points}",
        ]
        for level, err, bound in self.slope_errors:
            lines.append(f"level {level} slope error: {err:.6g} (scale {bound:.6g})")
        return "\n".join(lines)


def reconstruct_c2(
    fam: NestedRectangleFamily, f_samples
) -> tuple[SmoothFunction, ReconstructionReport]:
    """Stitch a C2 function out of a nested rectangle family.

    Each top level rectangle contributes a segment function along its axis.
    Below the top, a rectangle contributes the segment from its axis endpoints
    measured relative to the parent's axis line, so that summing over a
    nesting chain telescopes back to the rectangle's own axis.  Fade-out
    widths are half the rectangle length, which makes same-level supports
    pairwise disjoint whenever the family is valid (this is re-checked and a
    violation raises RuntimeError).

    ``f_samples`` is an (m, 2) array of (x, f(x)) pairs, each of which must lie
    inside some finest-level rectangle.
    """
    ok, violations = validate_rect_family(fam)
    if not ok:
        raise ValueError("invalid rectangle family: " + "; ".join(violations))
    samples = np.asarray(f_samples, dtype=float)
    if samples.size == 0:
        samples = samples.reshape(0, 2)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("f_samples must be an (m, 2) array of (x, f(x)) pairs")

    leaves = fam.levels[-1] if fam.levels else ()
    for x, y in samples:
        if not any(_contains_point(R, (x, y), 1e-12) for R in leaves):
            raise ValueError(f"sample at x = {x:.6g} is not covered by a finest-level rectangle")

    terms: list[SmoothFunction] = []
    for j, rects in enumerate(fam.levels, start=1):
        a = fam.rho(j) ** (0.5 + fam.eta) / 2.0
        spans = []
        for R in rects:
            (xa, ya), (xb, yb) = _coaxial_endpoints(R)
            if j == 1:
                lo, hi = ya, yb
            else:
                parent = fam.levels[j - 2][R.parent]
                lo = ya - _axis_line(parent, xa)
                hi = yb - _axis_line(parent, xb)
            terms.append(segment_function(xa, lo, xb, hi, a))
            spans.append((xa - a, xb + a))
        spans.sort()
        for (_, right), (left, _) in zip(spans, spans[1:]):
            if left < right - 1e-12:
                raise RuntimeError(f"level {j} supports overlap near x = {left:.6g}")

    g = _superpose(terms, (0.0, 1.0))

    grid = np.linspace(0.0, 1.0, 4097)
    n = fam.n_levels
    if n:
        second_max = float(np.abs(g.second(grid)).max())
        second_bound = fam.delta ** (-1.0 / n - 2.0 * fam.eta)
    else:
        second_max = 0.0
        second_bound = 1.0
    if len(samples):
        max_err = float(np.abs(samples[:, 1] - g.value(samples[:, 0])).max())
    else:
        max_err = 0.0

    slope_errors = []
    for j, rects in enumerate(fam.levels, start=1):
        bound = fam.rho(j) / fam.rho(j + 1) ** (0.5 + fam.eta)
        worst = 0.0
        for R in rects:
            (xa, _), (xb, _) = _coaxial_endpoints(R)
            xs = grid[(grid >= xa) & (grid <= xb)]
            if xs.size == 0:
                xs = np.array([0.5 * (xa + xb)])
            worst = max(worst, float(np.abs(g.deriv(xs) - R.slope).max()))
        slope_errors.append((j, worst, bound))

    report = ReconstructionReport(
        n_terms=len(terms),
        n_samples=len(samples),
        delta=fam.delta,
        max_sample_error=max_err,
        second_max=second_max,
        second_bound=second_bound,
        slope_errors=tuple(slope_errors),
        grid_points=grid.size,
    )
    return g, report


# -- family builders --------------------------------------------------------------------


def aligned_family(
    delta: float, n_levels: int, eta: float, slope: float, intercept: float, x_center: float = 0.5
) -> NestedRectangleFamily:
    """One rectangle per level, all concentric on the line y = slope*x + intercept."""
    if n_levels < 1:
        raise ValueError("need at least one level")
    y_center = slope * x_center + intercept
    levels = []
    for j in range(1, n_levels + 1):
        rho = delta ** (j / n_levels)
        levels.append(
            (
                Rectangle(
                    center=(x_center, y_center),
                    slope=slope,
                    length=rho ** (0.5 + eta),
                    width=rho,
                    parent=-1 if j == 1 else 0,
                ),
            )
        )
    return NestedRectangleFamily(delta=delta, eta=eta, levels=tuple(levels))


def random_rect_family(
    delta: float, n_levels: int, eta: float, rng: np.random.Generator
) -> tuple[NestedRectangleFamily, np.ndarray]:
    """A random single-chain family plus samples consistent with it.

    Slopes stay within [-0.6, 0.6] and children keep an axis margin inside
    their parent; both caps guarantee the nesting and separation invariants
    and keep every sample inside the plateau region of all its ancestors.
    Returned samples ride the finest rectangle's axis with vertical noise
    under delta / 2.
    """
    if n_levels < 1:
        raise ValueError("need at least one level")
    rho1 = delta ** (1.0 / n_levels)
    levels = []
    root = Rectangle(
        center=(0.5 + rng.uniform(-0.02, 0.02), rng.uniform(0.3, 0.7)),
        slope=rng.uniform(-0.3, 0.3),
        length=rho1 ** (0.5 + eta),
        width=rho1,
        parent=-1,
    )
    levels.append((root,))
    prev = root
    for j in range(2, n_levels + 1):
        rho = delta ** (j / n_levels)
        length = rho ** (0.5 + eta)
        drift_cap = min(0.4 * prev.width / length, 0.25)
        slope = float(np.clip(prev.slope + rng.uniform(-drift_cap, drift_cap), -0.6, 0.6))
        t_cap = prev.length / 2.0 - 0.62 * length
        t = rng.uniform(-t_cap, t_cap) if t_cap > 0.0 else 0.0
        ux, uy = _axis_direction(prev.slope)
        child = Rectangle(
            center=(prev.center[0] + t * ux, prev.center[1] + t * uy),
            slope=slope,
            length=length,
            width=rho,
            parent=0,
        )
        levels.append((child,))
        prev = child
    fam = NestedRectangleFamily(delta=delta, eta=eta, levels=tuple(levels))
    (xa, ya), (xb, yb) = _coaxial_endpoints(prev)
    span = xb - xa
    xs = np.linspace(xa + 0.25 * span, xb - 0.25 * span, 5)
    ys = ya + prev.slope * (xs - xa) + rng.uniform(-0.45, 0.45, size=xs.size) * delta
    return fam, np.stack([xs, ys], axis=1)


# -- io --------------------------------------------------------------------------------


def write_rect_family(fam: NestedRectangleFamily) -> str:
    """Serialize a family: header line, then one rectangle per line.

    Line format after the ``rectfam 1 <delta> <eta> <n_levels>`` header is
    ``<level> <center_x> <center_y> <slope> <parent>``.  Lengths and widths are
    implied by the level and are recomputed on read.
    """
    lines = [f"rectfam 1 {fam.delta:.12g} {fam.eta:.12g} {fam.n_levels}"]
    for j, rects in enumerate(fam.levels, start=1):
        for R in rects:
            lines.append(
                f"{j} {R.center[0]:.12g} {R.center[1]:.12g} {R.slope:.12g} {R.parent}"
            )
    return "\n".join(lines) + "\n"


def read_rect_family(text: str) -> NestedRectangleFamily:
    """Parse the :func:`write_rect_family` format; raises ValueError on bad input."""
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines:
        raise ValueError("empty rectangle family text")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "rectfam":
        raise ValueError(f"bad header: {lines[0]!r}")
    if head[1] != "1":
        raise ValueError(f"unsupported version {head[1]!r}")
    try:
        delta = float(head[2])
        eta = float(head[3])
        n_levels = int(head[4])
    except ValueError as exc:
        raise ValueError(f"bad header values: {lines[0]!r}") from exc
    if n_levels < 0:
        raise ValueError(f"negative level count {n_levels}")
    buckets: list[list[Rectangle]] = [[] for _ in range(n_levels)]
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 5:
            raise ValueError(f"bad rectangle line: {ln!r}")
        try:
            level = int(parts[0])
            cx, cy, slope = (float(p) for p in parts[1:4])
            parent = int(parts[4])
        except ValueError as exc:
            raise ValueError(f"bad rectangle line: {ln!r}") from exc
        if not 1 <= level <= n_levels:
            raise ValueError(f"level {level} outside 1..{n_levels}")
        rho = delta ** (level / n_levels)
        buckets[level - 1].append(
            Rectangle(
                center=(cx, cy),
                slope=slope,
                length=rho ** (0.5 + eta),
                width=rho,
                parent=parent,
            )
        )
    return NestedRectangleFamily(delta=delta, eta=eta, levels=tuple(tuple(b) for b in buckets))


def sample_csv(sf: SmoothFunction, lo: float, hi: float, n: int) -> str:
    """Dense samples of a smooth function as ``x,g`` CSV rows."""
    if n < 1:
        raise ValueError("need at least one sample")
    xs = np.linspace(lo, hi, n)
    vals = sf.value(xs)
    lines = ["x,g"]
    lines.extend(f"{x:.12g},{v:.12g}" for x, v in zip(xs, vals))
    return "\n".join(lines) + "\n"
