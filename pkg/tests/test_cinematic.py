import math

import numpy as np
import pytest

from tubelab.cinematic import (
    SlopeCurveParams,
    cinematic_gap,
    curve_eval,
    frostman_family_check,
    lp_norm_union,
    params_from_line,
    poly_base,
    sigma_probe,
    slope_curve,
    tube_image_deviation,
    twisted_project,
)
from tubelab.grid import CellSet, Resolution, random_cellset
from tubelab.smoothing import check_derivatives
from tubelab.tubes import LineL, Tube, rasterize

UNIT = (0.0, 1.0)
SYM = (-1.0, 1.0)


def cellset(k, n, rows):
    return CellSet(Resolution(k, n), np.array(rows, dtype=np.int64).reshape(-1, n))


def unit_dir(vx, vy):
    norm = math.sqrt(vx * vx + vy * vy + 1.0)
    return (vx / norm, vy / norm, 1.0 / norm)


# -- twisted projection ------------------------------------------------------------


def test_twist_zero_base_is_coordinate_projection():
    rng = np.random.default_rng(7)
    E = random_cellset(Resolution(5, 3), 0.02, rng)
    assert len(E) > 10
    out = twisted_project(E, poly_base(0.0, 0.0, SYM))
    expected = CellSet(Resolution(5, 2), E.cells[:, [0, 2]])
    assert out == expected  # cell-for-cell


def test_twist_point_cell_example():
    k = 5
    d = 2.0 ** -k
    cell = cellset(k, 3, [[int(0.5 / d), int(1.0 / d), int(0.25 / d)]])
    out = twisted_project(cell, poly_base(1.0, 0.0, SYM))  # f(z) = z
    target = (int(0.75 / d), int(0.25 / d))
    got = {tuple(row) for row in out.cells.tolist()}
    assert target in got
    assert len(out) <= 2


def test_twist_z_axis_tube():
    k = 6
    res = Resolution(k, 3)
    tube = Tube(LineL((0.0, 0.0), (0.0, 0.0, 1.0)), res)
    E = rasterize(tube)
    out = twisted_project(E, poly_base(1.0, 0.0, SYM))
    centers = out.centers()
    d = res.delta
    assert np.abs(centers[:, 0]).max() <= 1.5 * d + 1e-12
    rows_in = set(E.cells[:, 2].tolist())
    rows_out = set(out.cells[:, 1].tolist())
    assert rows_out == rows_in
    got = {tuple(r) for r in out.cells.tolist()}
    for iz in rows_in:  # both central columns survive in every layer
        assert (-1, iz) in got and (0, iz) in got


def test_twist_matches_enumeration_oracle():
    rng = np.random.default_rng(11)
    E = random_cellset(Resolution(4, 3), 0.05, rng)
    f = poly_base(1.0, 1.0 / 300.0, SYM)
    out = twisted_project(E, f)
    d = 2.0 ** -4
    want = set()
    for ix, iy, iz in E.cells.tolist():
        cx, cy, cz = (ix + 0.5) * d, (iy + 0.5) * d, (iz + 0.5) * d
        u = (cx + float(f(cz)) * cy) / d
        for j in range(math.floor(u) - 2, math.floor(u) + 3):
            if u - 1.5 < j < u + 0.5:
                want.add((j, iz))
    assert {tuple(r) for r in out.cells.tolist()} == want


def test_twist_slab_extent_sanity():
    # Fubini sanity: each z-row of the image stays inside the x-extent spanned
    # by that slab's image points, padded by the one-cell thickening.
    rng = np.random.default_rng(13)
    E = random_cellset(Resolution(5, 3), 0.03, rng)
    f = poly_base(1.0, 0.0, SYM)
    out = twisted_project(E, f)
    d = 2.0 ** -5
    centers = E.centers()
    u = (centers[:, 0] + f.value(centers[:, 2]) * centers[:, 1]) / d
    for iz in np.unique(E.cells[:, 2]):
        slab = u[E.cells[:, 2] == iz]
        row = out.cells[out.cells[:, 1] == iz, 0]
        assert row.size > 0
        assert row.min() >= math.floor(slab.min() - 0.5)
        assert row.max() <= math.ceil(slab.max() + 0.5)


def test_twist_rejects_planar_input_and_empty():
    with pytest.raises(ValueError):
        twisted_project(cellset(4, 2, [[0, 0]]), poly_base(1.0, 0.0, SYM))
    out = twisted_project(CellSet.empty(Resolution(4, 3)), poly_base(1.0, 0.0, SYM))
    assert out.is_empty and out.res == Resolution(4, 2)


# -- slope curves -------------------------------------------------------------------


def test_params_validate_ranges_and_base():
    f = poly_base(1.0, 0.0, UNIT)
    with pytest.raises(ValueError):
        SlopeCurveParams(1.5, 0.0, 0.0, f)
    with pytest.raises(ValueError):
        SlopeCurveParams(0.0, 0.0, 0.0, f, c=-2.0)
    with pytest.raises(ValueError):
        SlopeCurveParams(0.0, 0.0, 0.0, poly_base(0.5, 0.0, UNIT))  # |f'| < 1
    with pytest.raises(ValueError):
        SlopeCurveParams(0.0, 0.0, 0.0, poly_base(1.0, 1.0, UNIT))  # |f''| = 2
    shifted = poly_base(1.0, 0.0, UNIT, intercept=0.5)  # f(0) != 0
    with pytest.raises(ValueError):
        SlopeCurveParams(0.0, 0.0, 0.0, shifted)


def test_curve_eval_zero_params():
    p = SlopeCurveParams(0.0, 0.0, 0.0, poly_base(1.0, 0.0, UNIT))
    g, g1, g2 = curve_eval(p, np.linspace(0, 1, 11))
    assert np.all(g == 0.0) and np.all(g1 == 0.0) and np.all(g2 == 0.0)


def test_curve_eval_parabola():
    p = SlopeCurveParams(0.0, 0.0, 1.0, poly_base(1.0, 0.0, UNIT))
    ts = np.linspace(0, 1, 21)
    g, g1, g2 = curve_eval(p, ts)
    assert np.allclose(g, ts * ts, atol=1e-15)
    assert np.allclose(g1, 2.0 * ts, atol=1e-15)
    assert np.all(g2 == 2.0)


def test_curve_eval_with_shear():
    p = SlopeCurveParams(0.1, 0.2, 0.4, poly_base(1.0, 0.0, UNIT), c=0.3)
    g, g1, g2 = curve_eval(p, 0.5)
    assert float(g) == pytest.approx(0.1 + 0.2 * 0.5 + 0.4 * 0.25 + 0.3 * 0.5, abs=1e-15)
    assert float(g1) == pytest.approx(0.2 + 0.4 * 1.0 + 0.3, abs=1e-15)
    assert float(g2) == pytest.approx(0.8, abs=1e-15)


def test_curve_derivative_oracle():
    rng = np.random.default_rng(3)
    f = poly_base(1.0, 1.0 / 300.0, UNIT)
    for _ in range(5):
        a, b, d, c = rng.uniform(-1, 1, size=4)
        sc = slope_curve(SlopeCurveParams(a, b, d, f, c=c))
        assert check_derivatives(sc, rng.uniform(0.05, 0.95, 100))


# -- cinematic gap -------------------------------------------------------------------


def test_gap_identical_params():
    f = poly_base(1.0, 0.0, UNIT)
    p = SlopeCurveParams(0.3, -0.2, 0.5, f)
    lhs, rhs = cinematic_gap(p, p)
    assert lhs == 0.0 and rhs == 0.0


def test_gap_offset_in_a():
    f = poly_base(1.0, 0.0, UNIT)
    p1 = SlopeCurveParams(0.3, 0.1, 0.0, f)
    p2 = SlopeCurveParams(-0.2, 0.1, 0.0, f)
    lhs, rhs = cinematic_gap(p1, p2)
    assert lhs == pytest.approx(0.5, abs=1e-9)
    assert rhs == pytest.approx(0.25, abs=1e-15)


def test_gap_offset_in_d():
    f = poly_base(1.0, 0.0, UNIT)
    p1 = SlopeCurveParams(0.0, 0.4, 0.5, f)
    p2 = SlopeCurveParams(0.0, 0.4, -0.3, f)
    lhs, rhs = cinematic_gap(p1, p2)
    assert lhs == pytest.approx(1.6, abs=1e-6)  # inf at t = 0, |dg''| = 2|dd|
    assert rhs == pytest.approx(0.4, abs=1e-15)


def test_gap_requires_shared_base_and_shear():
    f1 = poly_base(1.0, 0.0, UNIT)
    f2 = poly_base(1.0, 0.0, UNIT)
    with pytest.raises(ValueError):
        cinematic_gap(SlopeCurveParams(0, 0, 0, f1), SlopeCurveParams(0, 0, 0, f2))
    with pytest.raises(ValueError):
        cinematic_gap(
            SlopeCurveParams(0, 0, 0, f1, c=0.1), SlopeCurveParams(0, 0, 0, f1, c=0.2)
        )


def test_gap_random_pairs_meet_half_distance():
    bases = [
        poly_base(1.0, 0.0, UNIT),
        poly_base(1.0, 1.0 / 300.0, UNIT),
        poly_base(2.0, -1.0 / 300.0, UNIT),
    ]
    rng = np.random.default_rng(17)
    for f in bases:
        for _ in range(100):
            a1, b1, d1, a2, b2, d2 = rng.uniform(-1, 1, size=6)
            c = float(rng.uniform(-1, 1))
            lhs, rhs = cinematic_gap(
                SlopeCurveParams(a1, b1, d1, f, c=c), SlopeCurveParams(a2, b2, d2, f, c=c)
            )
            assert lhs >= rhs - 1e-9


# -- Lp norms ------------------------------------------------------------------------


def test_lp_norm_single_and_pairs():
    A = cellset(4, 2, [[0, 0], [1, 0], [2, 0], [3, 0]])
    B = cellset(4, 2, [[10, 10], [11, 10]])
    m_a, m_b = A.measure, B.measure
    for p in (1.0, 1.5, 2.0, 3.0):
        assert lp_norm_union([A], p) == pytest.approx(m_a ** (1 / p), rel=1e-12)
        assert lp_norm_union([A, B], p) == pytest.approx((m_a + m_b) ** (1 / p), rel=1e-12)
        assert lp_norm_union([A, A], p) == pytest.approx(
            (2.0 ** p * m_a) ** (1 / p), rel=1e-12
        )


def test_lp_norm_matches_counting_oracle():
    rng = np.random.default_rng(23)
    images = [random_cellset(Resolution(5, 2), 0.1, rng) for _ in range(4)]
    counts = {}
    for img in images:
        for cell in map(tuple, img.cells.tolist()):
            counts[cell] = counts.get(cell, 0) + 1
    p = 1.5
    want = (sum(c ** p for c in counts.values()) * (2.0 ** -5) ** 2) ** (1 / p)
    assert lp_norm_union(images, p) == pytest.approx(want, rel=1e-12)


def test_lp_norm_rejects_bad_input():
    A = cellset(4, 2, [[0, 0]])
    with pytest.raises(ValueError):
        lp_norm_union([A], 0.5)
    with pytest.raises(ValueError):
        lp_norm_union([A, cellset(5, 2, [[0, 0]])], 2.0)
    assert lp_norm_union([], 2.0) == 0.0


# -- Frostman family check -------------------------------------------------------------


def test_frostman_progression_passes():
    f = poly_base(1.0, 0.0, UNIT)
    gap = 2.0 ** -7
    family = [SlopeCurveParams(i * gap - 0.5, 0.0, 0.0, f) for i in range(128)]
    assert frostman_family_check(family, 0.2) is True


def test_frostman_identical_params_rejected():
    f = poly_base(1.0, 0.0, UNIT)
    p = SlopeCurveParams(0.1, 0.0, 0.0, f)
    with pytest.raises(ValueError):
        frostman_family_check([p, p], 0.2)


def test_frostman_matches_ball_counting_oracle():
    f = poly_base(1.0, 0.0, UNIT)
    rng = np.random.default_rng(29)
    gap = 2.0 ** -6
    vals = np.unique(rng.integers(-32, 32, size=64)) * gap
    family = [SlopeCurveParams(float(v), 0.0, 0.0, f) for v in vals]
    for eps in (0.0, 0.1, 0.3):
        flag = frostman_family_check(family, eps)
        dist = np.abs(vals[:, None] - vals[None, :])
        sep = dist[dist > 0].min()
        want = True
        r = sep
        while r <= 2.0 * dist.max():
            counts = (dist < r).sum(axis=1)
            if counts.max() > sep ** (-eps) * (r / sep) + 1e-9:
                want = False
                break
            r *= 2.0
        assert flag == want


def test_frostman_dense_cluster_fails_at_zero_eps():
    # gap-delta progression has 3 members in every open 2*delta ball; with
    # eps = 0 the bound is exactly r/delta = 2, so the check must fail.
    f = poly_base(1.0, 0.0, UNIT)
    gap = 2.0 ** -6
    family = [SlopeCurveParams(i * gap, 0.0, 0.0, f) for i in range(16)]
    assert frostman_family_check(family, 0.0) is False


# -- tube images vs curves --------------------------------------------------------------


def test_params_from_line_roundtrip():
    f = poly_base(1.0, 0.0, SYM)
    line = LineL((0.25, -0.125), unit_dir(0.3, -0.2))
    p = params_from_line(line, f)
    assert p.a == pytest.approx(0.25)
    assert p.b == pytest.approx(-0.125)
    assert p.c == pytest.approx(0.3, rel=1e-12)
    assert p.d == pytest.approx(-0.2, rel=1e-12)


def test_tube_images_stay_in_curve_envelope():
    f = poly_base(1.0, 0.0, SYM)
    rng = np.random.default_rng(31)
    for _ in range(25):
        px, py = rng.uniform(-0.3, 0.3, size=2)
        vx, vy = rng.uniform(-0.5, 0.5, size=2)
        line = LineL((px, py), unit_dir(vx, vy))
        dev, allowance = tube_image_deviation(line, f, 6)
        assert dev <= allowance


# -- sigma probe -------------------------------------------------------------------------


def test_probe_single_tube():
    f = poly_base(1.0, 0.0, SYM)
    rows = sigma_probe("single", 0, f, [6])
    assert len(rows) == 1
    row = rows[0]
    d = 2.0 ** -6
    assert row.k == 6
    assert d <= row.image_measure <= 16.0 * d  # measure ~ delta up to the width constant
    assert 0.4 <= row.log_ratio <= 1.2
    assert row.l32_norm > 0.0


def test_probe_rejects_flat_base():
    with pytest.raises(ValueError):
        sigma_probe("single", 0, poly_base(0.0, 0.0, SYM), [5])


def test_probe_separated_family_table():
    f = poly_base(1.5, 1.0 / 300.0, SYM)
    rows = sigma_probe("separated", 5, f, [4, 5])
    assert [r.k for r in rows] == [4, 5]
    for row in rows:
        assert row.image_measure > 0.0 and row.l32_norm > 0.0
        assert math.isfinite(row.log_ratio)
    again = sigma_probe("separated", 5, f, [4, 5])
    assert rows == again


def test_probe_worker_invariance():
    f = poly_base(1.0, 0.0, SYM)
    rows1 = sigma_probe("sticky", 3, f, [5], workers=1)
    rows4 = sigma_probe("sticky", 3, f, [5], workers=4)
    assert rows1 == rows4


def test_probe_unknown_generator():
    with pytest.raises(ValueError):
        sigma_probe("mystery", 0, poly_base(1.0, 0.0, SYM), [4])
