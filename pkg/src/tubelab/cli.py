"""Experiment harness: config-driven scenarios over the library modules.

Subcommands map to scenarios (generation, covering spectra, functionals,
plane maps and grains, dichotomy, projection pipelines, reconstruction,
twisted projections, the resolution probe) plus file conversion and a
self-test.  A scenario is a pure function of its resolved configuration, so
identical (config, seed) pairs produce byte-identical outputs regardless of
the worker count; every emitted report starts with comment lines carrying
the scenario id, a hash of the physics-affecting configuration, and the
serialization format versions.

Configuration files are plain ``key = value`` lines ('#' starts a comment).
Unknown keys, duplicate keys, malformed values, and non-dyadic scales are
errors; nothing physics-affecting defaults silently from the environment.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from tubelab.cinematic import (
    cinematic_gap,
    lp_norm_union,
    poly_base,
    sigma_probe,
    twisted_project,
    tube_image_deviation,
    SlopeCurveParams,
)
from tubelab.formats import (
    FORMAT_VERSIONS,
    Table,
    convert,
    fmt_float,
    read_kgs,
    write_kgs,
    write_ktf,
    write_table,
)
from tubelab.grid import (
    CellSet,
    Resolution,
    aligned_box,
    covering_number,
    dyadic_exponent,
    frostman_constant,
    random_cellset,
)
from tubelab.hypergraph import KPartiteHypergraph, is_uniformly_dense, uniform_density_refine
from tubelab.projections import (
    DirectionSet,
    anisotropic_renormalize,
    coarsen,
    kaufman_select,
    sw_dichotomy,
    thin_tubes_prune,
    two_ends_reduce,
)
from tubelab.smoothing import (
    aligned_family,
    check_derivatives,
    random_rect_family,
    reconstruct_c2,
    segment_function,
)
from tubelab.tubes import (
    LineL,
    broad_narrow_planemap,
    cordoba_bound,
    extremality_report,
    family_from_lines,
    gen_direction_separated,
    gen_sl2,
    gen_sticky_cantor,
    grain_decomposition,
    mlk_functional,
    rasterize,
)

__all__ = [
    "ExperimentConfig",
    "parse_config_text",
    "resolve_config",
    "scenario_report",
    "run_scenario",
    "selftest",
    "main",
]

SCENARIOS = (
    "gen",
    "cover",
    "mlk",
    "planemap",
    "grains",
    "swtest",
    "twoends",
    "kaufman",
    "smooth",
    "twist",
    "probe",
    "selftest",
)

# scenario id -> generator used when the config leaves `generator` empty
_GENERATOR_DEFAULTS = {
    "cover": "square",
    "smooth": "aligned",
    "probe": "separated",
}

# the orthogonal-lines construction needs delta^-eta above its covering
# constant of 3, which at eta = 0.35 asks for k >= 5; use the canonical k = 6
_K_DEFAULTS = {"swtest": 6}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment parameters.

    `workers` and `out` are excluded from the config hash: they must never
    influence report bytes, only where and how fast they are produced.
    """

    scenario: str
    k: int = 4
    n: int = 2
    seed: int = 0
    workers: int = 1
    format: str = "csv"
    out: str = ""
    generator: str = ""
    base: str = "identity"
    fault: str = ""
    eps: float = 0.1
    eta: float = 0.35
    eta_smooth: float = 0.05
    zeta: float = 0.25
    sigma: float = 0.5
    rho: float = 0.25
    alpha: float = 0.5
    radius: float = 0.5
    density: float = 0.1
    wedge_threshold: float = 0.5
    prune_k: float = 2.0
    slope: float = -0.5
    intercept: float = 0.3
    count_threshold: int = 1
    levels: int = 3
    branching: int = 4
    klist: tuple[int, ...] = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}, expected one of {SCENARIOS}")
        if not 0 <= self.k <= 9:
            raise ValueError(f"k must lie in [0, 9], got {self.k}")
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2, or 3, got {self.n}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit value, got {self.seed}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.format not in ("csv", "report"):
            raise ValueError(f"format must be 'csv' or 'report', got {self.format!r}")
        for name in ("rho", "radius"):
            value = getattr(self, name)
            if dyadic_exponent(value) < 0 or value <= 0:
                raise ValueError(f"{name} must be a dyadic scale in (0, 1], got {value}")
        for kk in self.klist:
            if not 0 <= kk <= 9:
                raise ValueError(f"klist entries must lie in [0, 9], got {kk}")
        if self.levels < 1:
            raise ValueError(f"levels must be at least 1, got {self.levels}")

    def canonical(self) -> str:
        parts = []
        for field in sorted(dataclasses.fields(self), key=lambda f: f.name):
            if field.name in ("workers", "out"):
                continue
            value = getattr(self, field.name)
            if isinstance(value, float):
                text = fmt_float(value)
            elif isinstance(value, tuple):
                text = " ".join(str(x) for x in value)
            else:
                text = str(value)
            parts.append(f"{field.name} = {text}")
        return "\n".join(parts) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]


_INT_KEYS = {"k", "n", "seed", "workers", "count_threshold", "levels", "branching"}
_FLOAT_KEYS = {
    "eps",
    "eta",
    "eta_smooth",
    "zeta",
    "sigma",
    "rho",
    "alpha",
    "radius",
    "density",
    "wedge_threshold",
    "prune_k",
    "slope",
    "intercept",
}
_STR_KEYS = {"scenario", "format", "out", "generator", "base", "fault"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | {"klist"}


def parse_config_text(text: str) -> dict[str, object]:
    """Key-value config body -> typed values.  Unknown keys are errors."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in _ALL_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        if not val:
            raise ValueError(f"config line {lineno}: empty value for {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key == "klist":
                values[key] = tuple(int(tok) for tok in val.split())
            else:
                values[key] = val
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value {val!r} for {key!r}") from None
    return values


def resolve_config(scenario: str, file_values: dict[str, object], **flag_overrides) -> ExperimentConfig:
    """Merge defaults, a config file, and command-line flags, in that order."""
    values = dict(file_values)
    file_scenario = values.pop("scenario", None)
    if file_scenario is not None and file_scenario != scenario:
        raise ValueError(
            f"config names scenario {file_scenario!r} but the {scenario!r} subcommand was invoked"
        )
    for key, val in flag_overrides.items():
        if val is not None:
            values[key] = val
    if "k" not in values and scenario in _K_DEFAULTS:
        values["k"] = _K_DEFAULTS[scenario]
    return ExperimentConfig(scenario=scenario, **values)


# -- shared pieces -------------------------------------------------------------------


def _family(cfg: ExperimentConfig, default: str = "separated"):
    gen = cfg.generator or default
    if gen == "separated":
        return gen_direction_separated(cfg.k, cfg.seed, 3)
    if gen == "sticky":
        return gen_sticky_cantor(cfg.k, cfg.branching, cfg.seed)
    if gen == "sl2":
        return gen_sl2(cfg.k)
    raise ValueError(f"unknown tube generator {gen!r}")


def _base_function(name: str):
    if name == "identity":
        return poly_base(1.0, 0.0, (-1.0, 1.0))
    if name == "steep":
        return poly_base(1.5, 1.0 / 300.0, (-1.0, 1.0))
    if name == "quad":
        return poly_base(1.0, 1.0 / 300.0, (0.0, 1.0))
    raise ValueError(f"unknown base function {name!r}, expected identity, steep, or quad")


def _header_lines(cfg: ExperimentConfig) -> list[str]:
    versions = " ".join(f"{name}={v}" for name, v in sorted(FORMAT_VERSIONS.items()))
    return [
        f"# scenario: {cfg.scenario}",
        f"# config_hash: {cfg.config_hash()}",
        f"# format_versions: {versions}",
    ]


def _render(cfg: ExperimentConfig, table: Table, report_lines: list[str]) -> str:
    head = _header_lines(cfg)
    if cfg.format == "csv":
        return "\n".join(head) + "\n" + write_table(table)
    return "\n".join(head + report_lines) + "\n"


# -- scenarios -------------------------------------------------------------------------


def _scenario_gen(cfg):
    fam = _family(cfg)
    rep = extremality_report(fam, cfg.eps, cfg.sigma)
    rows = []
    for i, (tube, shading) in enumerate(fam.entries()):
        p, v = tube.line.p, tube.line.v
        rows.append((float(i), p[0], p[1], v[0], v[1], v[2], float(len(shading))))
    table = Table(("tube", "px", "py", "vx", "vy", "vz", "shading_cells"), tuple(rows))
    # metrics ride as comments so the KTF body below stays machine-readable
    lines = [
        f"# tubes: {len(fam)}",
        f"# union_measure: {fmt_float(rep.union_measure)}",
        f"# union_bound: {fmt_float(rep.union_bound)}",
        f"# union_ok: {rep.union_ok}",
        f"# is_extremal: {rep.is_extremal}",
    ]
    lines.extend(f"# margin_{name}: {fmt_float(val)}" for name, val in sorted(rep.margins().items()))
    lines.extend(write_ktf(fam).splitlines())
    return table, lines


def _scenario_cover(cfg):
    gen = cfg.generator or _GENERATOR_DEFAULTS["cover"]
    if gen == "square":
        side = 1 << cfg.k
        E = aligned_box(Resolution(cfg.k, cfg.n), (0,) * cfg.n, (side,) * cfg.n)
    else:
        E = _family(cfg).union_shading()
    rows = []
    for j in range(cfg.k, -1, -1):
        rho = 2.0**-j
        rows.append((rho, float(covering_number(E, rho))))
    table = Table(("rho", "count"), tuple(rows))
    lines = [f"cells: {len(E)}"] + [
        f"rho {fmt_float(r)}: {int(c)} cells" for r, c in table.rows
    ]
    return table, lines


def _scenario_mlk(cfg):
    fam = _family(cfg)
    value, bound = mlk_functional(fam)
    union_measure, cs_bound = cordoba_bound(fam.union_shading(), fam)
    table = Table(
        ("tubes", "mlk_value", "mlk_bound", "union_measure", "cs_bound"),
        ((float(len(fam)), value, bound, union_measure, cs_bound),),
    )
    lines = [
        f"tubes: {len(fam)}",
        f"mlk_value: {fmt_float(value)}",
        f"mlk_bound: {fmt_float(bound)}",
        f"union_measure: {fmt_float(union_measure)}",
        f"cs_bound: {fmt_float(cs_bound)}",
    ]
    return table, lines


def _scenario_planemap(cfg):
    fam = _family(cfg)
    res = broad_narrow_planemap(fam, cfg.wedge_threshold, cfg.count_threshold)
    table = Table(
        ("narrow", "broad", "flagged"),
        ((float(len(res.narrow.cells)), float(len(res.broad)), float(len(res.flagged))),),
    )
    lines = [
        f"narrow_cells: {len(res.narrow.cells)}",
        f"broad_cells: {len(res.broad)}",
        f"flagged_cells: {len(res.flagged)}",
    ]
    return table, lines


def _scenario_grains(cfg):
    fam = _family(cfg)
    pm = broad_narrow_planemap(fam, cfg.wedge_threshold, cfg.count_threshold)
    stats = grain_decomposition(pm.narrow.cells, pm.narrow, cfg.rho, cfg.sigma)
    rows = [
        (
            float(st.ball_cell[0]),
            float(st.ball_cell[1]),
            float(st.ball_cell[2]),
            float(st.cell_count),
            float(st.grain_count),
            float(st.run_count),
            float(len(st.projected)),
        )
        for st in stats
    ]
    table = Table(("bx", "by", "bz", "cells", "grains", "runs", "projected"), tuple(rows))
    lines = [f"balls: {len(stats)}", f"narrow_cells: {len(pm.narrow.cells)}"]
    lines.extend(
        f"ball {st.ball_cell}: cells={st.cell_count} grains={st.grain_count} runs={st.run_count}"
        for st in stats
    )
    return table, lines


def _orthogonal_lines_inputs(k: int):
    """Two adjacent horizontal rows plus the vertical column through zero."""
    res = Resolution(k, 2)
    side = 1 << k
    y = side // 8
    A1 = CellSet(res, np.array([[j, y] for j in range(side)], dtype=np.int64))
    A2 = CellSet(res, np.array([[j, y + 1] for j in range(side)], dtype=np.int64))
    A3 = CellSet(res, np.array([[0, j] for j in range(side)], dtype=np.int64))
    return A1, A2, A3


def _scenario_swtest(cfg):
    A1, A2, A3 = _orthogonal_lines_inputs(cfg.k)
    G = KPartiteHypergraph.complete((len(A1), len(A2), len(A3)))
    v = sw_dichotomy(A1, A2, A3, G, cfg.eps, cfg.eta)
    if v.mode == "A":
        w = v.a_witness
        table = Table(
            ("mode_a", "theta", "offset", "offset_perp", "count1", "count2", "count3"),
            ((1.0, w.theta, w.offset, w.offset_perp, float(w.count1), float(w.count2), float(w.count3)),),
        )
    else:
        w = v.b_witness
        table = Table(
            ("mode_a", "rho", "lo", "hi", "covering", "threshold"),
            ((0.0, w.rho, w.interval[0], w.interval[1], float(w.covering), w.threshold),),
        )
    return table, v.report().splitlines()


def _scenario_twoends(cfg):
    res = Resolution(cfg.k, 2)
    side = 1 << cfg.k
    rng = np.random.default_rng(cfg.seed)
    A = random_cellset(res, cfg.density, rng)
    B = random_cellset(res, cfg.density, rng)
    te = two_ends_reduce(A, cfg.zeta)
    co = coarsen(te.subset, cfg.rho, cfg.alpha)

    band_cells = int(round(cfg.rho / res.delta))
    band = A.intersection(aligned_box(res, (0, 0), (side, band_cells)))
    if band.is_empty():
        renorm_kept, renorm_image = 0, 0
    else:
        rn = anisotropic_renormalize(band, (0.0, 0.0, cfg.rho), cfg.eps)
        renorm_kept, renorm_image = len(rn.kept), len(rn.image)

    A1 = CellSet(res, A.cells - np.array([side, 0]))
    A2 = CellSet(res, B.cells + np.array([side // 2, 0]))
    tt = thin_tubes_prune(A1, A2, cfg.prune_k, cfg.alpha)
    table = Table(
        (
            "cells",
            "strip_w",
            "strip_theta",
            "kept",
            "coarse_occupancy",
            "coarse_cells",
            "renorm_kept",
            "renorm_image",
            "thin_pairs",
            "thin_scales",
        ),
        (
            (
                float(len(A)),
                te.w,
                te.theta,
                float(len(te.subset)),
                float(co.occupancy),
                float(len(co.coarse)),
                float(renorm_kept),
                float(renorm_image),
                float(int(tt.pair_mask.sum())),
                float(len(tt.radii)),
            ),
        ),
    )
    lines = [
        f"input_cells: {len(A)}",
        f"two_ends: w={fmt_float(te.w)} theta={fmt_float(te.theta)} kept={len(te.subset)}",
        f"coarsen: occupancy={co.occupancy} coarse_cells={len(co.coarse)}",
        f"renormalize: kept={renorm_kept} image={renorm_image}",
        f"thin_tubes: surviving_pairs={int(tt.pair_mask.sum())} scales={len(tt.radii)}",
    ]
    return table, lines


def _scenario_kaufman(cfg):
    res = Resolution(cfg.k, 2)
    F = CellSet(res, np.array([[j, 0] for j in range(1 << cfg.k)], dtype=np.int64))
    dirs = DirectionSet.all_directions(Resolution(cfg.k, 1))
    H = KPartiteHypergraph.complete((len(dirs), len(F)))
    sel = kaufman_select(dirs, F, H, cfg.radius)
    table = Table(
        ("directions", "survivors", "covering", "theta", "degenerate"),
        (
            (
                float(len(dirs)),
                float(len(sel.survivors)),
                float(sel.covering),
                sel.theta,
                1.0 if sel.degenerate else 0.0,
            ),
        ),
    )
    lines = [
        f"directions: {len(dirs)}",
        f"survivors: {len(sel.survivors)}",
        f"covering: {sel.covering}",
        f"theta: {fmt_float(sel.theta)}",
        f"degenerate: {sel.degenerate}",
    ]
    return table, lines


def _scenario_smooth(cfg):
    delta = 2.0**-cfg.k
    gen = cfg.generator or _GENERATOR_DEFAULTS["smooth"]
    if gen == "aligned":
        fam = aligned_family(delta, cfg.levels, cfg.eta_smooth, cfg.slope, cfg.intercept)
        hw = 0.25 * delta ** (0.5 + cfg.eta_smooth)
        xs = np.linspace(0.5 - hw, 0.5 + hw, 9)
        samples = np.stack([xs, cfg.slope * xs + cfg.intercept], axis=1)
    elif gen == "random":
        rng = np.random.default_rng(cfg.seed)
        fam, samples = random_rect_family(delta, cfg.levels, cfg.eta_smooth, rng)
    else:
        raise ValueError(f"unknown smoothing generator {gen!r}, expected aligned or random")
    g, rep = reconstruct_c2(fam, samples)
    xs_out = np.linspace(0.0, 1.0, 257)
    table = Table(("x", "g"), tuple((float(x), float(g(x))) for x in xs_out))
    return table, rep.report().splitlines()


def _scenario_twist(cfg):
    fam = _family(cfg)
    f = _base_function(cfg.base)
    images = []
    rows = []
    for i, tube in enumerate(fam.tubes):
        images.append(twisted_project(rasterize(tube), f))
        dev, allow = tube_image_deviation(tube.line, f, cfg.k)
        rows.append((float(i), float(len(images[-1])), dev, allow))
    out_res = Resolution(cfg.k, 2)
    stacks = [im.cells for im in images if len(im)]
    union = CellSet(out_res, np.concatenate(stacks)) if stacks else CellSet.empty(out_res)
    table = Table(("tube", "image_cells", "deviation", "allowance"), tuple(rows))
    lines = [
        f"tubes: {len(fam)}",
        f"union_measure: {fmt_float(union.measure)}",
        f"l32_norm: {fmt_float(lp_norm_union(images, 1.5))}",
    ]
    return table, lines


def _scenario_probe(cfg):
    gen = cfg.generator or _GENERATOR_DEFAULTS["probe"]
    klist = cfg.klist or (3, 4, 5)
    rows = sigma_probe(gen, cfg.seed, _base_function(cfg.base), klist, cfg.workers)
    table = Table(
        ("k", "n_tubes", "image_measure", "l32_norm", "log_ratio"),
        tuple(
            (float(r.k), float(r.n_tubes), r.image_measure, r.l32_norm, r.log_ratio) for r in rows
        ),
    )
    lines = [
        f"k={r.k} tubes={r.n_tubes} measure={fmt_float(r.image_measure)} "
        f"l32={fmt_float(r.l32_norm)} ratio={fmt_float(r.log_ratio)}"
        for r in rows
    ]
    return table, lines


_SCENARIO_FNS = {
    "gen": _scenario_gen,
    "cover": _scenario_cover,
    "mlk": _scenario_mlk,
    "planemap": _scenario_planemap,
    "grains": _scenario_grains,
    "swtest": _scenario_swtest,
    "twoends": _scenario_twoends,
    "kaufman": _scenario_kaufman,
    "smooth": _scenario_smooth,
    "twist": _scenario_twist,
    "probe": _scenario_probe,
}


def scenario_report(cfg: ExperimentConfig) -> str:
    """The full report text of a scenario; pure in (config, seed)."""
    if cfg.scenario == "selftest":
        lines, _ = selftest(cfg.fault)
        return "\n".join(_header_lines(cfg) + lines) + "\n"
    table, lines = _SCENARIO_FNS[cfg.scenario](cfg)
    return _render(cfg, table, lines)


def run_scenario(cfg: ExperimentConfig) -> Path:
    """Write the scenario report to the configured output path."""
    if not cfg.out:
        raise ValueError("run_scenario needs an output path (out = ... or --out)")
    out = Path(cfg.out)
    out.write_text(scenario_report(cfg), encoding="utf-8", newline="\n")
    return out


# -- selftest -------------------------------------------------------------------------


def _check_covering_empty():
    if covering_number(CellSet.empty(Resolution(4, 2)), 0.25) != 0:
        return "covering of the empty set is not zero"


def _check_certificate_empty_rejected():
    try:
        frostman_constant(CellSet.empty(Resolution(4, 2)), 0.5)
    except ValueError:
        return None
    return "empty-set certificate did not raise ValueError"


def _check_kgs_roundtrip():
    rng = np.random.default_rng(12)
    E = random_cellset(Resolution(4, 2), 0.2, rng)
    if read_kgs(write_kgs(E)) != E:
        return "kgs write-read changed the set"


def _containment_pairs(fault: str):
    fam = gen_direction_separated(4, 1, 3)
    pairs = list(fam.entries())
    if fault == "shading":
        res = fam.res
        side = 1 << res.k
        stray = CellSet(res, np.array([[-side, -side, 0]], dtype=np.int64))
        pairs[0] = (pairs[0][0], stray)
    return pairs


def _make_check_containment(fault: str):
    def check():
        for i, (tube, shading) in enumerate(_containment_pairs(fault)):
            raster = rasterize(tube)
            if not shading.issubset(raster):
                stray = shading.difference(raster)
                return f"tube {i} holds stray cell {tuple(stray.cells[0].tolist())}"

    return check


def _check_mlk_parallel_zero():
    lines = [LineL((x, 0.0), (0.0, 0.0, 1.0)) for x in (-0.25, 0.0, 0.25)]
    value, _ = mlk_functional(family_from_lines(lines, 4))
    if value != 0.0:
        return f"parallel family has nonzero triple functional {value!r}"


def _check_refine_bound():
    rng = np.random.default_rng(3)
    sizes = (14, 11)
    mask = rng.random(sizes) < 0.3
    G = KPartiteHypergraph(sizes, np.argwhere(mask))
    eps = 0.5
    G2 = uniform_density_refine(G, eps)
    if G2.n_edges < (1.0 - eps) * G.n_edges:
        return f"refinement kept {G2.n_edges} of {G.n_edges} edges"
    if not is_uniformly_dense(G2, 2.0 ** -G.k * eps * G.density):
        return "refined graph is not uniformly dense at the guaranteed threshold"


def _check_refine_empty():
    G = KPartiteHypergraph((3, 3), np.zeros((0, 2), dtype=np.int64))
    if uniform_density_refine(G, 0.5).n_edges != 0:
        return "refining an edgeless graph invented edges"


def _check_kaufman_bound():
    rng = np.random.default_rng(3)
    res1 = Resolution(5, 1)
    dirs = DirectionSet.from_angles(res1, np.linspace(0.05, 3.0, 40))
    F = CellSet(Resolution(5, 2), rng.integers(0, 32, size=(60, 2)))
    mask = rng.random((len(dirs), len(F))) < 0.4
    H = KPartiteHypergraph((len(dirs), len(F)), np.argwhere(mask))
    sel = kaufman_select(dirs, F, H, 0.5)
    if len(sel.survivors) < 0.5 * H.density * len(dirs):
        return f"survivors {len(sel.survivors)} below half the density share"


def _check_two_ends_postcondition():
    rng = np.random.default_rng(8)
    A = random_cellset(Resolution(5, 2), 0.15, rng)
    te = two_ends_reduce(A, 0.25)
    if len(te.subset) < 0.5 * te.w**0.25 * len(A):
        return f"kept {len(te.subset)} of {len(A)} at w={te.w!r}"


def _check_two_ends_empty_rejected():
    try:
        two_ends_reduce(CellSet.empty(Resolution(4, 2)), 0.25)
    except ValueError:
        return None
    return "two-ends on the empty set did not raise ValueError"


def _check_renormalize_empty_rejected():
    try:
        anisotropic_renormalize(CellSet.empty(Resolution(4, 2)), (0.0, 0.0, 0.25), 0.5)
    except ValueError:
        return None
    return "renormalizing the empty set did not raise ValueError"


def _check_segment_smoothness():
    sf = segment_function(0.2, 0.1, 0.8, 0.4, 0.05)
    if not check_derivatives(sf, np.linspace(0.1, 0.9, 101)):
        return "segment derivatives disagree with finite differences"


def _check_cinematic_gap():
    f = poly_base(1.0, 0.0)
    lhs, rhs = cinematic_gap(
        SlopeCurveParams(0.3, -0.2, 0.1, f), SlopeCurveParams(-0.1, 0.25, -0.3, f)
    )
    if lhs < rhs - 1e-9:
        return f"gap {lhs!r} fell below half the parameter distance {rhs!r}"


def _check_twist_zero_is_projection():
    rng = np.random.default_rng(5)
    E = random_cellset(Resolution(4, 3), 0.05, rng)
    image = twisted_project(E, poly_base(0.0, 0.0, (-1.0, 1.0)))
    if image != CellSet(Resolution(4, 2), E.cells[:, [0, 2]]):
        return "zero-twist image differs from the coordinate projection"


def _check_twist_empty():
    image = twisted_project(CellSet.empty(Resolution(4, 3)), poly_base(1.0, 0.0, (-1.0, 1.0)))
    if not image.is_empty():
        return "empty input produced a nonempty image"


def _check_covering_square_example():
    E = aligned_box(Resolution(4, 2), (0, 0), (16, 16))
    got = [(rho, covering_number(E, rho)) for rho in (0.25, 0.5, 1.0)]
    if got != [(0.25, 16), (0.5, 4), (1.0, 1)]:
        return f"full-square covering spectrum came out as {got}"


def selftest(fault: str = "") -> tuple[list[str], bool]:
    """Run the invariant checks at k <= 5; returns (status lines, all passed).

    `fault` == "shading" swaps one shading for a far-away cell so the
    containment check demonstrably fails with a witness.
    """
    checks = [
        ("grid-covering-empty", _check_covering_empty),
        ("grid-certificate-empty-rejected", _check_certificate_empty_rejected),
        ("formats-kgs-roundtrip", _check_kgs_roundtrip),
        ("tubes-shading-containment", _make_check_containment(fault)),
        ("tubes-parallel-triple-zero", _check_mlk_parallel_zero),
        ("hypergraph-refine-bound", _check_refine_bound),
        ("hypergraph-refine-empty", _check_refine_empty),
        ("projections-kaufman-survivors", _check_kaufman_bound),
        ("projections-two-ends-mass", _check_two_ends_postcondition),
        ("projections-two-ends-empty-rejected", _check_two_ends_empty_rejected),
        ("projections-renormalize-empty-rejected", _check_renormalize_empty_rejected),
        ("smoothing-segment-derivatives", _check_segment_smoothness),
        ("cinematic-gap-inequality", _check_cinematic_gap),
        ("cinematic-twist-zero-projection", _check_twist_zero_is_projection),
        ("cinematic-twist-empty", _check_twist_empty),
        ("cli-covering-square-example", _check_covering_square_example),
    ]
    lines = []
    passed = 0
    for name, fn in checks:
        try:
            witness = fn()
        except Exception as exc:  # a panic is itself a failure
            witness = f"unexpected {type(exc).__name__}: {exc}"
        if witness is None:
            lines.append(f"ok   {name}")
            passed += 1
        else:
            lines.append(f"FAIL {name}: {witness}")
    lines.append(f"passed {passed} of {len(checks)}")
    return lines, passed == len(checks)


# -- entry point ----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubelab", description="experiment harness for dyadic tube families"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
        p.add_argument("--workers", type=int, default=None, help="worker count (never changes bytes)")
        p.add_argument("--format", choices=("csv", "report"), default=None)
        p.add_argument("--out", type=Path, default=None, help="output path (default: stdout)")

    for name in SCENARIOS:
        add_common(sub.add_parser(name, help=f"run the {name} scenario"))

    conv = sub.add_parser("convert", help="re-serialize a file (same-format round-trip)")
    conv.add_argument("path", type=Path)
    conv.add_argument("from_format", choices=sorted(FORMAT_VERSIONS))
    conv.add_argument("to_format", choices=sorted(FORMAT_VERSIONS))
    conv.add_argument("--out", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            out = convert(args.path, args.from_format, args.to_format, args.out)
            print(out)
            return 0
        file_values = parse_config_text(args.config.read_text()) if args.config else {}
        cfg = resolve_config(
            args.command,
            file_values,
            seed=args.seed,
            workers=args.workers,
            format=args.format,
            out=str(args.out) if args.out else None,
        )
        if cfg.scenario == "selftest":
            lines, ok = selftest(cfg.fault)
            text = "\n".join(_header_lines(cfg) + lines) + "\n"
            code = 0 if ok else 1
        else:
            text = scenario_report(cfg)
            code = 0
        if cfg.out:
            Path(cfg.out).write_text(text, encoding="utf-8", newline="\n")
        else:
            sys.stdout.write(text)
        return code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
