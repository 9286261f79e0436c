"""Lines, tubes, shaded tube families, their refinements, and functionals.

geometry     lines in slope-graph form, the line metric, tube rasterization
family       TubeFamily, admissibility and extremality reports, refinements,
             greedy coarse covers, balanced covers, unit rescaling
functionals  multilinear box functional, plane maps, L2 overlap bound,
             grain and slice statistics
generators   seeded family constructors and direction pruning
"""

from tubelab.tubes.geometry import (
    LineL,
    Tube,
    angle_between,
    cells_meeting_line,
    clipped_length,
    covers,
    essentially_distinct,
    in_standard_class,
    line_dist,
    rasterize,
    sl2_line,
)
from tubelab.tubes.family import (
    AdmissibilityReport,
    ExtremalityReport,
    RescaleMap,
    TubeFamily,
    admissibility_check,
    balance_refine,
    balanced_check,
    constant_multiplicity_refinement,
    cover_by_rho_tubes,
    extremality_report,
    unit_rescale,
)
from tubelab.tubes.functionals import (
    GrainStats,
    PlaneMap,
    PlanemapResult,
    SliceStats,
    broad_narrow_planemap,
    cordoba_bound,
    grain_decomposition,
    mlk_functional,
    slice_slope_spectrum,
)
from tubelab.tubes.generators import (
    family_from_lines,
    gen_direction_separated,
    gen_from_lineset,
    gen_sl2,
    gen_sticky_cantor,
    prune_overrepresented,
)

__all__ = [
    "LineL",
    "Tube",
    "angle_between",
    "cells_meeting_line",
    "clipped_length",
    "covers",
    "essentially_distinct",
    "in_standard_class",
    "line_dist",
    "rasterize",
    "sl2_line",
    "AdmissibilityReport",
    "ExtremalityReport",
    "RescaleMap",
    "TubeFamily",
    "admissibility_check",
    "balance_refine",
    "balanced_check",
    "constant_multiplicity_refinement",
    "cover_by_rho_tubes",
    "extremality_report",
    "unit_rescale",
    "GrainStats",
    "PlaneMap",
    "PlanemapResult",
    "SliceStats",
    "broad_narrow_planemap",
    "cordoba_bound",
    "grain_decomposition",
    "mlk_functional",
    "slice_slope_spectrum",
    "family_from_lines",
    "gen_direction_separated",
    "gen_from_lineset",
    "gen_sl2",
    "gen_sticky_cantor",
    "prune_overrepresented",
]
