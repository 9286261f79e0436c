"""Dyadic-grid tube families, covering certificates, and projection experiments.

The package is organized around a single carrier type, :class:`tubelab.grid.CellSet`
(a finite union of half-open dyadic cells), plus discretized line/tube machinery
built on top of it:

``grid``
    resolutions, cell sets, covering numbers, dimension certificates
``tubes``
    lines, tubes, shadings, family refinements, rescaling, incidence functionals
``hypergraph``
    k-partite hypergraphs and uniform-density refinement
``projections``
    energies, projection selection, two-ends and renormalization reductions,
    dot-product dichotomy
``smoothing``
    compactly supported C^2 interpolants and reconstruction from nested
    rectangle families
``cinematic``
    twisted projections and curve-separation diagnostics
``formats``
    plain-text serialization (KGS / KTF / KHG)
``cli``
    the experiment harness
"""

from tubelab.grid import CellSet, Resolution

__all__ = ["CellSet", "Resolution"]
__version__ = "0.1.0"
