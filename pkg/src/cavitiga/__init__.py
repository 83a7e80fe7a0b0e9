"""cavitiga: isogeometric RF-cavity eigenmodes and Lorentz detuning.

The building blocks, bottom to top: NURBS evaluation and refinement
(:mod:`cavitiga.splines`), multipatch cavity models
(:mod:`cavitiga.geometry`), conforming discrete spaces
(:mod:`cavitiga.spaces`), Galerkin assembly (:mod:`cavitiga.assembly`),
the shift-invert eigensolver (:mod:`cavitiga.eigensolver`), the wall
elasticity solve (:mod:`cavitiga.elasticity`) and the detuning pipeline
(:mod:`cavitiga.detuning`).  File formats and the CLI live in
:mod:`cavitiga.io` and :mod:`cavitiga.cli`.
"""

from .assembly import CONSTANTS, PhysicalConstants
from .detuning import DetuningReport, EigenOptions, iterate_detuning, run_detuning
from .elasticity import Material
from .geometry import (
    CavityModel,
    demo_cell_profile,
    make_pillbox,
    make_revolved_cell,
    refine_model,
)
from .splines import KnotVector, NurbsCurve, NurbsPatch

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS",
    "PhysicalConstants",
    "DetuningReport",
    "EigenOptions",
    "iterate_detuning",
    "run_detuning",
    "Material",
    "CavityModel",
    "demo_cell_profile",
    "make_pillbox",
    "make_revolved_cell",
    "refine_model",
    "KnotVector",
    "NurbsCurve",
    "NurbsPatch",
    "__version__",
]
