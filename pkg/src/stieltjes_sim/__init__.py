"""Numerical solving and verification for measure/Stieltjes differential equations.

The packages revolves around four objects: expression ASTs (expr), regulated
left-continuous grids (regulated), validated nondecreasing drivers
(integrator) and fields (solver).  On top sit the Kurzweil-Stieltjes
integral (ksint), the event-exact stepping solver (solver), lower/upper
solution verification plus extremal iteration (extremal), and the built-in
tank model with closed-form oracles (models).
"""

from .errors import StieltjesSimError
from .expr import evaluate, parse, to_string
from .extremal import (
    Bracket,
    DominatingBound,
    FunctionalField,
    check_domination,
    check_functional_monotone,
    check_jump_monotone,
    check_quasimonotone,
    extremal_solve,
    functional_extremal,
    truncate_field,
    verify_lower,
    verify_upper,
)
from .integrator import AcPart, Integrator, Jump, VectorIntegrator
from .ksint import hake_check, indefinite_integral, ks_integrate
from .models import (
    BacteriaParams,
    bacteria_build,
    bacteria_functional_build,
    bacteria_g,
    bacteria_level_crossings,
    bacteria_p_closed_form,
    bacteria_reference,
    bacteria_W,
    run_bacteria,
)
from .regulated import RegulatedGrid, grids_close, pointwise_sup
from .solver import Field, SolveReport, residual_norm, solve_mde, stieltjes_derivative

__version__ = "0.1.0"

__all__ = [
    "StieltjesSimError",
    "parse",
    "evaluate",
    "to_string",
    "RegulatedGrid",
    "pointwise_sup",
    "grids_close",
    "Jump",
    "AcPart",
    "Integrator",
    "VectorIntegrator",
    "ks_integrate",
    "indefinite_integral",
    "hake_check",
    "Field",
    "SolveReport",
    "solve_mde",
    "stieltjes_derivative",
    "residual_norm",
    "Bracket",
    "DominatingBound",
    "verify_lower",
    "verify_upper",
    "check_quasimonotone",
    "check_jump_monotone",
    "check_domination",
    "check_functional_monotone",
    "truncate_field",
    "extremal_solve",
    "FunctionalField",
    "functional_extremal",
    "BacteriaParams",
    "bacteria_g",
    "bacteria_build",
    "bacteria_W",
    "bacteria_p_closed_form",
    "bacteria_level_crossings",
    "bacteria_functional_build",
    "bacteria_reference",
    "run_bacteria",
    "__version__",
]
