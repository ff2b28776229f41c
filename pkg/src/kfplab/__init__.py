"""kfplab: a kinetic Fokker-Planck solver with regularity diagnostics.

The package couples a phase-space solver for

    (d_t + v . grad_x) f = div_v(A(t,x,v) grad_v f) + g

with rough (merely measurable, uniformly elliptic) diffusion coefficients
to the computable machinery of its regularity theory: truncation energies
on dyadic cylinders, level-set measure bounds, barrier comparisons,
fractional-derivative norms from velocity averaging, kinetic zooming, and
oscillation-decay / Hoelder-exponent estimation.
"""

from .coefficients import DiffusionField, SourceField, build_diffusion, \
    build_source, validate_ellipticity
from .config import RunConfig, parse_config, parse_config_file
from .fields import PhaseField, Trajectory
from .geometry import Cylinder, DyadicLevel, PhaseGrid, dyadic_params, \
    hat_cylinder, make_cylinder
from .pipeline import run_pipeline, sweep
from .solver import WHOLE_SPACE, kinetic_ibvp, solve, solve_barrier_ibvp, step

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "parse_config", "parse_config_file",
    "DiffusionField", "SourceField", "build_diffusion", "build_source",
    "validate_ellipticity",
    "PhaseField", "Trajectory",
    "Cylinder", "DyadicLevel", "PhaseGrid", "dyadic_params", "hat_cylinder",
    "make_cylinder",
    "run_pipeline", "sweep",
    "WHOLE_SPACE", "kinetic_ibvp", "solve", "solve_barrier_ibvp", "step",
    "__version__",
]
