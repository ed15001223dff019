"""Forced mean curvature flows of spheres in flat tori."""

__version__ = "0.1.0"

from .errors import TorusflowError
from .flow import StepControl, Termination, round_sphere_oracle, run_flow, step
from .forcing import ForcingTerm, TrigFunction, kappa_forcing, subcritical_check
from .geometry import RadialEmbedding, evaluate_curvature, functional_value
from .harmonics import HarmonicBasis, SphereGrid
from .monitors import admissibility_report, noncollapse_min_Z, pinching_ratio
from .morse import assemble_complex, concentrated_complex, find_critical_points, homology_ranks
from .torus import FlatTorus, TorusPoint, lift_path, min_displacement, wrap

__all__ = [
    "TorusflowError",
    "FlatTorus",
    "TorusPoint",
    "wrap",
    "min_displacement",
    "lift_path",
    "TrigFunction",
    "ForcingTerm",
    "kappa_forcing",
    "subcritical_check",
    "SphereGrid",
    "HarmonicBasis",
    "RadialEmbedding",
    "evaluate_curvature",
    "functional_value",
    "pinching_ratio",
    "noncollapse_min_Z",
    "admissibility_report",
    "StepControl",
    "Termination",
    "step",
    "run_flow",
    "round_sphere_oracle",
    "find_critical_points",
    "assemble_complex",
    "concentrated_complex",
    "homology_ranks",
]
