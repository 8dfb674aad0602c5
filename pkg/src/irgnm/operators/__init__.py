"""Forward operators, derivatives and adjoints for phase contrast imaging."""

from .objects import ConstraintSpec, HoloData, Object2D, Volume3D
from .phasecontrast import (
    PhaseContrastOperator,
    ctf_apply,
    ctf_invert_homogeneous,
    ctf_multipliers,
    pc_adjoint,
    pc_derivative,
    pc_forward,
)
from .radon import ParallelProjector, backproject, radon
from .tomo import TomoPhaseContrastOperator, tomo_adjoint, tomo_derivative, tomo_forward

__all__ = [
    "ConstraintSpec",
    "HoloData",
    "Object2D",
    "Volume3D",
    "PhaseContrastOperator",
    "ctf_apply",
    "ctf_invert_homogeneous",
    "ctf_multipliers",
    "pc_adjoint",
    "pc_derivative",
    "pc_forward",
    "ParallelProjector",
    "backproject",
    "radon",
    "TomoPhaseContrastOperator",
    "tomo_adjoint",
    "tomo_derivative",
    "tomo_forward",
]
