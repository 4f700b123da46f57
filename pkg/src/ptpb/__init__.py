"""Prescribed-time, prescribed-bound tracking control for Euler-Lagrange systems
under joint position, velocity and torque limits."""

from __future__ import annotations

from .exceptions import PTPBError
from .models import JointState, ModelBounds, PlanarArm, PlanarArmParams, estimate_bounds, forward_dynamics, make_model
from .pipeline import ConstraintBox, GainSet
from .tbg import TBGProfile, eval_h, tbg_bounds

__version__ = "0.1.0"

__all__ = [
    "ConstraintBox",
    "GainSet",
    "JointState",
    "ModelBounds",
    "PTPBError",
    "PlanarArm",
    "PlanarArmParams",
    "TBGProfile",
    "estimate_bounds",
    "eval_h",
    "forward_dynamics",
    "make_model",
    "tbg_bounds",
]
