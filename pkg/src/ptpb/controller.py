"""Adaptive barrier control policy with input saturation.

The policy only sees errors (``eps``, ``epsdot``, ``chi``) and the
constraint-law state ``xi``. It has no access to the plant model: this module
must never import :mod:`ptpb.models`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BarrierBreachError
from .pipeline import D_NORM, ConstraintBox, GainSet

CHI_ZERO = 1e-12


@dataclass(frozen=True)
class ControlOutput:
    tau: np.ndarray
    u: np.ndarray
    K: float
    Gamma: float


def gamma_fn(eps, epsdot) -> float:
    a = math.sqrt(float(np.dot(eps, eps)))
    b = math.sqrt(float(np.dot(epsdot, epsdot)))
    return 4.0 * max(1.0, a, b, a * b)


def barrier_gain(gains: GainSet, chi) -> float:
    """``rho |chi| / (varpi - |chi|)``; raises once ``|chi|`` reaches ``varpi``."""
    nchi = math.sqrt(float(np.dot(chi, chi)))
    return _barrier(gains, nchi)


def _barrier(gains: GainSet, nchi: float) -> float:
    if not nchi < gains.varpi:
        raise BarrierBreachError(nchi, gains.varpi)
    return gains.rho * nchi / (gains.varpi - nchi)


def raw_command(gains: GainSet, chi, eps, epsdot, xi) -> np.ndarray:
    """Unconstrained command ``tau``, anti-parallel to ``chi``.

    Below ``|chi| = 1e-12`` the command is zero, the continuous extension
    of ``K(chi) chi/|chi|`` at the origin.
    """
    chi = np.asarray(chi, dtype=float)
    nchi = math.sqrt(float(np.dot(chi, chi)))
    K = _barrier(gains, nchi)
    if nchi < CHI_ZERO:
        return np.zeros_like(chi)
    nxi = math.sqrt(float(np.dot(xi, xi)))
    return -(K * (gamma_fn(eps, epsdot) + nxi * D_NORM) / nchi) * chi


def saturation_matrix(box: ConstraintBox, tau) -> np.ndarray:
    """Diagonal entries of ``Pi(tau)`` so that ``u = Pi(tau) tau``."""
    tau = np.asarray(tau, dtype=float)
    pi = np.ones_like(tau)
    hi = tau > box.u_plus
    lo = tau < box.u_minus
    pi[hi] = box.u_plus[hi] / tau[hi]
    pi[lo] = box.u_minus[lo] / tau[lo]
    return pi


def saturate(box: ConstraintBox, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    # componentwise select, so in-box entries pass through bit-exact
    return np.where(tau > box.u_plus, box.u_plus, np.where(tau < box.u_minus, box.u_minus, tau))


def control_step(gains: GainSet, box: ConstraintBox, eps, epsdot, chi, xi) -> ControlOutput:
    """Full policy evaluation: ``Gamma``, ``K``, ``tau`` and the applied ``u``."""
    chi = np.asarray(chi, dtype=float)
    nchi = math.sqrt(float(np.dot(chi, chi)))
    K = _barrier(gains, nchi)
    Gamma = gamma_fn(eps, epsdot)
    if nchi < CHI_ZERO:
        tau = np.zeros_like(chi)
    else:
        nxi = math.sqrt(float(np.dot(xi, xi)))
        tau = -(K * (Gamma + nxi * D_NORM) / nchi) * chi
    return ControlOutput(tau=tau, u=saturate(box, tau), K=K, Gamma=Gamma)
