"""Error pipeline: tracking errors, dynamic bounds, filtered error and the
state-constraint variable.

Everything here works on plain arrays plus two small value types
(:class:`ConstraintBox`, :class:`GainSet`). Nothing in this module touches
a plant model; ``state`` arguments only need ``.q`` and ``.dq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import (
    DimensionError,
    EmptyBoxError,
    InfeasibleMarginError,
    SingularLambdaError,
    ValidationError,
)
from .tbg import TBGProfile, error_refs

D_NORM = math.sqrt(2.0)  # spectral norm of [-I; I]
Y_FLOOR = 1e-9
PHI_FD_STEP = 1e-6

Reference = Callable[[float], "tuple[np.ndarray, np.ndarray, np.ndarray]"]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstraintBox:
    """Asymmetric box bounds on positions, velocities and inputs."""

    theta_minus: np.ndarray
    theta_plus: np.ndarray
    nu_minus: np.ndarray
    nu_plus: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray

    def __post_init__(self):
        for name in ("theta_minus", "theta_plus", "nu_minus", "nu_plus", "u_minus", "u_plus"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        self.validate()

    @classmethod
    def symmetric(cls, theta, nu, u) -> ConstraintBox:
        theta, nu, u = _vec(theta), _vec(nu), _vec(u)
        return cls(-theta, theta, -nu, nu, -u, u)

    @property
    def n(self) -> int:
        return self.theta_minus.size

    def validate(self) -> None:
        n = self.theta_minus.size
        for name in ("theta_plus", "nu_minus", "nu_plus", "u_minus", "u_plus"):
            if getattr(self, name).size != n:
                raise DimensionError(f"{name} has length {getattr(self, name).size}, expected {n}")
        if not np.all(self.theta_minus < self.theta_plus):
            raise EmptyBoxError("position box is empty: need theta_minus < theta_plus componentwise")
        if not np.all(self.nu_minus < self.nu_plus):
            raise EmptyBoxError("velocity box is empty: need nu_minus < nu_plus componentwise")
        if not (np.all(self.u_minus < 0) and np.all(self.u_plus > 0)):
            raise EmptyBoxError("input box must satisfy u_minus < 0 < u_plus componentwise")

    def contains_state(self, q, dq) -> bool:
        return bool(
            np.all(self.theta_minus <= q)
            and np.all(q <= self.theta_plus)
            and np.all(self.nu_minus <= dq)
            and np.all(dq <= self.nu_plus)
        )

    def contains_input(self, u) -> bool:
        return bool(np.all(self.u_minus <= u) and np.all(u <= self.u_plus))

    def kappa_lower_bound(self) -> float:
        return float(np.max((self.nu_plus - self.nu_minus) / (self.theta_plus - self.theta_minus)))


@dataclass(frozen=True)
class GainSet:
    """Controller gains. ``c`` defaults to ``varpi``."""

    kp: np.ndarray
    rho: float
    varpi: float
    gamma: float
    alpha: float
    kappa: float
    c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kp", _vec(self.kp))
        if self.c is None:
            object.__setattr__(self, "c", float(self.varpi))
        if not np.all(self.kp > 0):
            raise ValidationError("Kp entries must be positive")
        for name in ("rho", "varpi", "gamma", "kappa"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not 0 < self.alpha <= 1.0 / D_NORM * (1 + 1e-12):
            raise ValidationError(f"alpha must lie in (0, 1/sqrt(2)], got {self.alpha}")
        if self.c < 0:
            raise ValidationError("safety margin c must be non-negative")

    @property
    def kp_min(self) -> float:
        return float(self.kp.min())

    @property
    def kp_max(self) -> float:
        return float(self.kp.max())

    @property
    def position_bound(self) -> float:
        """Ultimate bound on ``|e|`` after ``t0 + T`` (rad)."""
        return self.varpi / self.kp_min

    @property
    def rate_bound(self) -> float:
        """Ultimate bound on ``|de/dt|`` after ``t0 + T`` (rad/s)."""
        return self.varpi * (1.0 + self.kp_max / self.kp_min)

    def check_against(self, box: ConstraintBox) -> None:
        """Raise :class:`ValidationError` when kappa or Kp do not fit ``box``."""
        if self.kp.size != box.n:
            raise ValidationError(f"Kp has {self.kp.size} entries, box has {box.n} joints")
        kmin = box.kappa_lower_bound()
        if not self.kappa > kmin:
            raise ValidationError(
                f"kappa = {self.kappa} violates kappa > max_i (nu+_i - nu-_i)/(theta+_i - theta-_i) = {kmin:.6g}"
            )


@dataclass
class ConstraintLawState:
    """Integrated constraint-law state: ``xi`` always, ``upsilon`` in upsilon mode."""

    xi: np.ndarray
    upsilon: np.ndarray | None = None


def stack_d(chi: np.ndarray) -> np.ndarray:
    """``D @ chi`` with ``D = [-I; I]``."""
    return np.concatenate((-chi, chi))


def tracking_error(ref, state) -> tuple[np.ndarray, np.ndarray]:
    qr, dqr = _vec(ref[0]), _vec(ref[1])
    q, dq = _vec(state.q), _vec(state.dq)
    if q.shape != qr.shape or dq.shape != dqr.shape:
        raise DimensionError(f"state has {q.size} joints, reference has {qr.size}")
    return q - qr, dq - dqr


def transformed_error(profile: TBGProfile, t: float, e, edot) -> tuple[np.ndarray, np.ndarray]:
    e_d, ed_d, _ = error_refs(profile, t)
    return e - e_d, edot - ed_d


def filtered_error(gains: GainSet, eps, epsdot) -> np.ndarray:
    return epsdot + gains.kp * eps


def velocity_band(e_minus, e_plus, ed_minus, ed_plus, kappa: float, e):
    """Dynamic bounds on the error rate.

    Returns ``(lower, upper, lower_is_rate, upper_is_rate)``; the flags mark
    which argument of the max/min was selected (ties pick the rate bound).
    """
    pos_lo = kappa * (e_minus - e)
    pos_hi = kappa * (e_plus - e)
    lo_rate = ed_minus >= pos_lo
    hi_rate = ed_plus <= pos_hi
    lower = np.where(lo_rate, ed_minus, pos_lo)
    upper = np.where(hi_rate, ed_plus, pos_hi)
    return lower, upper, lo_rate, hi_rate


def dynamic_bounds(box: ConstraintBox, gains: GainSet, ref, e) -> tuple[np.ndarray, np.ndarray]:
    """``(etil_minus, etil_plus)`` for the current reference and position error."""
    qr, dqr = _vec(ref[0]), _vec(ref[1])
    lower, upper, _, _ = velocity_band(
        box.theta_minus - qr, box.theta_plus - qr, box.nu_minus - dqr, box.nu_plus - dqr, gains.kappa, _vec(e)
    )
    if np.any(lower > upper):
        raise InfeasibleMarginError(f"dynamic velocity band is empty: lower={lower}, upper={upper}")
    return lower, upper


def _phi_parts(box, gains, profile, t, q, dq, ref):
    qr, dqr = _vec(ref[0]), _vec(ref[1])
    e_d, ed_d, _ = error_refs(profile, t)
    e = q - qr
    eps = e - e_d
    lower, upper, lo_rate, hi_rate = velocity_band(
        box.theta_minus - qr, box.theta_plus - qr, box.nu_minus - dqr, box.nu_plus - dqr, gains.kappa, e
    )
    kpe = gains.kp * eps
    phi0_minus = lower - ed_d + kpe
    phi0_plus = upper - ed_d + kpe
    return phi0_minus, phi0_plus, np.concatenate((lo_rate, hi_rate))


def phi_vectors(box: ConstraintBox, gains: GainSet, profile: TBGProfile, t: float, state, ref, check: bool = True):
    """Bound vectors ``(Phi0, Phi)`` on ``D chi``; ``Phi = Phi0 - c``.

    With ``check`` set, an empty shrunk band ``phi0+ - c < phi0- + c`` raises
    :class:`InfeasibleMarginError`.
    """
    phi0_minus, phi0_plus, _ = _phi_parts(box, gains, profile, t, _vec(state.q), _vec(state.dq), ref)
    c = gains.c
    if check and np.any(phi0_plus - c < phi0_minus + c):
        raise InfeasibleMarginError(
            f"safety margin c = {c} leaves an empty band: phi0- = {phi0_minus}, phi0+ = {phi0_plus}"
        )
    phi0 = np.concatenate((-phi0_minus, phi0_plus))
    return phi0, phi0 - c


def phi_rate(box: ConstraintBox, gains: GainSet, profile: TBGProfile, t: float, q, dq, ref) -> np.ndarray:
    """Exact time derivative of ``Phi`` given ``ref = (qr, dqr, ddqr)``.

    Each dynamic bound is differentiated along its active branch: the rate
    branch moves with ``-ddqr``, the position branch with ``-kappa dq``.
    """
    qr, dqr, ddqr = _vec(ref[0]), _vec(ref[1]), _vec(ref[2])
    q, dq = _vec(q), _vec(dq)
    _, ed_d, edd_d = error_refs(profile, t)
    _, _, lo_rate, hi_rate = velocity_band(
        box.theta_minus - qr, box.theta_plus - qr, box.nu_minus - dqr, box.nu_plus - dqr, gains.kappa, q - qr
    )
    pos = -gains.kappa * dq
    common = -edd_d + gains.kp * (dq - dqr - ed_d)
    d_lower = np.where(lo_rate, -ddqr, pos) + common
    d_upper = np.where(hi_rate, -ddqr, pos) + common
    return np.concatenate((-d_lower, d_upper))


def phi_rate_fd(
    box: ConstraintBox,
    gains: GainSet,
    profile: TBGProfile,
    reference: Reference,
    t: float,
    q,
    dq,
    ddq,
    step: float = PHI_FD_STEP,
) -> np.ndarray:
    """Total time derivative of ``Phi`` along the motion ``(dq, ddq)``.

    Central difference with ``step``; where the max/min branch of the dynamic
    bounds changes inside ``[t - step, t + step]`` the one-sided difference on
    the side sharing the branch active at ``t`` is used instead.
    """
    q, dq, ddq = _vec(q), _vec(dq), _vec(ddq)
    lo_t = max(t - step, profile.t0)
    hi_t = t + step

    def at(s):
        r = reference(s)
        pm, pp, br = _phi_parts(box, gains, profile, s, q + (s - t) * dq, dq + (s - t) * ddq, (r[0], r[1]))
        return np.concatenate((-pm, pp)), br

    p_lo, b_lo = at(lo_t)
    p_mid, b_mid = at(t)
    p_hi, b_hi = at(hi_t)
    rate = (p_hi - p_lo) / (hi_t - lo_t)
    switched = b_lo != b_hi
    if np.any(switched):
        fwd = (p_hi - p_mid) / (hi_t - t)
        bwd = (p_mid - p_lo) / (t - lo_t) if t > lo_t else fwd
        use_fwd = switched & (b_mid == b_hi)
        use_bwd = switched & ~use_fwd
        rate = np.where(use_fwd, fwd, np.where(use_bwd, bwd, rate))
    return rate


def xi_derivative(gains: GainSet, xi, chi) -> np.ndarray:
    """Right-hand side of the constraint law ``-gamma xi + gamma alpha D chi``."""
    return gains.gamma * (gains.alpha * stack_d(chi) - xi)


def xi_step(gains: GainSet, xi, chi, dt: float) -> np.ndarray:
    """Explicit Euler stage of the constraint law (the simulator runs RK4 on
    :func:`xi_derivative` instead)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return xi + dt * xi_derivative(gains, xi, chi)


def xi_from_upsilon(chi, upsilon, phi) -> np.ndarray:
    return stack_d(chi) + upsilon * upsilon - phi


def upsilon_init(phi) -> np.ndarray:
    """Slack initialisation ``sqrt(Phi(t0))`` that makes ``xi(t0) = 0`` when ``chi(t0) = 0``."""
    phi = _vec(phi)
    if np.any(phi < Y_FLOOR**2):
        raise SingularLambdaError(f"Phi(t0) must be positive componentwise to start upsilon mode, got {phi}")
    return np.sqrt(phi)


def upsilon_derivative(gains: GainSet, upsilon, xi, chi, chidot, phidot) -> np.ndarray:
    """``0.5 Lambda^-1 (-gamma xi + gamma alpha D chi + dPhi - D dchi)``."""
    upsilon = _vec(upsilon)
    if np.any(np.abs(upsilon) < Y_FLOOR):
        raise SingularLambdaError(f"slack component below {Y_FLOOR}: {upsilon}")
    forcing = xi_derivative(gains, xi, chi) + phidot - stack_d(chidot)
    return 0.5 * forcing / upsilon


def upsilon_mode_step(gains: GainSet, upsilon, chi, chidot, phi, phidot, dt: float) -> np.ndarray:
    """Explicit Euler stage of the slack update, with ``xi`` recovered from ``upsilon``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = xi_from_upsilon(chi, upsilon, phi)
    return upsilon + dt * upsilon_derivative(gains, upsilon, xi, chi, chidot, phidot)
