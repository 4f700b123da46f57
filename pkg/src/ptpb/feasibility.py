"""Feasibility calculus for a prescribed time ``T`` under a torque budget.

Given norm-bound constants of the plant and a constraint box this module
answers: how short may ``T`` be, which ``sigma`` values make the
position-barrier conditions compatible with the torque limits, which initial
conditions are viable, and how much torque and disturbance headroom remains.
All quantities are scalars in SI units (rad, rad/s, Nm, s).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .exceptions import EmptyRegionError, InvalidSigmaError
from .models import ModelBounds, _corners
from .pipeline import ConstraintBox
from .tbg import K2, K3, K4


def u_star(box: ConstraintBox) -> float:
    """Guaranteed torque budget ``min(|u-|, |u+|)``."""
    return float(min(np.linalg.norm(box.u_minus), np.linalg.norm(box.u_plus)))


def speed_limit(box: ConstraintBox) -> float:
    """Scalar joint-speed limit ``|nu+|``."""
    return float(np.linalg.norm(box.nu_plus))


def drift_bounds(bounds: ModelBounds, box: ConstraintBox) -> tuple[float, float]:
    """Bounds ``(f_bar, g_bar)`` on the drift and input gain of the state-space form."""
    nu = speed_limit(box)
    acc = bounds.minv_upper * ((bounds.c_bar * nu + bounds.f_bar) * nu + bounds.g_bar)
    return math.hypot(nu, acc), bounds.minv_upper


def t_star(
    bounds: ModelBounds,
    box: ConstraintBox,
    eps: float,
    xr,
    candidates=None,
    u_star_val: float | None = None,
) -> float:
    """Shortest admissible prescribed time.

    ``xr`` is the stacked target ``(q, dq)``; ``candidates`` is an ``(N, 2n)``
    array of initial states (default: all corners of the state box). The
    distance to the ``eps``-ball is ``max(0, |x0 - xr| - eps)``.
    """
    us = u_star(box) if u_star_val is None else float(u_star_val)
    if not us > 0:
        raise ValueError("torque budget u* must be positive")
    f_bar, g_bar = drift_bounds(bounds, box)
    xr = np.asarray(xr, dtype=float).ravel()
    if candidates is None:
        lo = np.concatenate((box.theta_minus, box.nu_minus))
        hi = np.concatenate((box.theta_plus, box.nu_plus))
        candidates = _corners(lo, hi)
    x0 = np.atleast_2d(np.asarray(candidates, dtype=float))
    dist = np.maximum(0.0, np.linalg.norm(x0 - xr, axis=1) - eps)
    return float(dist.max() / (f_bar + g_bar * us))


def max_rate_reference(box: ConstraintBox, T: float, q_star, region: str = "rest") -> float:
    """Largest ``(k2/T)|q0 - q*|_inf + |dq0|_inf`` over admissible starts.

    ``region`` is ``"rest"`` (starts anywhere in the position box with zero
    velocity) or ``"box"`` (any velocity in the velocity box as well).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    q_star = np.asarray(q_star, dtype=float)
    reach = float(np.max(np.maximum(box.theta_plus - q_star, q_star - box.theta_minus)))
    out = K2 / T * reach
    if region == "box":
        out += float(np.max(np.maximum(box.nu_plus, -box.nu_minus)))
    elif region != "rest":
        raise ValueError(f"unknown start region {region!r}")
    return out


def sigma_bounds(
    bounds: ModelBounds,
    box: ConstraintBox,
    T: float,
    q_star,
    region: str = "rest",
    u_star_val: float | None = None,
) -> tuple[float, float]:
    """``(sigma_lower, sigma_upper)``; an empty interval means no viable set."""
    nu = speed_limit(box)
    us = u_star(box) if u_star_val is None else float(u_star_val)
    span = float(np.max(box.theta_plus - box.theta_minus))
    lower = 2.0 * max(nu, max_rate_reference(box, T, q_star, region)) / span
    upper = (us - (bounds.c_bar * nu**2 + bounds.f_bar * nu + bounds.g_bar)) / (bounds.m_upper * nu)
    return lower, upper


def eta(bounds: ModelBounds, box: ConstraintBox, sigma: float) -> float:
    """Torque consumed by worst-case drift plus the barrier term at ``sigma``."""
    nu = speed_limit(box)
    return bounds.c_bar * nu**2 + bounds.f_bar * nu + sigma * bounds.m_upper * nu + bounds.g_bar


def viable_radius(bounds: ModelBounds, box: ConstraintBox, T: float, u_star_val: float, sigma: float) -> float:
    """Radius of the viable set on the zero-velocity slice (may be negative when empty)."""
    return T**2 * (u_star_val - eta(bounds, box, sigma)) / (K3 * bounds.m_upper)


def _check_sigma(bounds, box, T, q_star, sigma, region, u_star_val):
    lo, hi = sigma_bounds(bounds, box, T, q_star, region, u_star_val)
    if not lo <= sigma < hi:
        raise InvalidSigmaError(f"sigma = {sigma} outside [{lo:.6g}, {hi:.6g})")


def viable_mask(bounds, box, T, u_star_val, q_star, sigma, q, dq) -> np.ndarray:
    """Vectorized membership for ``(N, n)`` arrays of positions and velocities.

    The barrier rates are evaluated with each candidate's own reference, so
    ``eps_dot(t0) = 0`` and the barrier conditions reduce to the position box.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    q_star = np.asarray(q_star, dtype=float)
    in_box = np.all((box.theta_minus <= q) & (q <= box.theta_plus), axis=1)
    eps_dot = np.zeros_like(dq)
    cbf = np.all(
        (-eps_dot + sigma * (box.theta_plus - q) >= 0) & (eps_dot + sigma * (q - box.theta_minus) >= 0),
        axis=1,
    )
    lhs = K3 / T**2 * np.linalg.norm(q - q_star, axis=1) + K4 / T * np.linalg.norm(dq, axis=1)
    rhs = (u_star_val - eta(bounds, box, sigma)) / bounds.m_upper
    return in_box & cbf & (lhs <= rhs)


def viable_membership(
    bounds: ModelBounds,
    box: ConstraintBox,
    T: float,
    u_star_val: float,
    q_star,
    sigma: float,
    state,
    region: str = "rest",
) -> bool:
    """Whether ``state`` lies in the viable set; ``sigma`` must be admissible."""
    _check_sigma(bounds, box, T, q_star, sigma, region, u_star_val)
    return bool(viable_mask(bounds, box, T, u_star_val, q_star, sigma, state.q, state.dq)[0])


def control_authority(bounds, box, T, u_star_val, q_star, sigma, region) -> tuple[float, float]:
    """``(u_min, d_bar)`` over a start region.

    ``region`` is either a radius (zero-velocity ball around ``q*``, closed
    form) or a pair ``(q, dq)`` of ``(N, n)`` arrays of start states.
    """
    if np.isscalar(region):
        radius = float(region)
        if radius < 0 or not math.isfinite(radius):
            raise EmptyRegionError(f"region radius must be a finite non-negative number, got {radius}")
        worst = K3 / T**2 * radius
    else:
        q, dq = (np.atleast_2d(np.asarray(a, dtype=float)) for a in region)
        if q.shape[0] == 0:
            raise EmptyRegionError("start region has no states")
        q_star = np.asarray(q_star, dtype=float)
        worst = float(np.max(K3 / T**2 * np.linalg.norm(q - q_star, axis=1) + K4 / T * np.linalg.norm(dq, axis=1)))
    u_min = eta(bounds, box, sigma) + bounds.m_upper * worst
    return u_min, max(0.0, u_star_val - u_min)


@dataclass
class FeasibilityReport:
    T: float
    sigma_lower: float
    sigma_upper: float
    sigma: float
    t_star: float
    u_star: float
    eta: float
    viable_radius: float
    start_radius: float
    u_min: float
    d_bar: float
    f_bar: float
    g_bar: float
    nonempty: bool

    def to_dict(self) -> dict:
        return asdict(self)


def feasibility_report(
    bounds: ModelBounds,
    box: ConstraintBox,
    T: float,
    q_star,
    sigma: float | None = None,
    u_star_val: float | None = None,
    eps: float = 0.0,
    start_radius: float | None = None,
    region: str = "rest",
) -> FeasibilityReport:
    """Collect every feasibility quantity for one prescribed time.

    ``sigma`` defaults to the midpoint of its admissible interval.
    ``start_radius`` is the zero-velocity start region over which ``u_min``
    is taken; by default the full viable radius, which makes ``u_min = u*``.
    """
    q_star = np.asarray(q_star, dtype=float)
    us = u_star(box) if u_star_val is None else float(u_star_val)
    lo, hi = sigma_bounds(bounds, box, T, q_star, region, us)
    if sigma is None:
        sigma = 0.5 * (lo + hi)
    et = eta(bounds, box, sigma)
    radius = viable_radius(bounds, box, T, us, sigma)
    nonempty = bool(lo < hi and us > et and lo <= sigma < hi)
    f_bar, g_bar = drift_bounds(bounds, box)
    xr = np.concatenate((q_star, np.zeros_like(q_star)))
    ts = t_star(bounds, box, eps, xr, u_star_val=us)
    if nonempty:
        r0 = radius if start_radius is None else float(start_radius)
        u_min, d_bar = control_authority(bounds, box, T, us, q_star, sigma, r0)
    else:
        r0 = 0.0 if start_radius is None else float(start_radius)
        u_min, d_bar = math.nan, 0.0
    return FeasibilityReport(
        T=float(T),
        sigma_lower=lo,
        sigma_upper=hi,
        sigma=float(sigma),
        t_star=ts,
        u_star=us,
        eta=et,
        viable_radius=max(radius, 0.0),
        start_radius=r0,
        u_min=u_min,
        d_bar=d_bar,
        f_bar=f_bar,
        g_bar=g_bar,
        nonempty=nonempty,
    )


@dataclass
class MonteCarloResult:
    q: np.ndarray
    dq: np.ndarray
    accepted: np.ndarray

    @property
    def ratio(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else 0.0

    def accepted_samples(self) -> tuple[np.ndarray, np.ndarray]:
        return self.q[self.accepted], self.dq[self.accepted]


def monte_carlo_region(
    predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
    box: ConstraintBox,
    sample_count: int,
    seed: int = 0,
    chunk: int = 4096,
    jobs: int = 1,
) -> MonteCarloResult:
    """Classify uniform samples of the state box with a vectorized predicate.

    Samples are drawn in fixed-size chunks, each from its own child of
    ``SeedSequence(seed)``, so the result depends only on ``seed`` and
    ``sample_count`` and not on ``jobs``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = box.n
    sizes = [min(chunk, sample_count - i) for i in range(0, sample_count, chunk)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        q = rng.uniform(box.theta_minus, box.theta_plus, size=(size, n))
        dq = rng.uniform(box.nu_minus, box.nu_plus, size=(size, n))
        ok = np.asarray(predicate(q, dq), dtype=bool).reshape(size)
        return q, dq, ok

    tasks = list(zip(sizes, children))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, tasks))
    else:
        parts = [work(t) for t in tasks]
    return MonteCarloResult(
        q=np.vstack([p[0] for p in parts]),
        dq=np.vstack([p[1] for p in parts]),
        accepted=np.concatenate([p[2] for p in parts]),
    )


__all__ = [
    "FeasibilityReport",
    "MonteCarloResult",
    "control_authority",
    "drift_bounds",
    "eta",
    "feasibility_report",
    "max_rate_reference",
    "monte_carlo_region",
    "sigma_bounds",
    "speed_limit",
    "t_star",
    "u_star",
    "viable_mask",
    "viable_membership",
    "viable_radius",
]
