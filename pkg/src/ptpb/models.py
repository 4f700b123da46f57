"""Euler-Lagrange plant models and their norm-bound constants.

A plant is anything exposing ``n`` plus the four evaluators ``mass``,
``coriolis``, ``gravity`` and ``friction``; the equations of motion are

    M(q) ddq + C(q, dq) dq + G(q) + F(dq) + d = u.

Only the simulator and the feasibility calculus read these matrices. The
controller never does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .exceptions import DimensionError, SingularMassError
from .pipeline import ConstraintBox


@dataclass(frozen=True)
class JointState:
    """Generalized positions ``q`` (rad) and velocities ``dq`` (rad/s)."""

    q: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        dq = np.atleast_1d(np.asarray(self.dq, dtype=float))
        if q.ndim != 1 or q.shape != dq.shape or q.size == 0:
            raise DimensionError(f"q and dq must be equal-length vectors, got {q.shape} and {dq.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq))):
            raise ValueError("JointState entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "dq", dq)

    @property
    def n(self) -> int:
        return self.q.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.q, self.dq])


@runtime_checkable
class DynamicsProvider(Protocol):
    n: int

    def mass(self, q: np.ndarray) -> np.ndarray: ...

    def coriolis(self, q: np.ndarray, dq: np.ndarray) -> np.ndarray: ...

    def gravity(self, q: np.ndarray) -> np.ndarray: ...

    def friction(self, dq: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PlanarArmParams:
    """Physical parameters of the two-link planar arm moving in a vertical plane."""

    masses: tuple[float, float] = (1.0, 1.0)
    lengths: tuple[float, float] = (1.0, 1.0)
    com: tuple[float, float] = (0.5, 0.5)
    inertias: tuple[float, float] | None = None
    friction: tuple[float, float] = (0.1, 0.1)
    g: float = 9.81

    def __post_init__(self):
        if self.inertias is None:
            # slender rods about their centers
            inertias = tuple(m * l**2 / 12.0 for m, l in zip(self.masses, self.lengths))
            object.__setattr__(self, "inertias", inertias)
        for name in ("masses", "lengths", "com", "inertias", "friction"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 2:
                raise DimensionError(f"{name} needs two entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        if min(self.masses) <= 0 or min(self.lengths) <= 0:
            raise ValueError("masses and lengths must be positive")
        if min(self.inertias) < 0 or min(self.friction) < 0:
            raise ValueError("inertias and friction coefficients must be non-negative")


class PlanarArm:
    """Two-link revolute arm (R2), joint 1 measured from the horizontal.

    The Coriolis matrix uses Christoffel symbols, so ``dM/dt - 2C`` is
    skew-symmetric.
    """

    n = 2

    def __init__(self, params: PlanarArmParams | None = None):
        self.params = params or PlanarArmParams()
        p = self.params
        m1, m2 = p.masses
        l1, _ = p.lengths
        c1, c2 = p.com
        i1, i2 = p.inertias
        self._a = m1 * c1**2 + i1 + m2 * (l1**2 + c2**2) + i2
        self._b = m2 * l1 * c2
        self._d = m2 * c2**2 + i2
        self._g1 = (m1 * c1 + m2 * l1) * p.g
        self._g2 = m2 * c2 * p.g
        self._fric = np.array(p.friction)

    def mass(self, q):
        c = math.cos(q[1])
        m12 = self._d + self._b * c
        return np.array([[self._a + 2.0 * self._b * c, m12], [m12, self._d]])

    def coriolis(self, q, dq):
        h = self._b * math.sin(q[1])
        return np.array([[-h * dq[1], -h * (dq[0] + dq[1])], [h * dq[0], 0.0]])

    def gravity(self, q):
        c12 = math.cos(q[0] + q[1])
        return np.array([self._g1 * math.cos(q[0]) + self._g2 * c12, self._g2 * c12])

    def friction(self, dq):
        return self._fric * dq

    def potential(self, q) -> float:
        """Gravitational potential energy, zero with both links horizontal."""
        return self._g1 * math.sin(q[0]) + self._g2 * math.sin(q[0] + q[1])

    def energy(self, q, dq) -> float:
        dq = np.asarray(dq, dtype=float)
        return 0.5 * float(dq @ self.mass(q) @ dq) + self.potential(q)


MODELS = {"r2": PlanarArm}


def make_model(name: str = "r2", params: dict | None = None) -> DynamicsProvider:
    """Build a model by registry name, optionally overriding its parameters."""
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    if params:
        return cls(PlanarArmParams(**params))
    return cls()


def forward_dynamics(model: DynamicsProvider, state: JointState, u, d) -> np.ndarray:
    """Joint accelerations from the equations of motion."""
    return _accel(model, state.q, state.dq, np.asarray(u, dtype=float), np.asarray(d, dtype=float))


def _accel(model, q, dq, u, d):
    rhs = u - model.coriolis(q, dq) @ dq - model.gravity(q) - model.friction(dq) - d
    try:
        ddq = np.linalg.solve(model.mass(q), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(f"mass matrix solve failed at q={q}") from exc
    if not np.all(np.isfinite(ddq)):
        raise SingularMassError(f"non-finite acceleration at q={q}")
    return ddq


def spectral_norm(a, iterations: int = 100, tol: float = 1e-12) -> float:
    """Largest singular value; SVD up to 3x3, power iteration on A^T A above."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if max(a.shape) <= 3:
        return float(np.linalg.svd(a, compute_uv=False)[0])
    ata = a.T @ a
    v = np.ones(ata.shape[0]) / math.sqrt(ata.shape[0])
    lam = 0.0
    for _ in range(iterations):
        w = ata @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ ata @ v)
        if abs(new - lam) <= tol * max(1.0, new):
            lam = new
            break
        lam = new
    return math.sqrt(max(lam, 0.0))


@dataclass(frozen=True)
class ModelBounds:
    """Norm-bound constants for the mass, Coriolis, gravity and friction terms."""

    m_lower: float
    m_upper: float
    minv_lower: float
    minv_upper: float
    c_bar: float
    g_bar: float
    f_bar: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 < self.m_lower <= self.m_upper):
            raise ValueError(f"need 0 < m_lower <= m_upper, got {self.m_lower}, {self.m_upper}")
        if not (0 < self.minv_lower <= self.minv_upper):
            raise ValueError("need 0 < minv_lower <= minv_upper")
        if min(self.c_bar, self.g_bar, self.f_bar) < 0:
            raise ValueError("norm-bound coefficients must be non-negative")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("m_lower", "m_upper", "minv_lower", "minv_upper", "c_bar", "g_bar", "f_bar")}


def estimate_bounds(
    model: DynamicsProvider,
    box: ConstraintBox,
    samples: int = 4096,
    seed: int = 0,
    safety_factor: float = 1.1,
) -> ModelBounds:
    """Sample the state box and bound the model matrices.

    Samples are the box corners plus ``samples`` seeded uniform draws of
    ``(q, dq)``. Upper bounds are multiplied by ``safety_factor``, lower
    bounds divided by it.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if safety_factor < 1.0:
        raise ValueError("safety_factor must be >= 1")
    box.validate()
    n = model.n
    if box.n != n:
        raise DimensionError(f"box has {box.n} joints, model has {n}")

    rng = np.random.default_rng(seed)
    qs = rng.uniform(box.theta_minus, box.theta_plus, size=(samples, n))
    dqs = rng.uniform(box.nu_minus, box.nu_plus, size=(samples, n))
    corners_q = _corners(box.theta_minus, box.theta_plus)
    corners_dq = _corners(box.nu_minus, box.nu_plus)
    qs = np.vstack([corners_q, qs])
    dqs = np.vstack([corners_dq[np.arange(len(corners_q)) % len(corners_dq)], dqs])

    lam_min, lam_max = math.inf, 0.0
    c_bar = g_bar = f_bar = 0.0
    for q, dq in zip(qs, dqs):
        eig = np.linalg.eigvalsh(model.mass(q))
        lam_min = min(lam_min, eig[0])
        lam_max = max(lam_max, eig[-1])
        g_bar = max(g_bar, float(np.linalg.norm(model.gravity(q))))
        ndq = float(np.linalg.norm(dq))
        if ndq > 0.0:
            c_bar = max(c_bar, spectral_norm(model.coriolis(q, dq)) / ndq)
            f_bar = max(f_bar, float(np.linalg.norm(model.friction(dq))) / ndq)
    if lam_min <= 0.0:
        raise SingularMassError(f"mass matrix not positive definite (min eigenvalue {lam_min})")

    s = safety_factor
    return ModelBounds(
        m_lower=lam_min / s,
        m_upper=lam_max * s,
        minv_lower=1.0 / (lam_max * s),
        minv_upper=s / lam_min,
        c_bar=c_bar * s,
        g_bar=g_bar * s,
        f_bar=f_bar * s,
        meta={"samples": int(len(qs)), "seed": seed, "safety_factor": s},
    )


def _corners(lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    idx = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    return np.where(idx == 1, hi, lo)

