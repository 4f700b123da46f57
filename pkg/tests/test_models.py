from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ptpb.exceptions import DimensionError, SingularMassError
from ptpb.models import (
    JointState,
    ModelBounds,
    PlanarArm,
    PlanarArmParams,
    estimate_bounds,
    forward_dynamics,
    make_model,
    spectral_norm,
)
from ptpb.pipeline import ConstraintBox

angles = st.floats(-math.pi, math.pi, allow_nan=False)
rates = st.floats(-3.0, 3.0, allow_nan=False)


def _lagrangian_oracle(params: PlanarArmParams):
    """Symbolic equations of motion of the two-link arm built from its Lagrangian."""
    q1, q2, dq1, dq2 = sp.symbols("q1 q2 dq1 dq2", real=True)
    m1, m2 = params.masses
    l1, _ = params.lengths
    c1, c2 = params.com
    i1, i2 = params.inertias
    g = params.g
    # centre-of-mass positions, joint 1 measured from the horizontal
    x1, y1 = c1 * sp.cos(q1), c1 * sp.sin(q1)
    x2 = l1 * sp.cos(q1) + c2 * sp.cos(q1 + q2)
    y2 = l1 * sp.sin(q1) + c2 * sp.sin(q1 + q2)
    qs, dqs = [q1, q2], [dq1, dq2]

    def vel(expr):
        return sum(sp.diff(expr, qi) * dqi for qi, dqi in zip(qs, dqs))

    kin = (
        sp.Rational(1, 2) * m1 * (vel(x1) ** 2 + vel(y1) ** 2)
        + sp.Rational(1, 2) * m2 * (vel(x2) ** 2 + vel(y2) ** 2)
        + sp.Rational(1, 2) * i1 * dq1**2
        + sp.Rational(1, 2) * i2 * (dq1 + dq2) ** 2
    )
    pot = m1 * g * y1 + m2 * g * y2
    dq = sp.Matrix(dqs)
    M = sp.hessian(kin, dqs)
    G = sp.Matrix([sp.diff(pot, qi) for qi in qs])
    # Coriolis/centrifugal vector: dM/dt dq - d(kin)/dq
    Mdot = sp.Matrix(2, 2, lambda i, j: vel(M[i, j]))
    Cdq = Mdot * dq - sp.Matrix([sp.diff(kin, qi) for qi in qs])
    args = (q1, q2, dq1, dq2)
    return sp.lambdify(args, M, "numpy"), sp.lambdify(args, Cdq, "numpy"), sp.lambdify(args, G, "numpy")


@pytest.fixture(scope="module")
def oracle():
    return _lagrangian_oracle(PlanarArmParams())


@settings(max_examples=60, deadline=None)
@given(angles, angles, rates, rates)
def test_matrices_match_symbolic_lagrangian(oracle, q1, q2, dq1, dq2):
    M_o, Cdq_o, G_o = oracle
    arm = PlanarArm()
    q, dq = np.array([q1, q2]), np.array([dq1, dq2])
    np.testing.assert_allclose(arm.mass(q), np.array(M_o(q1, q2, dq1, dq2), dtype=float), atol=1e-12)
    np.testing.assert_allclose(
        arm.coriolis(q, dq) @ dq, np.array(Cdq_o(q1, q2, dq1, dq2), dtype=float).ravel(), atol=1e-12
    )
    np.testing.assert_allclose(arm.gravity(q), np.array(G_o(q1, q2, dq1, dq2), dtype=float).ravel(), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(angles, angles, rates, rates, st.floats(-20, 20), st.floats(-20, 20))
def test_forward_dynamics_solves_equation_of_motion(q1, q2, dq1, dq2, u1, u2):
    arm = PlanarArm()
    s = JointState([q1, q2], [dq1, dq2])
    u, d = np.array([u1, u2]), np.array([0.3, -0.1])
    ddq = forward_dynamics(arm, s, u, d)
    lhs = arm.mass(s.q) @ ddq + arm.coriolis(s.q, s.dq) @ s.dq + arm.gravity(s.q) + arm.friction(s.dq) + d
    np.testing.assert_allclose(lhs, u, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(angles, angles, rates, rates, st.floats(-1, 1), st.floats(-1, 1))
def test_mdot_minus_two_c_is_skew(q1, q2, dq1, dq2, x1, x2):
    arm = PlanarArm()
    q, dq = np.array([q1, q2]), np.array([dq1, dq2])
    h = 1e-6
    mdot = (arm.mass(q + h * dq) - arm.mass(q - h * dq)) / (2 * h)
    n = mdot - 2 * arm.coriolis(q, dq)
    np.testing.assert_allclose(n, -n.T, atol=1e-8)
    x = np.array([x1, x2])
    assert abs(x @ n @ x) < 1e-8


@settings(max_examples=60, deadline=None)
@given(angles, angles)
def test_mass_symmetric_positive_definite(q1, q2):
    M = PlanarArm().mass(np.array([q1, q2]))
    np.testing.assert_array_equal(M, M.T)
    assert np.linalg.eigvalsh(M)[0] > 0


def test_energy_conserved_without_friction_or_input():
    arm = PlanarArm(PlanarArmParams(friction=(0.0, 0.0)))
    x = np.array([0.4, -0.7, 0.5, -0.2])
    zero = np.zeros(2)

    def f(x):
        return np.concatenate((x[2:], forward_dynamics(arm, JointState(x[:2], x[2:]), zero, zero)))

    e0 = arm.energy(x[:2], x[2:])
    dt = 1e-3
    for _ in range(1000):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert abs(arm.energy(x[:2], x[2:]) - e0) / abs(e0) < 1e-6


def test_joint_state_validation():
    with pytest.raises(DimensionError):
        JointState([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        JointState([0.0, math.nan], [0.0, 0.0])
    assert JointState([1.0, 2.0], [3.0, 4.0]).stacked().tolist() == [1.0, 2.0, 3.0, 4.0]


class _SingularArm(PlanarArm):
    def mass(self, q):
        return np.zeros((2, 2))


def test_singular_mass_raises():
    with pytest.raises(SingularMassError):
        forward_dynamics(_SingularArm(), JointState([0, 0], [0, 0]), np.zeros(2), np.zeros(2))


def test_make_model_registry():
    assert isinstance(make_model("r2"), PlanarArm)
    heavy = make_model("r2", {"masses": [2.0, 2.0]})
    assert heavy.mass(np.zeros(2))[0, 0] > PlanarArm().mass(np.zeros(2))[0, 0]
    with pytest.raises(ValueError):
        make_model("scara")


def test_spectral_norm_power_iteration_matches_svd():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 5))
    assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-8)
    assert spectral_norm(np.zeros((5, 5))) == 0.0


def _dense_scan(arm: PlanarArm, box: ConstraintBox, count: int = 1_000_000, seed: int = 11):
    """Vectorized closed-form scan of the bound constants over the state box."""
    rng = np.random.default_rng(seed)
    q2 = rng.uniform(box.theta_minus[1], box.theta_plus[1], count)
    q1 = rng.uniform(box.theta_minus[0], box.theta_plus[0], count)
    dq = rng.uniform(box.nu_minus, box.nu_plus, size=(count, 2))
    p = arm.params
    m1, m2 = p.masses
    l1 = p.lengths[0]
    c1, c2 = p.com
    i1, i2 = p.inertias
    a = m1 * c1**2 + i1 + m2 * (l1**2 + c2**2) + i2
    b = m2 * l1 * c2
    d = m2 * c2**2 + i2
    m11 = a + 2 * b * np.cos(q2)
    m12 = d + b * np.cos(q2)
    tr = m11 + d
    det = m11 * d - m12**2
    disc = np.sqrt(tr**2 / 4 - det)
    lam_max = tr / 2 + disc
    lam_min = tr / 2 - disc
    g1 = (m1 * c1 + m2 * l1) * p.g
    g2 = m2 * c2 * p.g
    G = np.hypot(g1 * np.cos(q1) + g2 * np.cos(q1 + q2), g2 * np.cos(q1 + q2))
    h = np.abs(b * np.sin(q2))
    # |C| = h * |[[-dq2, -(dq1+dq2)], [dq1, 0]]|
    c_mats = np.stack(
        [np.stack([-dq[:, 1], -(dq[:, 0] + dq[:, 1])], -1), np.stack([dq[:, 0], np.zeros(count)], -1)], -2
    )
    c_norm = h * np.linalg.svd(c_mats, compute_uv=False)[:, 0] / np.linalg.norm(dq, axis=1)
    return lam_min.min(), lam_max.max(), G.max(), c_norm.max()


def test_estimate_bounds_within_five_percent_of_dense_scan(arm, box):
    est = estimate_bounds(arm, box, samples=4096, seed=0, safety_factor=1.0)
    lam_min, lam_max, g_bar, c_bar = _dense_scan(arm, box)
    assert est.m_upper == pytest.approx(lam_max, rel=0.05)
    assert est.m_lower == pytest.approx(lam_min, rel=0.05)
    assert est.minv_upper == pytest.approx(1 / lam_min, rel=0.05)
    assert est.g_bar == pytest.approx(g_bar, rel=0.05)
    assert est.c_bar == pytest.approx(c_bar, rel=0.05)
    assert est.f_bar == pytest.approx(0.1, rel=1e-9)


def test_estimate_bounds_safety_factor_and_determinism(arm, box):
    a = estimate_bounds(arm, box, samples=256, seed=5, safety_factor=1.0)
    b = estimate_bounds(arm, box, samples=256, seed=5, safety_factor=1.2)
    assert b.m_upper == pytest.approx(1.2 * a.m_upper)
    assert b.m_lower == pytest.approx(a.m_lower / 1.2)
    assert estimate_bounds(arm, box, samples=256, seed=5, safety_factor=1.0) == a
    with pytest.raises(ValueError):
        estimate_bounds(arm, box, samples=0)
    with pytest.raises(ValueError):
        estimate_bounds(arm, box, safety_factor=0.9)


def test_model_bounds_rejects_inconsistent_values():
    with pytest.raises(ValueError):
        ModelBounds(m_lower=2, m_upper=1, minv_lower=0.5, minv_upper=1, c_bar=0, g_bar=0, f_bar=0)
