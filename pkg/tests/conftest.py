from __future__ import annotations

import math

import numpy as np
import pytest

from ptpb.models import PlanarArm
from ptpb.pipeline import ConstraintBox, GainSet
from ptpb.sim import Scenario, benchmark_sinusoid

OFFSET_30 = math.radians(30.0)


def r2_box() -> ConstraintBox:
    return ConstraintBox.symmetric([2 * math.pi / 3] * 2, [math.pi / 3] * 2, [25.0] * 2)


def r2_gains(**kw) -> GainSet:
    base = dict(kp=[2400.0, 1000.0], rho=20.0, varpi=2.0, gamma=1.0, alpha=0.4, kappa=1.0, c=0.2)
    base.update(kw)
    return GainSet(**base)


def r2_sinusoid_scenario(**kw) -> Scenario:
    """Tracking scenario: 0.3 rad sinusoids, 30 deg initial offsets, T = 2 s, 10 s."""
    ref = kw.pop("reference", benchmark_sinusoid())
    t0 = kw.get("t0", 0.0)
    offset = kw.pop("offset", OFFSET_30)
    base = dict(
        model=PlanarArm(),
        box=r2_box(),
        gains=kw.pop("gains", r2_gains()),
        T=2.0,
        duration=10.0,
        reference=ref,
        q0=ref(t0)[0] + offset,
        dq0=np.zeros(2),
    )
    base.update(kw)
    return Scenario(**base)


@pytest.fixture
def box():
    return r2_box()


@pytest.fixture
def gains():
    return r2_gains()


@pytest.fixture
def arm():
    return PlanarArm()
