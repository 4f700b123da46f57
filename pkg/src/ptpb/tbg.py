"""Time-based generator: quintic settling polynomials and shaped error references.

``h1`` carries the initial error and ``h2`` the initial error rate to zero
at ``t0 + T`` with vanishing first and second derivatives; both are
identically zero afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

K1 = 2.0
K2 = 15.0 / 8.0
K3 = 10.0 * math.sqrt(3.0) / 3.0
K4 = (152.0 * math.sqrt(19.0) + 224.0) / 225.0
# peak of h2/T; exceeds K1/T**2 once T > sqrt(81/8)
K1_LONG = 16.0 / 81.0


@dataclass(frozen=True)
class TBGProfile:
    t0: float
    T: float
    e0: np.ndarray
    ed0: np.ndarray

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"prescribed time T must be positive, got {self.T}")
        e0 = np.atleast_1d(np.asarray(self.e0, dtype=float))
        ed0 = np.atleast_1d(np.asarray(self.ed0, dtype=float))
        if e0.shape != ed0.shape:
            raise ValueError("e0 and ed0 must have equal length")
        object.__setattr__(self, "e0", e0)
        object.__setattr__(self, "ed0", ed0)

    def eval_h(self, t: float):
        return eval_h(self, t)

    def error_refs(self, t: float):
        return error_refs(self, t)

    def bounds(self) -> TBGBounds:
        return tbg_bounds(self)


@dataclass(frozen=True)
class TBGBounds:
    e_bar: float
    ed_bar: float
    edd_bar: float
    k1: float = K1
    k2: float = K2
    k3: float = K3
    k4: float = K4


def eval_h(profile: TBGProfile, t: float) -> tuple[float, float, float, float, float, float]:
    """Return ``(h1, h2, dh1, dh2, ddh1, ddh2)`` at time ``t``."""
    tau = t - profile.t0
    if tau < 0:
        raise ValueError(f"t = {t} precedes t0 = {profile.t0}")
    T = profile.T
    # compare absolute times too, so t = t0 + T always lands on the zero tail
    if tau >= T or t >= profile.t0 + T:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    s = tau / T
    s2 = s * s
    s3 = s2 * s
    h1 = -6.0 * s3 * s2 + 15.0 * s2 * s2 - 10.0 * s3 + 1.0
    dh1 = (-30.0 * s2 * s2 + 60.0 * s3 - 30.0 * s2) / T
    ddh1 = (-120.0 * s3 + 180.0 * s2 - 60.0 * s) / (T * T)
    h2 = T * (-3.0 * s3 * s2 + 8.0 * s2 * s2 - 6.0 * s3 + s)
    dh2 = -15.0 * s2 * s2 + 32.0 * s3 - 18.0 * s2 + 1.0
    ddh2 = (-60.0 * s3 + 96.0 * s2 - 36.0 * s) / T
    return h1, h2, dh1, dh2, ddh1, ddh2


def error_refs(profile: TBGProfile, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shaped references ``e^d``, its rate and its acceleration at ``t``."""
    h1, h2, dh1, dh2, ddh1, ddh2 = eval_h(profile, t)
    e0, ed0 = profile.e0, profile.ed0
    return h1 * e0 + h2 * ed0, dh1 * e0 + dh2 * ed0, ddh1 * e0 + ddh2 * ed0


def tbg_bounds(profile: TBGProfile) -> TBGBounds:
    n0 = float(np.linalg.norm(profile.e0))
    n1 = float(np.linalg.norm(profile.ed0))
    T = profile.T
    return TBGBounds(
        e_bar=n0 + max(K1 / T, K1_LONG * T) * n1,
        ed_bar=K2 / T * n0 + n1,
        edd_bar=K3 / T**2 * n0 + K4 / T * n1,
    )
