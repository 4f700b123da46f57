"""Closed-loop simulation: fixed-step RK4 over plant state plus constraint-law state.

The integrated vector is ``[q, dq, z]`` where ``z`` is ``xi`` (default) or
the slack ``upsilon`` (cross-check mode). The controller is re-evaluated at
every RK stage unless ``zoh`` is set; disturbance and measurement noise are
held constant over each step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .controller import control_step
from .exceptions import (
    BarrierBreachError,
    InsufficientWindowError,
    PTPBError,
    SingularLambdaError,
    SingularMassError,
    ValidationError,
)
from .models import DynamicsProvider, _accel
from .pipeline import (
    ConstraintBox,
    GainSet,
    _phi_parts,
    phi_rate,
    stack_d,
    upsilon_derivative,
    upsilon_init,
)
from .tbg import TBGProfile, eval_h

STATUSES = ("completed", "barrier-breach", "constraint-violation", "solver-error")
_BLOCK = 1024


# --- references -------------------------------------------------------------


@dataclass(frozen=True)
class SetPoint:
    q_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_star", np.atleast_1d(np.asarray(self.q_star, dtype=float)))

    def __call__(self, t):
        z = np.zeros_like(self.q_star)
        return self.q_star, z, z


@dataclass(frozen=True)
class Sinusoid:
    """``q_r,i(t) = A_i sin(w_i t + phi_i) + b_i`` (rad, rad/s)."""

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        for name in ("amplitude", "frequency", "phase"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        off = np.zeros_like(self.amplitude) if self.offset is None else self.offset
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(off, dtype=float)))

    def __call__(self, t):
        arg = self.frequency * t + self.phase
        s = np.sin(arg)
        aw = self.amplitude * self.frequency
        return self.amplitude * s + self.offset, aw * np.cos(arg), -aw * self.frequency * s


def benchmark_sinusoid() -> Sinusoid:
    """``q_r = (0.3 sin t, 0.3 cos t)``."""
    return Sinusoid(amplitude=[0.3, 0.3], frequency=[1.0, 1.0], phase=[0.0, math.pi / 2])


# --- disturbance and noise ---------------------------------------------------


@lru_cache(maxsize=32)
def _uniform_block(seed: int, block: int, width: int) -> np.ndarray:
    out = np.random.default_rng([seed, block, 0]).uniform(-1.0, 1.0, size=(_BLOCK, width))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=32)
def _normal_block(seed: int, block: int, width: int) -> np.ndarray:
    out = np.random.default_rng([seed, block, 1]).standard_normal(size=(_BLOCK, width))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DisturbanceSpec:
    """I.i.d. uniform disturbance on ``[-max_i, max_i]``, one draw per step."""

    max: np.ndarray
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "max", np.atleast_1d(np.asarray(self.max, dtype=float)))
        if np.any(self.max < 0):
            raise ValueError("disturbance magnitudes must be non-negative")


def uniform_disturbance(spec: DisturbanceSpec | None, t_index: int, seed: int | None = None) -> np.ndarray:
    """Disturbance sample for step ``t_index``; random-access and seed-deterministic."""
    if spec is None:
        raise ValueError("no disturbance spec")
    seed = spec.seed if seed is None else seed
    block, row = divmod(int(t_index), _BLOCK)
    return spec.max * _uniform_block(int(seed), block, spec.max.size)[row]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian measurement noise at a per-channel SNR.

    ``rms_q``/``rms_dq`` are the signal RMS values the SNR refers to;
    :func:`run_scenario` fills them from the reference trajectory.
    """

    snr_db: float = math.inf
    seed: int = 0
    rms_q: np.ndarray | None = None
    rms_dq: np.ndarray | None = None

    def std(self) -> tuple[np.ndarray, np.ndarray]:
        if self.rms_q is None or self.rms_dq is None:
            raise ValueError("noise spec has no reference RMS; call with_reference_rms first")
        scale = 0.0 if math.isinf(self.snr_db) else 10.0 ** (-self.snr_db / 20.0)
        return np.asarray(self.rms_q) * scale, np.asarray(self.rms_dq) * scale

    def with_reference_rms(self, reference, t0: float, duration: float, dt: float) -> NoiseSpec:
        ts = t0 + dt * np.arange(int(round(duration / dt)) + 1)
        qs = np.array([reference(t)[0] for t in ts])
        dqs = np.array([reference(t)[1] for t in ts])
        return NoiseSpec(
            snr_db=self.snr_db,
            seed=self.seed,
            rms_q=np.sqrt(np.mean(qs**2, axis=0)),
            rms_dq=np.sqrt(np.mean(dqs**2, axis=0)),
        )


def add_measurement_noise(q, dq, spec: NoiseSpec | None, seed: int | None = None, t_index: int = 0):
    """Noisy copies of ``(q, dq)``; unchanged when ``spec`` is None or the SNR is infinite."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    if spec is None or math.isinf(spec.snr_db):
        return q.copy(), dq.copy()
    sq, sdq = spec.std()
    seed = spec.seed if seed is None else seed
    block, row = divmod(int(t_index), _BLOCK)
    z = _normal_block(int(seed), block, 2 * q.size)[row]
    return q + sq * z[: q.size], dq + sdq * z[q.size :]


# --- scenario ----------------------------------------------------------------


@dataclass
class Scenario:
    model: DynamicsProvider
    box: ConstraintBox
    gains: GainSet
    T: float
    duration: float
    reference: object
    q0: np.ndarray
    dq0: np.ndarray
    t0: float = 0.0
    dt: float = 1e-3
    disturbance: DisturbanceSpec | None = None
    noise: NoiseSpec | None = None
    mode: str = "xi"
    zoh: bool = False

    def __post_init__(self):
        self.q0 = np.atleast_1d(np.asarray(self.q0, dtype=float))
        self.dq0 = np.atleast_1d(np.asarray(self.dq0, dtype=float))

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def initial_profile(self) -> TBGProfile:
        qm, dqm = self._measured_initial()
        qr, dqr, _ = self.reference(self.t0)
        return TBGProfile(self.t0, self.T, qm - qr, dqm - dqr)

    def _measured_initial(self):
        noise = self._noise()
        return add_measurement_noise(self.q0, self.dq0, noise, t_index=0)

    def _noise(self) -> NoiseSpec | None:
        if self.noise is None or math.isinf(self.noise.snr_db):
            return None
        if self.noise.rms_q is None:
            return self.noise.with_reference_rms(self.reference, self.t0, self.duration, self.dt)
        return self.noise

    def initial_phi(self) -> tuple[np.ndarray, np.ndarray]:
        """``(Phi0, Phi)`` at ``t0`` for the measured initial state."""
        qm, dqm = self._measured_initial()
        qr, dqr, _ = self.reference(self.t0)
        pm, pp, _ = _phi_parts(self.box, self.gains, self.initial_profile(), self.t0, qm, dqm, (qr, dqr))
        phi0 = np.concatenate((-pm, pp))
        return phi0, phi0 - self.gains.c


def validate_scenario(sc: Scenario) -> None:
    """Raise :class:`ValidationError` for any violated scenario precondition."""
    n = sc.model.n
    if sc.box.n != n or sc.q0.size != n or sc.dq0.size != n:
        raise ValidationError("model, box and initial state disagree on the number of joints")
    if not sc.dt > 0:
        raise ValidationError("dt must be positive")
    if not sc.T > 0:
        raise ValidationError("prescribed time T must be positive")
    if sc.duration < sc.T:
        raise ValidationError(f"duration {sc.duration} is shorter than the prescribed time T = {sc.T}")
    if sc.mode not in ("xi", "upsilon"):
        raise ValidationError(f"unknown integration mode {sc.mode!r}")
    sc.gains.check_against(sc.box)
    box = sc.box
    inside = (
        np.all(box.theta_minus < sc.q0)
        and np.all(sc.q0 < box.theta_plus)
        and np.all(box.nu_minus < sc.dq0)
        and np.all(sc.dq0 < box.nu_plus)
    )
    if not inside:
        raise ValidationError("initial state must lie strictly inside the state box")
    if sc.disturbance is not None and sc.disturbance.max.size != n:
        raise ValidationError("disturbance magnitudes must have one entry per joint")
    _, phi = sc.initial_phi()
    if np.any(phi < 0):
        raise ValidationError(
            f"Phi(t0) has negative components {phi}; reduce the safety margin c or start further inside the box"
        )


# --- results -----------------------------------------------------------------


@dataclass
class SimResult:
    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    qr: np.ndarray
    dqr: np.ndarray
    e: np.ndarray
    edot: np.ndarray
    eps: np.ndarray
    epsdot: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    K: np.ndarray
    Gamma: np.ndarray
    tau: np.ndarray
    u: np.ndarray
    d: np.ndarray
    status: str = "completed"
    message: str = ""
    t_fail: float | None = None
    upsilon: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def csv_header(self) -> list[str]:
        n = self.n
        cols = ["t"]
        for name in ("q", "dq", "e", "edot", "chi"):
            cols += [f"{name}_{i + 1}" for i in range(n)]
        cols += [f"xi_{i + 1}" for i in range(2 * n)]
        cols += ["K", "Gamma"]
        for name in ("tau", "u", "d"):
            cols += [f"{name}_{i + 1}" for i in range(n)]
        return cols

    def csv_rows(self) -> np.ndarray:
        return np.column_stack(
            [self.t, self.q, self.dq, self.e, self.edot, self.chi, self.xi, self.K, self.Gamma, self.tau, self.u, self.d]
        )

    def write_csv(self, path) -> None:
        rows = self.csv_rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            for r in rows:
                w.writerow([repr(float(v)) for v in r])


def _alloc(m: int, n: int) -> dict:
    shapes = {
        "t": (m,), "q": (m, n), "dq": (m, n), "qr": (m, n), "dqr": (m, n), "e": (m, n), "edot": (m, n),
        "eps": (m, n), "epsdot": (m, n), "chi": (m, n), "xi": (m, 2 * n), "K": (m,), "Gamma": (m,),
        "tau": (m, n), "u": (m, n), "d": (m, n),
    }  # fmt: skip
    return {k: np.zeros(s) for k, s in shapes.items()}


def run_scenario(sc: Scenario, validate: bool = True, horizon: float | None = None) -> SimResult:
    """Integrate the closed loop; stop early on breach, box violation or solver failure.

    ``horizon`` truncates the run to ``[t0, t0 + horizon]`` without changing
    the scenario (used for short cross-check segments).
    """
    if validate:
        validate_scenario(sc)
    if horizon is not None and not 0 < horizon <= sc.duration:
        raise ValueError(f"horizon must lie in (0, duration], got {horizon}")
    n = sc.model.n
    model, box, gains, ref = sc.model, sc.box, sc.gains, sc.reference
    kp = gains.kp
    gamma, alpha = gains.gamma, gains.alpha
    noise = sc._noise()
    profile = sc.initial_profile()
    e0, ed0 = profile.e0, profile.ed0
    ups_mode = sc.mode == "upsilon"
    dist = sc.disturbance
    zero_n = np.zeros(n)

    def rhs(t, x, d, nq, ndq, hold):
        q = x[:n]
        dq = x[n : 2 * n]
        z = x[2 * n :]
        qm = q + nq
        dqm = dq + ndq
        qr, dqr, ddqr = ref(t)
        h1, h2, dh1, dh2, ddh1, ddh2 = eval_h(profile, t)
        eps = qm - qr - (h1 * e0 + h2 * ed0)
        epsd = dqm - dqr - (dh1 * e0 + dh2 * ed0)
        chi = epsd + kp * eps
        if ups_mode:
            pm, pp, _ = _phi_parts(box, gains, profile, t, qm, dqm, (qr, dqr))
            phi = np.concatenate((-pm, pp)) - gains.c
            xi = stack_d(chi) + z * z - phi
        else:
            xi = z
        out = hold if hold is not None else control_step(gains, box, eps, epsd, chi, xi)
        ddq = _accel(model, q, dq, out.u, d)
        if ups_mode:
            chidot = ddq - ddqr - (ddh1 * e0 + ddh2 * ed0) + kp * epsd
            phid = phi_rate(box, gains, profile, t, qm, dqm, (qr, dqr, ddqr))
            dz = upsilon_derivative(gains, z, xi, chi, chidot, phid)
        else:
            dz = gamma * (alpha * stack_d(chi) - xi)
        return np.concatenate((dq, ddq, dz)), (qr, dqr, eps, epsd, chi, xi, out)

    if ups_mode:
        _, phi_t0 = sc.initial_phi()
        z0 = upsilon_init(phi_t0)
    else:
        z0 = np.zeros(2 * n)
    x = np.concatenate((sc.q0, sc.dq0, z0))

    steps = sc.steps if horizon is None else int(round(horizon / sc.dt))
    dt = sc.dt
    rec = _alloc(steps + 1, n)
    ups_rec = np.zeros((steps + 1, 2 * n)) if ups_mode else None
    status, message, t_fail = "completed", "", None
    last = -1

    def record(k, t, x, d, aux):
        qr, dqr, eps, epsd, chi, xi, out = aux
        q = x[:n]
        dq = x[n : 2 * n]
        rec["t"][k] = t
        rec["q"][k] = q
        rec["dq"][k] = dq
        rec["qr"][k] = qr
        rec["dqr"][k] = dqr
        rec["e"][k] = q - qr
        rec["edot"][k] = dq - dqr
        rec["eps"][k] = eps
        rec["epsdot"][k] = epsd
        rec["chi"][k] = chi
        rec["xi"][k] = xi
        rec["K"][k] = out.K
        rec["Gamma"][k] = out.Gamma
        rec["tau"][k] = out.tau
        rec["u"][k] = out.u
        rec["d"][k] = d
        if ups_rec is not None:
            ups_rec[k] = x[2 * n :]

    for k in range(steps + 1):
        t = sc.t0 + k * dt
        d = uniform_disturbance(dist, k) if dist is not None else zero_n
        if noise is not None:
            nq, ndq = add_measurement_noise(zero_n, zero_n, noise, t_index=k)
        else:
            nq = ndq = zero_n
        try:
            k1, aux = rhs(t, x, d, nq, ndq, None)
            record(k, t, x, d, aux)
            last = k
            if k == steps:
                break
            hold = aux[-1] if sc.zoh else None
            h = 0.5 * dt
            k2, _ = rhs(t + h, x + h * k1, d, nq, ndq, hold)
            k3, _ = rhs(t + h, x + h * k2, d, nq, ndq, hold)
            k4, _ = rhs(t + dt, x + dt * k3, d, nq, ndq, hold)
            x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        except BarrierBreachError as exc:
            status, message, t_fail = "barrier-breach", str(exc), t
            break
        except (SingularMassError, SingularLambdaError, FloatingPointError) as exc:
            status, message, t_fail = "solver-error", str(exc), t
            break
        if not np.all(np.isfinite(x_new)):
            status, message, t_fail = "solver-error", "non-finite state", t
            break
        x = x_new
        if not box.contains_state(x[:n], x[n : 2 * n]):
            status = "constraint-violation"
            t_fail = t + dt
            message = f"state left the box at t = {t_fail:.6g}: q = {x[:n]}, dq = {x[n:2 * n]}"
            break

    m = last + 1
    data = {k: v[:m] for k, v in rec.items()}
    return SimResult(
        **data,
        status=status,
        message=message,
        t_fail=t_fail,
        upsilon=None if ups_rec is None else ups_rec[:m],
    )


# --- metrics -----------------------------------------------------------------


@dataclass
class Metrics:
    """Steady-state error statistics over ``t >= t0 + T`` (degrees, degrees/s)."""

    mase_q: np.ndarray
    mae_q: np.ndarray
    rmse_q: np.ndarray
    mase_dq: np.ndarray
    mae_dq: np.ndarray
    rmse_dq: np.ndarray
    sup_e_norm: float
    sup_edot_norm: float
    samples: int
    window_start: float = field(default=0.0)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["units"] = {"q": "deg", "dq": "deg/s"}
        return out


def compute_metrics(result: SimResult, t0: float, T: float) -> Metrics:
    start = t0 + T
    mask = result.t >= start - 1e-12
    if not np.any(mask):
        raise InsufficientWindowError(f"no samples at or after t0 + T = {start}")
    e = np.degrees(result.e[mask])
    ed = np.degrees(result.edot[mask])
    return Metrics(
        mase_q=np.max(np.abs(e), axis=0),
        mae_q=np.mean(np.abs(e), axis=0),
        rmse_q=np.sqrt(np.mean(e**2, axis=0)),
        mase_dq=np.max(np.abs(ed), axis=0),
        mae_dq=np.mean(np.abs(ed), axis=0),
        rmse_dq=np.sqrt(np.mean(ed**2, axis=0)),
        sup_e_norm=float(np.max(np.linalg.norm(e, axis=1))),
        sup_edot_norm=float(np.max(np.linalg.norm(ed, axis=1))),
        samples=int(mask.sum()),
        window_start=start,
    )


def rk4_step(f, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of ``dx/dt = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


__all__ = [
    "STATUSES",
    "DisturbanceSpec",
    "Metrics",
    "NoiseSpec",
    "PTPBError",
    "Scenario",
    "SetPoint",
    "SimResult",
    "Sinusoid",
    "add_measurement_noise",
    "compute_metrics",
    "benchmark_sinusoid",
    "rk4_step",
    "run_scenario",
    "uniform_disturbance",
    "validate_scenario",
]
