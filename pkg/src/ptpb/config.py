"""Strict JSON run configuration.

Human-facing angles are degrees (positions) and degrees per second
(velocities); everything is converted to radians when a :class:`Scenario`
is built. Unknown keys anywhere in the document are rejected.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import ConfigError
from .models import make_model
from .pipeline import ConstraintBox, GainSet
from .sim import DisturbanceSpec, NoiseSpec, Scenario, SetPoint, Sinusoid

CONFIG_VERSION = 1
_REQUIRED = object()


@dataclass
class ModelSection:
    name: str = "r2"
    params: dict = field(default_factory=dict)


@dataclass
class BoxSection:
    theta_minus_deg: list = _REQUIRED
    theta_plus_deg: list = _REQUIRED
    nu_minus_deg_s: list = _REQUIRED
    nu_plus_deg_s: list = _REQUIRED
    u_minus: list = _REQUIRED
    u_plus: list = _REQUIRED


@dataclass
class GainsSection:
    kp: list = _REQUIRED
    rho: float = _REQUIRED
    varpi: float = _REQUIRED
    gamma: float = 1.0
    alpha: float = 0.4
    kappa: float = _REQUIRED
    c: float | None = None


@dataclass
class TimingSection:
    T: float = _REQUIRED
    duration: float = _REQUIRED
    t0: float = 0.0
    dt: float = 1e-3


@dataclass
class ReferenceSection:
    kind: str = _REQUIRED
    q_star_deg: list | None = None
    amplitude_deg: list | None = None
    frequency_rad_s: list | None = None
    phase_deg: list | None = None
    offset_deg: list | None = None


@dataclass
class InitialSection:
    offset_deg: list = _REQUIRED
    dq_deg_s: list | None = None


@dataclass
class DisturbanceSection:
    max: list = _REQUIRED
    seed: int = 0


@dataclass
class NoiseSection:
    snr_db: float = _REQUIRED
    seed: int = 0


@dataclass
class IntegratorSection:
    mode: str = "xi"
    zoh: bool = False


@dataclass
class FeasibilitySection:
    sigma: float | None = None
    u_star: float | None = None
    eps: float = 0.0
    bound_samples: int = 4096
    bound_seed: int = 0
    safety_factor: float = 1.1
    mc_samples: int = 10000
    mc_seed: int = 0
    region: str = "rest"
    q_star_deg: list | None = None
    start_radius_deg: float | None = None
    T_values: list | None = None


@dataclass
class OutputSection:
    dir: str = "out"
    csv: bool = True
    metrics: bool = True
    svg: bool = False


@dataclass
class SweepSection:
    T: list | None = None
    offset_deg: list | None = None
    seed: list | None = None


_SECTIONS = {
    "model": (ModelSection, False),
    "box": (BoxSection, True),
    "gains": (GainsSection, True),
    "timing": (TimingSection, True),
    "reference": (ReferenceSection, True),
    "initial": (InitialSection, True),
    "disturbance": (DisturbanceSection, False),
    "noise": (NoiseSection, False),
    "integrator": (IntegratorSection, False),
    "feasibility": (FeasibilitySection, False),
    "output": (OutputSection, False),
    "sweep": (SweepSection, False),
}
# sections that may be absent or null and then stay absent
_OPTIONAL_NULL = {"disturbance", "noise", "sweep"}


def _parse_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {', '.join(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = copy.deepcopy(data[f.name])
        elif f.default is _REQUIRED:
            raise ConfigError(f"missing required key {path}.{f.name}")
    obj = cls(**kwargs)
    for f in fields(cls):
        if getattr(obj, f.name) is _REQUIRED:
            raise ConfigError(f"missing required key {path}.{f.name}")
    return obj


@dataclass
class RunConfig:
    model: ModelSection
    box: BoxSection
    gains: GainsSection
    timing: TimingSection
    reference: ReferenceSection
    initial: InitialSection
    disturbance: DisturbanceSection | None
    noise: NoiseSection | None
    integrator: IntegratorSection
    feasibility: FeasibilitySection
    output: OutputSection
    sweep: SweepSection | None
    config_version: int = CONFIG_VERSION

    def to_document(self) -> dict:
        doc: dict[str, Any] = {"config_version": self.config_version}
        for name in _SECTIONS:
            sec = getattr(self, name)
            doc[name] = None if sec is None else {f.name: copy.deepcopy(getattr(sec, f.name)) for f in fields(sec)}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=2)


def parse_config(doc: dict) -> RunConfig:
    """Validate the document shape and fill defaults. Raises :class:`ConfigError`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"config_version"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    version = doc.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
    parsed = {}
    for name, (cls, required) in _SECTIONS.items():
        data = doc.get(name)
        if data is None:
            if required:
                raise ConfigError(f"missing required section {name!r}")
            parsed[name] = None if name in _OPTIONAL_NULL else cls()
        else:
            parsed[name] = _parse_section(cls, data, name)
    return RunConfig(**parsed, config_version=version)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


# --- builders ----------------------------------------------------------------


def _arr(values, n: int, what: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(values, dtype=float))
    if a.size == 1 and n > 1:
        a = np.full(n, float(a[0]))
    if a.size != n:
        raise ConfigError(f"{what} needs {n} entries, got {a.size}")
    return a


def build_box(cfg: RunConfig, n: int) -> ConstraintBox:
    b = cfg.box
    return ConstraintBox(
        theta_minus=np.radians(_arr(b.theta_minus_deg, n, "box.theta_minus_deg")),
        theta_plus=np.radians(_arr(b.theta_plus_deg, n, "box.theta_plus_deg")),
        nu_minus=np.radians(_arr(b.nu_minus_deg_s, n, "box.nu_minus_deg_s")),
        nu_plus=np.radians(_arr(b.nu_plus_deg_s, n, "box.nu_plus_deg_s")),
        u_minus=_arr(b.u_minus, n, "box.u_minus"),
        u_plus=_arr(b.u_plus, n, "box.u_plus"),
    )


def build_gains(cfg: RunConfig, n: int) -> GainSet:
    g = cfg.gains
    return GainSet(
        kp=_arr(g.kp, n, "gains.kp"),
        rho=float(g.rho),
        varpi=float(g.varpi),
        gamma=float(g.gamma),
        alpha=float(g.alpha),
        kappa=float(g.kappa),
        c=None if g.c is None else float(g.c),
    )


def build_reference(cfg: RunConfig, n: int):
    r = cfg.reference
    if r.kind == "setpoint":
        if r.q_star_deg is None:
            raise ConfigError("reference.q_star_deg is required for a setpoint reference")
        return SetPoint(np.radians(_arr(r.q_star_deg, n, "reference.q_star_deg")))
    if r.kind == "sinusoid":
        if r.amplitude_deg is None or r.frequency_rad_s is None:
            raise ConfigError("a sinusoid reference needs amplitude_deg and frequency_rad_s")
        zeros = [0.0] * n
        return Sinusoid(
            amplitude=np.radians(_arr(r.amplitude_deg, n, "reference.amplitude_deg")),
            frequency=_arr(r.frequency_rad_s, n, "reference.frequency_rad_s"),
            phase=np.radians(_arr(r.phase_deg if r.phase_deg is not None else zeros, n, "reference.phase_deg")),
            offset=np.radians(_arr(r.offset_deg if r.offset_deg is not None else zeros, n, "reference.offset_deg")),
        )
    raise ConfigError(f"reference.kind must be 'setpoint' or 'sinusoid', got {r.kind!r}")


def build_scenario(cfg: RunConfig, seed: int | None = None) -> Scenario:
    """Turn a parsed config into a :class:`Scenario`; ``seed`` overrides the RNG seeds."""
    try:
        model = make_model(cfg.model.name, cfg.model.params or None)
    except TypeError as exc:
        raise ConfigError(f"bad model.params: {exc}") from exc
    n = model.n
    ref = build_reference(cfg, n)
    t0 = float(cfg.timing.t0)
    qr0, _, _ = ref(t0)
    dq0 = np.zeros(n) if cfg.initial.dq_deg_s is None else np.radians(_arr(cfg.initial.dq_deg_s, n, "initial.dq_deg_s"))
    dist = None
    if cfg.disturbance is not None:
        s = cfg.disturbance.seed if seed is None else seed
        dist = DisturbanceSpec(_arr(cfg.disturbance.max, n, "disturbance.max"), seed=int(s))
    noise = None
    if cfg.noise is not None:
        s = cfg.noise.seed if seed is None else seed
        snr = float(cfg.noise.snr_db)
        if math.isnan(snr):
            raise ConfigError("noise.snr_db must be a number")
        noise = NoiseSpec(snr_db=snr, seed=int(s))
    return Scenario(
        model=model,
        box=build_box(cfg, n),
        gains=build_gains(cfg, n),
        T=float(cfg.timing.T),
        duration=float(cfg.timing.duration),
        reference=ref,
        q0=qr0 + np.radians(_arr(cfg.initial.offset_deg, n, "initial.offset_deg")),
        dq0=dq0,
        t0=t0,
        dt=float(cfg.timing.dt),
        disturbance=dist,
        noise=noise,
        mode=cfg.integrator.mode,
        zoh=bool(cfg.integrator.zoh),
    )


def target_position(cfg: RunConfig, n: int) -> np.ndarray:
    """``q*`` for feasibility analysis: explicit, the setpoint, or the reference at ``t0``."""
    if cfg.feasibility.q_star_deg is not None:
        return np.radians(_arr(cfg.feasibility.q_star_deg, n, "feasibility.q_star_deg"))
    return build_reference(cfg, n)(float(cfg.timing.t0))[0]
