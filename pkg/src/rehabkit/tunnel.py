"""Virtual-tunnel admittance control around the reference motion.

The measured external force is split against the instantaneous path
tangent. The tangential component feeds the exercise clock (speeding,
slowing, or freezing progression depending on the modality gains); the
orthogonal component yields elastically through a stiff admittance while a
recentering term pulls the tool back onto the reference path. The commanded
pose therefore stays inside a narrow tunnel around the learned trajectory
no matter how the patient pushes sideways.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dmp import (LOG_SPAN, CanonicalState, DmpIntegrator, DmpModel,
                  dmp_query, initial_tangent, phase_rate, step_canonical)
from .motion import Pose

TANGENT_HOLD_SPEED = 1e-6  # m/s; below this the last tangent is held
MAX_DT = 0.1

PRESETS = {
    "passive": dict(force_gain=0.0, baseline_rate=1.0),
    "assisted": dict(force_gain=0.08, baseline_rate=0.001),
    "resistive": dict(force_gain=0.005, baseline_rate=0.001),
}
DEFAULT_WALL_GAIN = 0.005    # m/s per N of orthogonal force
DEFAULT_RECENTER_RATE = 1.0  # 1/s pull back onto the path


@dataclass(frozen=True)
class ModalityParams:
    """Gains defining how the session responds to patient force."""

    mode: str
    force_gain: float
    baseline_rate: float
    wall_gain: float = DEFAULT_WALL_GAIN
    recenter_rate: float = DEFAULT_RECENTER_RATE

    def __post_init__(self):
        if self.mode not in PRESETS and self.mode != "custom":
            raise ValueError(f"unknown modality {self.mode!r}")
        if self.force_gain < 0.0 or self.baseline_rate < 0.0:
            raise ValueError("rates and gains must be >= 0")
        if self.wall_gain < 0.0 or self.recenter_rate < 0.0:
            raise ValueError("wall_gain and recenter_rate must be >= 0")
        if self.mode == "passive" and self.force_gain != 0.0:
            raise ValueError("passive mode cannot couple force into the clock")


def modality_preset(mode: str, **overrides) -> ModalityParams:
    """Named gain presets; overrides replace individual fields."""
    if mode not in PRESETS:
        raise ValueError(
            f"unknown modality {mode!r}, expected one of {sorted(PRESETS)}")
    base = dict(PRESETS[mode], mode=mode, wall_gain=DEFAULT_WALL_GAIN,
                recenter_rate=DEFAULT_RECENTER_RATE)
    base.update(overrides)
    return ModalityParams(**base)


@dataclass(frozen=True, eq=False)
class ControllerState:
    """Everything the controller carries between ticks (immutable)."""

    canonical: CanonicalState
    integrator: DmpIntegrator
    deviation: np.ndarray      # commanded offset off the reference path (m)
    last_tangent: np.ndarray   # unit; held while the reference stalls
    tick: int = 0

    def __post_init__(self):
        d = np.asarray(self.deviation, dtype=float).reshape(3).copy()
        u = np.asarray(self.last_tangent, dtype=float).reshape(3).copy()
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(u))):
            raise ValueError("controller state must be finite")
        d.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "deviation", d)
        object.__setattr__(self, "last_tangent", u)


@dataclass(frozen=True, eq=False)
class TcpCommand:
    """Commanded tool pose and feed-forward velocities for one tick."""

    pose: Pose
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray


@dataclass(frozen=True, eq=False)
class ForceSplit:
    """Resolved per-tick decomposition, also used for tracing."""

    tangent: np.ndarray
    tangential_force: float
    orthogonal_force: np.ndarray
    rate: float  # clock decay rate, 1/s


def init_controller(model: DmpModel, params: ModalityParams,
                    time_scale: float = 1.0) -> ControllerState:
    canonical = CanonicalState(
        phase=1.0, time_scale=time_scale,
        force_gain=params.force_gain, baseline_rate=params.baseline_rate)
    return ControllerState(
        canonical=canonical,
        integrator=DmpIntegrator.fresh(model),
        deviation=np.zeros(3),
        last_tangent=initial_tangent(model),
        tick=0,
    )


def decompose_force(f_ex: np.ndarray, v_ref: np.ndarray,
                    last_tangent: np.ndarray):
    """Split an external force against the reference direction.

    Returns (tangent, tangential_force, orthogonal_force). When the
    reference velocity is too small to define a direction the last tangent
    is held, so the split stays well defined through stalls.
    """
    f_ex = np.asarray(f_ex, dtype=float).reshape(3)
    v = np.asarray(v_ref, dtype=float).reshape(3)
    speed = np.linalg.norm(v)
    if speed < TANGENT_HOLD_SPEED:
        tangent = np.asarray(last_tangent, dtype=float).reshape(3)
    else:
        tangent = v / speed
    f_t = float(f_ex @ tangent)
    f_o = f_ex - f_t * tangent
    return tangent, f_t, f_o


def wall_velocity(orthogonal_force: np.ndarray, params: ModalityParams,
                  deviation: np.ndarray) -> np.ndarray:
    """Sideways admittance: yield to orthogonal force, recenter on the path."""
    return (params.wall_gain * np.asarray(orthogonal_force, dtype=float)
            - params.recenter_rate * np.asarray(deviation, dtype=float))


def _sync_canonical(canonical: CanonicalState,
                    params: ModalityParams) -> CanonicalState:
    if (canonical.force_gain != params.force_gain
            or canonical.baseline_rate != params.baseline_rate):
        canonical = dataclasses.replace(
            canonical, force_gain=params.force_gain,
            baseline_rate=params.baseline_rate)
    return canonical


def resolve_split(state: ControllerState, params: ModalityParams,
                  f_ex: np.ndarray) -> ForceSplit:
    """Resolve tangent, force split, and clock rate for the current tick.

    The tangent comes from the reference velocity, whose magnitude depends
    on the clock rate, which depends on the tangential force, which needs
    the tangent. Resolved with a candidate pass: take the tangent from the
    scaled velocity direction (rate-independent), derive the rate, and fall
    back to the held tangent only when the resulting reference speed is
    below the hold threshold (start of motion, frozen clock).
    """
    f_ex = np.asarray(f_ex, dtype=float).reshape(3)
    if not np.all(np.isfinite(f_ex)):
        raise ValueError("force must be finite")
    canonical = _sync_canonical(state.canonical, params)
    z = state.integrator.scaled_velocity
    zn = np.linalg.norm(z)
    cand = z / zn if zn > 1e-12 else state.last_tangent
    rate_cand = phase_rate(canonical, float(f_ex @ cand))
    v_cand = z * (rate_cand / LOG_SPAN)

    tangent, f_t, f_o = decompose_force(f_ex, v_cand, state.last_tangent)
    rate = phase_rate(canonical, f_t)
    return ForceSplit(tangent, f_t, f_o, rate)


def control_step(model: DmpModel, state: ControllerState,
                 params: ModalityParams, f_ex: np.ndarray, dt: float):
    """One control tick: force in, commanded pose and new state out.

    Order within the tick: resolve the tangent and force split, advance
    the clock by the exact exponential law, advance the reference one
    step, integrate the orthogonal deviation (re-projected off the tangent
    each tick), and compose the command: reference pose translated by the
    deviation, reference orientation untouched.
    """
    if not (0.0 < dt <= MAX_DT):
        raise ValueError(f"dt must be in (0, {MAX_DT}], got {dt}")
    canonical = _sync_canonical(state.canonical, params)
    split = resolve_split(state, params, f_ex)

    canonical_new = step_canonical(canonical, split.tangential_force, dt)
    sample, integ_new = dmp_query(
        model, state.integrator, canonical.phase,
        -split.rate * canonical.phase, dt)

    v_wall = wall_velocity(split.orthogonal_force, params, state.deviation)
    deviation = state.deviation + v_wall * dt
    deviation = deviation - (deviation @ split.tangent) * split.tangent

    cmd = TcpCommand(
        pose=Pose(sample.pose.position + deviation, sample.pose.orientation),
        linear_velocity=sample.linear_velocity + v_wall,
        angular_velocity=sample.angular_velocity,
    )
    new_state = ControllerState(
        canonical=canonical_new,
        integrator=integ_new,
        deviation=deviation,
        last_tangent=split.tangent,
        tick=state.tick + 1,
    )
    return cmd, new_state
