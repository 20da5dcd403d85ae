"""Demonstration-learned motion primitives with a force-coupled clock.

The motion is a second-order critically damped attractor toward the goal,
shaped by a phase-dependent forcing term learned from one demonstration
(ridge-regularized least squares over normalized Gaussian bases). Position
runs in Cartesian coordinates; orientation runs in quaternion-log
coordinates on the same clock.

The clock is a phase variable s decaying from 1 toward a floor (0.01
counts as completion). Its decay rate is modulated online by the force the
patient exerts along the path tangent:

    time_scale * ds/dt = -max(0, baseline_rate + force_gain * f_tangential) * s

Pushing along the tangent speeds the exercise up, resisting slows it down,
and a hard enough opposing force freezes it entirely. Integration uses the
normalized log-phase sigma = -ln(s)/ln(1/s_min) in [0, 1] as the
independent variable, so force coupling rescales time without bending the
spatial path.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .motion import Pose, TimedTrajectory

MIN_PHASE = 0.01
LOG_SPAN = float(np.log(1.0 / MIN_PHASE))
K_GAIN = 150.0
D_GAIN = float(2.0 * np.sqrt(K_GAIN))
DEFAULT_N_BASIS = 25
BASIS_WIDTH_FACTOR = 0.65
MIN_AMPLITUDE_M = 1e-3
MAX_SUBSTEP = 1e-3


class FitError(ValueError):
    """Demonstration unusable for regression."""


@dataclass(frozen=True)
class CanonicalState:
    """Force-coupled exercise clock.

    phase decays from 1.0 toward min_phase; force_gain scales how strongly
    tangential force modulates the decay rate and baseline_rate is the
    force-free rate. All rates are per second after division by time_scale.
    """

    phase: float = 1.0
    time_scale: float = 1.0
    force_gain: float = 0.0
    baseline_rate: float = 1.0
    min_phase: float = MIN_PHASE

    def __post_init__(self):
        if not (0.0 < self.phase <= 1.0):
            raise ValueError(f"phase must be in (0, 1], got {self.phase}")
        if self.time_scale <= 0.0:
            raise ValueError("time_scale must be positive")
        if self.force_gain < 0.0:
            raise ValueError("force_gain must be >= 0")
        if self.baseline_rate < 0.0:
            raise ValueError("baseline_rate must be >= 0")
        if not (0.0 < self.min_phase < 1.0):
            raise ValueError("min_phase must be in (0, 1)")


def phase_rate(state: CanonicalState, tangential_force: float) -> float:
    """Decay rate of -d(ln phase)/dt for the given tangential force.

    Clamped at zero: force opposing the motion can stall the clock but
    never run it backward.
    """
    return max(0.0, state.baseline_rate
               + state.force_gain * tangential_force) / state.time_scale


def step_canonical(state: CanonicalState, tangential_force: float,
                   dt: float) -> CanonicalState:
    """Advance the clock by dt seconds under the given tangential force.

    Exact exponential update, so the phase stays positive for any dt and
    is bitwise frozen when the rate clamps to zero.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rate = phase_rate(state, tangential_force)
    return dataclasses.replace(state, phase=state.phase * np.exp(-rate * dt))


def progress(state: CanonicalState) -> float:
    """Exercise completion in [0, 1]: log-phase position of the clock."""
    p = np.log(state.phase) / np.log(state.min_phase)
    return float(min(1.0, max(0.0, p)))


def phase_to_sigma(phase: float, min_phase: float = MIN_PHASE) -> float:
    """Normalized log-phase coordinate: 0 at phase 1, 1 at the floor."""
    return float(-np.log(phase) / np.log(1.0 / min_phase))


def basis_grid(n_basis: int):
    """Centers and squared-width reciprocals of the forcing bases."""
    centers = np.linspace(0.0, 1.0, n_basis)
    spacing = 1.0 / (n_basis - 1)
    width = BASIS_WIDTH_FACTOR * spacing
    inv_two_w2 = np.full(n_basis, 1.0 / (2.0 * width * width))
    return centers, inv_two_w2


@dataclass(frozen=True, eq=False)
class DmpModel:
    """Fitted exercise primitive.

    pos_weights and ori_weights are (3, n_basis) forcing weights. The
    position forcing is scaled per dimension by the goal-start offset, so a
    dimension whose endpoints coincide (under 1 mm apart) must carry zero
    weights; fit_dmp guarantees that and the constructor enforces it.
    demo_limb_m records the limb length of the demonstrator for later
    amplitude scaling.
    """

    n_basis: int
    pos_weights: np.ndarray
    ori_weights: np.ndarray
    start: Pose
    goal: Pose
    demo_duration: float
    demo_limb_m: float
    frame_id: str = "body"

    def __post_init__(self):
        if self.n_basis < 5:
            raise ValueError("n_basis must be >= 5")
        pw = np.asarray(self.pos_weights, dtype=float).copy()
        ow = np.asarray(self.ori_weights, dtype=float).copy()
        if pw.shape != (3, self.n_basis) or ow.shape != (3, self.n_basis):
            raise ValueError(
                f"weights must be (3, {self.n_basis}), got {pw.shape} / {ow.shape}")
        if not (np.all(np.isfinite(pw)) and np.all(np.isfinite(ow))):
            raise ValueError("weights must be finite")
        if self.demo_duration <= 0.0:
            raise ValueError("demo_duration must be positive")
        if self.demo_limb_m <= 0.0:
            raise ValueError("demo_limb_m must be positive")
        amp = self.goal.position - self.start.position
        for i in range(3):
            if abs(amp[i]) < MIN_AMPLITUDE_M and np.any(np.abs(pw[i]) > 1e-9):
                raise ValueError(
                    f"dimension {i} has <1 mm goal-start amplitude but "
                    "nonzero forcing weights")
        pw.flags.writeable = False
        ow.flags.writeable = False
        object.__setattr__(self, "pos_weights", pw)
        object.__setattr__(self, "ori_weights", ow)

    @property
    def amplitude(self) -> np.ndarray:
        return self.goal.position - self.start.position


@dataclass(frozen=True, eq=False)
class DmpIntegrator:
    """Transform-system state between ticks: packed vector plus log-phase.

    The packed layout is position (0:3), scaled velocity (3:6), quaternion
    (6:10), scaled angular velocity (10:13), where "scaled" means per unit
    of normalized log-phase, not per second.
    """

    state: np.ndarray
    sigma: float

    def __post_init__(self):
        st = np.asarray(self.state, dtype=float).reshape(_kernels.STATE_DIM).copy()
        st.flags.writeable = False
        object.__setattr__(self, "state", st)

    @classmethod
    def fresh(cls, model: DmpModel) -> "DmpIntegrator":
        st = np.zeros(_kernels.STATE_DIM)
        st[0:3] = model.start.position
        st[6:10] = model.start.orientation
        return cls(st, 0.0)

    @property
    def pose(self) -> Pose:
        return Pose(self.state[0:3], self.state[6:10])

    @property
    def scaled_velocity(self) -> np.ndarray:
        return self.state[3:6]

    @property
    def scaled_angular_velocity(self) -> np.ndarray:
        return self.state[10:13]


@dataclass(frozen=True, eq=False)
class ReferenceSample:
    """One tick of the reference motion: pose plus physical velocities."""

    pose: Pose
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray


def _kernel_args(model: DmpModel):
    centers, inv_two_w2 = basis_grid(model.n_basis)
    return (centers, inv_two_w2, model.pos_weights, model.ori_weights,
            model.amplitude, model.goal.position, model.goal.orientation,
            K_GAIN, D_GAIN, LOG_SPAN)


def dmp_query(model: DmpModel, integ: DmpIntegrator, phase: float,
              phase_velocity: float, dt: float):
    """Sample the reference at the current state, then advance one tick.

    phase and phase_velocity describe the clock (phase_velocity <= 0); the
    returned sample holds the pose before the step and velocities scaled to
    physical seconds. Returns (sample, advanced_integrator).
    """
    if not (0.0 < phase <= 1.0):
        raise ValueError(f"phase must be in (0, 1], got {phase}")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rate = -phase_velocity / phase
    if rate < 0.0:
        if rate < -1e-12:
            raise ValueError("phase_velocity must be <= 0")
        rate = 0.0
    sigma_rate = rate / LOG_SPAN
    sample = ReferenceSample(
        pose=integ.pose,
        linear_velocity=integ.scaled_velocity * sigma_rate,
        angular_velocity=integ.scaled_angular_velocity * sigma_rate,
    )
    dsigma = sigma_rate * dt
    new_state, new_sigma = _kernels.advance_state(
        integ.state, integ.sigma, dsigma, MAX_SUBSTEP, *_kernel_args(model))
    return sample, DmpIntegrator(new_state, new_sigma)


def fit_dmp(traj: TimedTrajectory, n_basis: int = DEFAULT_N_BASIS,
            demo_limb_m: float = 1.0) -> DmpModel:
    """Learn forcing weights reproducing the demonstration.

    Targets are the attractor residuals of the demonstrated motion in
    log-phase time; weights solve a least-squares problem over the
    normalized local-basis design (one small solve per dimension), which
    reproduces the residual far more tightly than independent per-basis
    averaging. Needs a reasonably dense demo (at least 3 samples per
    basis) whose timeline covers the whole phase range.
    """
    n = len(traj)
    if n_basis < 5:
        raise FitError("n_basis must be >= 5")
    if n < 3 * n_basis:
        raise FitError(
            f"demonstration has {n} samples, need at least {3 * n_basis} "
            f"for {n_basis} bases")

    t = traj.times - traj.times[0]
    duration = float(t[-1])
    sigma = t / duration
    s = np.exp(-LOG_SPAN * sigma)

    y = traj.positions
    y0 = y[0]
    g = y[-1]
    amp = g - y0
    active = np.abs(amp) >= MIN_AMPLITUDE_M

    # Attractor residual in log-phase time: what the forcing must supply
    dy = np.gradient(y, t, axis=0)
    ddy = np.gradient(dy, t, axis=0)
    f_pos = (duration ** 2) * ddy + D_GAIN * duration * dy - K_GAIN * (g - y)

    # Orientation channel: residual in quaternion-log coordinates
    q = traj.orientations
    g_q = q[-1]
    err = np.empty((n, 3))
    omega = np.empty((n, 3))
    for k in range(n):
        err[k] = _kernels.quat_log_rel(g_q, q[k])
    omega[0] = _kernels.quat_log_rel(q[1], q[0]) / (t[1] - t[0])
    omega[-1] = _kernels.quat_log_rel(q[-1], q[-2]) / (t[-1] - t[-2])
    for k in range(1, n - 1):
        omega[k] = _kernels.quat_log_rel(q[k + 1], q[k - 1]) / (t[k + 1] - t[k - 1])
    eta = duration * omega
    deta = np.gradient(eta, t, axis=0) * duration
    f_ori = deta + D_GAIN * eta - K_GAIN * err

    centers, inv_two_w2 = basis_grid(n_basis)
    d = sigma[:, None] - centers[None, :]
    psi = np.exp(-(d * d) * inv_two_w2[None, :])  # (n, n_basis)
    support = psi.sum(axis=0)
    if np.any(support < 1e-3):
        raise FitError(
            "demonstration leaves some bases with no support; "
            "cover the whole movement or reduce n_basis")
    mix = psi / psi.sum(axis=1, keepdims=True)

    def solve(design: np.ndarray, target: np.ndarray) -> np.ndarray:
        gram = design.T @ design
        # Tiny relative ridge keeps the tail bases (vanishing regressor)
        # from blowing up without biasing the supported ones
        lam = 1e-9 * np.trace(gram) / n_basis
        return np.linalg.solve(gram + lam * np.eye(n_basis), design.T @ target)

    pos_weights = np.zeros((3, n_basis))
    ori_weights = np.zeros((3, n_basis))
    for i in range(3):
        if active[i]:
            pos_weights[i] = solve(mix * (s * amp[i])[:, None], f_pos[:, i])
        ori_weights[i] = solve(mix * s[:, None], f_ori[:, i])

    return DmpModel(
        n_basis=n_basis,
        pos_weights=pos_weights,
        ori_weights=ori_weights,
        start=traj.pose(0),
        goal=traj.pose(n - 1),
        demo_duration=duration,
        demo_limb_m=demo_limb_m,
        frame_id=traj.frame_id,
    )


def rollout(model: DmpModel, n_steps: int | None = None,
            sigma_end: float = 1.0, max_substep: float = MAX_SUBSTEP
            ) -> TimedTrajectory:
    """Force-free replay on the demo timeline, uniform in log-phase.

    Times map log-phase back to demo seconds (the demonstration covered
    sigma 0 to 1 over its duration), so this is the nominal replay used for
    fit checks and path metrics.
    """
    if n_steps is None:
        n_steps = max(2, int(round(model.demo_duration * 100)))
    states = _kernels.rollout_states(
        n_steps, sigma_end, max_substep,
        *basis_grid(model.n_basis),
        model.pos_weights, model.ori_weights, model.amplitude,
        model.start.position, model.start.orientation,
        model.goal.position, model.goal.orientation,
        K_GAIN, D_GAIN, LOG_SPAN)
    sig = np.linspace(0.0, sigma_end, n_steps + 1)
    return TimedTrajectory(sig * model.demo_duration, states[:, 0:3],
                           states[:, 6:10], frame_id=model.frame_id)


def rollout_at(model: DmpModel, sigmas: np.ndarray) -> np.ndarray:
    """Positions of the force-free replay at arbitrary log-phase samples."""
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(np.diff(sigmas) < 0.0) or sigmas[0] < 0.0:
        raise ValueError("sigmas must be non-decreasing and start >= 0")
    args = _kernel_args(model)
    integ = DmpIntegrator.fresh(model)
    st, sg = integ.state, 0.0
    out = np.empty((sigmas.shape[0], 3))
    for k, target in enumerate(sigmas):
        st, sg = _kernels.advance_state(st, sg, target - sg, MAX_SUBSTEP, *args)
        out[k] = st[0:3]
    return out


def reproduction_rmse(model: DmpModel, traj: TimedTrajectory) -> float:
    """Position RMSE between the force-free replay and the demonstration."""
    t = traj.times - traj.times[0]
    sigmas = t / t[-1]
    pos = rollout_at(model, sigmas)
    return float(np.sqrt(np.mean(np.sum((pos - traj.positions) ** 2, axis=1))))


def scale_dmp(model: DmpModel, patient_limb_m: float,
              start_new: Pose | None = None,
              goal_new: Pose | None = None) -> DmpModel:
    """Retarget the primitive to a patient's limb length and workspace.

    The goal-start chord is scaled by patient_limb_m / demo_limb_m about
    the (possibly overridden) start. An explicit goal override wins over
    the scaling. Weights are untouched: the forcing amplitude follows the
    endpoints, so the shape scales with the chord.
    """
    if patient_limb_m <= 0.0:
        raise ValueError("patient limb length must be positive")
    lam = patient_limb_m / model.demo_limb_m
    start = start_new if start_new is not None else model.start
    if goal_new is not None:
        goal = goal_new
    else:
        goal = Pose(start.position + lam * model.amplitude,
                    model.goal.orientation)

    new_amp = goal.position - start.position
    pos_weights = model.pos_weights.copy()
    # A dimension that collapses under the new endpoints loses its forcing
    for i in range(3):
        if abs(new_amp[i]) < MIN_AMPLITUDE_M:
            pos_weights[i] = 0.0

    return DmpModel(
        n_basis=model.n_basis,
        pos_weights=pos_weights,
        ori_weights=model.ori_weights.copy(),
        start=start,
        goal=goal,
        demo_duration=model.demo_duration,
        demo_limb_m=patient_limb_m,
        frame_id=model.frame_id,
    )


def initial_tangent(model: DmpModel, probe_sigma: float = 0.02) -> np.ndarray:
    """Unit direction the replay departs in.

    Demonstrations usually start at rest, where the forcing cancels the
    attractor pull exactly, so the instantaneous acceleration carries no
    usable direction. Instead the integrator is probed a short way into
    the motion and the velocity direction there is returned. Falls back to
    the goal-start chord, then +x, for degenerate models.
    """
    integ = DmpIntegrator.fresh(model)
    st, _ = _kernels.advance_state(
        integ.state, 0.0, probe_sigma, MAX_SUBSTEP, *_kernel_args(model))
    z = st[3:6]
    n = np.linalg.norm(z)
    if n < 1e-9:
        z = model.amplitude
        n = np.linalg.norm(z)
        if n < 1e-9:
            return np.array([1.0, 0.0, 0.0])
    return z / n


def nominal_reverse_speed(model: DmpModel, time_scale: float = 1.0,
                          n_steps: int = 400) -> float:
    """Mean tool speed of the passive replay, used to pace retreats.

    Retreating along the recorded corridor at the same average speed the
    exercise would move forward feels natural and is guaranteed achievable
    by the plant. Computed as replay path length over the nominal passive
    duration time_scale * ln(1/min_phase).
    """
    if time_scale <= 0.0:
        raise ValueError("time_scale must be positive")
    pos = rollout(model, n_steps=n_steps).positions
    length = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
    duration = time_scale * math.log(1.0 / model_min_phase(model))
    speed = length / duration
    return max(speed, 1e-4)


def model_min_phase(model: DmpModel) -> float:
    """Phase floor the canonical system clamps at (fixed for now)."""
    return MIN_PHASE
