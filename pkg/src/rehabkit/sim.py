"""Deterministic patient-in-the-loop session simulation.

One scenario file describes a session: which motion model to run, the
modality gains, a patient force model, and optional safety supervision.
run_scenario executes it tick by tick at a fixed rate with a seeded
generator, so the same scenario and seed always produce the same trace,
byte for byte.

The plant is a first-order pose servo: fast compared to the motion, no
overshoot, just enough lag to make force interaction causal. Patient
models exert forces resolved in the tunnel frame (along the current
tangent and orthogonal to it), which is how effort and disturbance are
specified clinically ("push along the motion", "spasm against it").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dmp import CanonicalState, DmpModel, nominal_reverse_speed, progress
from .motion import Pose, TimedTrajectory, slerp_step
from .safety import (DEFAULT_SIGMA_FLOOR_N, MODE_FORWARD, MODE_HOLD,
                     MODE_REVERSING, BufferEntry, GmrModel, corridor_check,
                     gmr_predict, init_safety, safety_step)
from .tunnel import (ModalityParams, TcpCommand, control_step,
                     init_controller, modality_preset, resolve_split)

SCENARIO_SCHEMA = "rehabkit.scenario/1"
SERVO_TAU_S = 0.02
MAX_FORCE_N = 100.0

TRACE_COLUMNS = (
    "tick", "time_s", "phase", "progress",
    "ref_px", "ref_py", "ref_pz", "ref_qw", "ref_qx", "ref_qy", "ref_qz",
    "cmd_px", "cmd_py", "cmd_pz", "cmd_qw", "cmd_qx", "cmd_qy", "cmd_qz",
    "tcp_px", "tcp_py", "tcp_pz", "tcp_qw", "tcp_qx", "tcp_qy", "tcp_qz",
    "force_x", "force_y", "force_z", "force_mag_n", "force_tangential_n",
    "force_ortho_n", "tangent_x", "tangent_y", "tangent_z",
    "deviation_m", "safety_mode", "in_corridor",
    "corridor_mean_n", "corridor_sigma_n",
)


class ScenarioError(ValueError):
    """Scenario document malformed or inconsistent."""


# ---------------------------------------------------------------- plant

@dataclass(frozen=True, eq=False)
class PlantState:
    """Simulated tool state: pose, instantaneous velocity, sim time."""

    pose: Pose
    velocity: np.ndarray
    time: float


def plant_step(state: PlantState, cmd: TcpCommand, dt: float,
               servo_tau: float = SERVO_TAU_S) -> PlantState:
    """First-order servo toward the commanded pose (exact discretization)."""
    if dt <= 0.0 or servo_tau <= 0.0:
        raise ValueError("dt and servo_tau must be positive")
    frac = 1.0 - math.exp(-dt / servo_tau)
    new_pos = state.pose.position + frac * (cmd.pose.position
                                            - state.pose.position)
    new_quat = slerp_step(state.pose.orientation, cmd.pose.orientation, frac)
    vel = (new_pos - state.pose.position) / dt
    return PlantState(Pose(new_pos, new_quat), vel, state.time + dt)


# ------------------------------------------------------- patient models

@dataclass(frozen=True)
class ForceSegment:
    """Linearly interpolated force over an interval of time/phase/progress.

    tangential pushes along the current tunnel tangent (positive assists),
    orthogonal pushes sideways at orthogonal_angle around the tangent.
    Values interpolate from level_start at the interval start coordinate
    to level_end at its end.
    """

    domain: str
    start: float
    end: float
    tangential: tuple = (0.0, 0.0)
    orthogonal: tuple = (0.0, 0.0)
    orthogonal_angle: float = 0.0

    def __post_init__(self):
        if self.domain not in ("time", "phase", "progress"):
            raise ScenarioError(f"unknown segment domain {self.domain!r}")
        if not (self.end > self.start):
            raise ScenarioError("segment end must exceed start")

    def value(self, coord: float):
        if not (self.start <= coord <= self.end):
            return None
        frac = (coord - self.start) / (self.end - self.start)
        tan = self.tangential[0] + frac * (self.tangential[1] - self.tangential[0])
        ort = self.orthogonal[0] + frac * (self.orthogonal[1] - self.orthogonal[0])
        return tan, ort


@dataclass(frozen=True)
class ScriptedPatient:
    """Pushes according to a fixed schedule of force segments."""

    segments: tuple = ()
    noise_std_n: float = 0.0

    def __post_init__(self):
        by_domain: dict[str, list[ForceSegment]] = {}
        for seg in self.segments:
            by_domain.setdefault(seg.domain, []).append(seg)
        for domain, segs in by_domain.items():
            segs = sorted(segs, key=lambda s: s.start)
            for a, b in zip(segs, segs[1:]):
                if b.start < a.end:
                    raise ScenarioError(
                        f"overlapping {domain} segments "
                        f"[{a.start},{a.end}] and [{b.start},{b.end}]")


@dataclass(frozen=True)
class SpringDamperPatient:
    """Passive limb: spring toward an anchor plus velocity damping."""

    stiffness: float = 0.0   # N/m
    damping: float = 0.0     # N s/m
    anchor: str = "start"    # "start" | "reference" | [x, y, z]
    noise_std_n: float = 0.0

    def __post_init__(self):
        if self.stiffness < 0.0 or self.damping < 0.0:
            raise ScenarioError("stiffness and damping must be >= 0")


@dataclass(frozen=True)
class SpasmPatient:
    """Scripted base behavior plus one involuntary force spike.

    The spike fires the first time progress reaches onset_progress, lasts
    duration_s, and points against the motion ("resist"), with it
    ("assist"), or sideways ("orthogonal").
    """

    base: ScriptedPatient | None = None
    spike_n: float = 40.0
    onset_progress: float = 0.4
    duration_s: float = 0.2
    direction: str = "resist"
    orthogonal_angle: float = 0.0
    noise_std_n: float = 0.0

    def __post_init__(self):
        if self.direction not in ("resist", "assist", "orthogonal"):
            raise ScenarioError(f"unknown spike direction {self.direction!r}")
        if not (0.0 <= self.onset_progress <= 1.0):
            raise ScenarioError("onset_progress must be in [0, 1]")
        if self.duration_s <= 0.0 or self.spike_n < 0.0:
            raise ScenarioError("spike must have positive duration and size")


def orthogonal_direction(tangent: np.ndarray, angle: float) -> np.ndarray:
    """Unit vector perpendicular to the tangent at the given roll angle."""
    u = np.asarray(tangent, dtype=float)
    for ref in (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])):
        o1 = ref - (ref @ u) * u
        n = np.linalg.norm(o1)
        if n > 1e-6:
            o1 /= n
            break
    o2 = np.cross(u, o1)
    return float(np.cos(angle)) * o1 + float(np.sin(angle)) * o2


class _PatientRuntime:
    """Evaluates a patient model tick by tick, carrying spike memory."""

    def __init__(self, model, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.spike_onset_t: float | None = None

    def force(self, t: float, phase: float, prog: float,
              tangent: np.ndarray, plant: PlantState,
              ref_position: np.ndarray, start_position: np.ndarray
              ) -> np.ndarray:
        m = self.model
        f = np.zeros(3)
        if m is None:
            return f
        if isinstance(m, ScriptedPatient):
            f = self._scripted(m, t, phase, prog, tangent)
        elif isinstance(m, SpringDamperPatient):
            if isinstance(m.anchor, str):
                anchor = start_position if m.anchor == "start" else ref_position
            else:
                anchor = np.asarray(m.anchor, dtype=float)
            f = (m.stiffness * (anchor - plant.pose.position)
                 - m.damping * plant.velocity)
        elif isinstance(m, SpasmPatient):
            if m.base is not None:
                f = self._scripted(m.base, t, phase, prog, tangent)
            if self.spike_onset_t is None and prog >= m.onset_progress:
                self.spike_onset_t = t
            if (self.spike_onset_t is not None
                    and t < self.spike_onset_t + m.duration_s):
                if m.direction == "resist":
                    f = f - m.spike_n * tangent
                elif m.direction == "assist":
                    f = f + m.spike_n * tangent
                else:
                    f = f + m.spike_n * orthogonal_direction(
                        tangent, m.orthogonal_angle)
        else:
            raise ScenarioError(f"unknown patient model {type(m).__name__}")
        noise = getattr(m, "noise_std_n", 0.0)
        if noise > 0.0:
            f = f + self.rng.normal(0.0, noise, 3)
        return f

    @staticmethod
    def _scripted(m: ScriptedPatient, t, phase, prog, tangent) -> np.ndarray:
        f = np.zeros(3)
        for seg in m.segments:
            coord = {"time": t, "phase": phase, "progress": prog}[seg.domain]
            val = seg.value(coord)
            if val is None:
                continue
            tan, ort = val
            f = f + tan * tangent
            if ort != 0.0:
                f = f + ort * orthogonal_direction(tangent, seg.orthogonal_angle)
        return f


# ------------------------------------------------------------ scenario

@dataclass(frozen=True)
class SafetySettings:
    enabled: bool = False
    gmr_path: str | None = None
    n_sigma: float = 5.0
    dwell_ticks: int = 30
    reverse_speed_mps: float | None = None
    hold_timeout_s: float = 10.0
    sigma_floor_n: float = DEFAULT_SIGMA_FLOOR_N


@dataclass(frozen=True)
class Scenario:
    """One session recipe: model, gains, patient, supervision, seed."""

    name: str
    model_path: str
    modality: ModalityParams
    patient: object = None
    time_scale: float = 1.0
    seed: int = 0
    dt: float = 0.01
    duration_limit_s: float = 60.0
    patient_limb_m: float | None = None
    scale_to_patient: bool = True
    start_position: np.ndarray | None = None
    goal_position: np.ndarray | None = None
    safety: SafetySettings = field(default_factory=SafetySettings)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def _parse_modality(doc: dict) -> ModalityParams:
    mode = doc.get("mode", "passive")
    overrides = {k: float(v) for k, v in doc.items()
                 if k in ("force_gain", "baseline_rate", "wall_gain",
                          "recenter_rate")}
    if mode == "custom":
        try:
            return ModalityParams(mode="custom", **overrides)
        except TypeError as e:
            raise ScenarioError(f"custom modality needs explicit gains ({e})")
    try:
        return modality_preset(mode, **overrides)
    except ValueError as e:
        raise ScenarioError(str(e)) from e


def _parse_patient(doc) -> object:
    if doc is None:
        return None
    kind = doc.get("kind")
    if kind == "scripted":
        segs = tuple(ForceSegment(
            domain=s["domain"], start=float(s["start"]), end=float(s["end"]),
            tangential=tuple(s.get("tangential", (0.0, 0.0))),
            orthogonal=tuple(s.get("orthogonal", (0.0, 0.0))),
            orthogonal_angle=float(s.get("orthogonal_angle", 0.0)),
        ) for s in doc.get("segments", []))
        return ScriptedPatient(segs, float(doc.get("noise_std_n", 0.0)))
    if kind == "spring_damper":
        anchor = doc.get("anchor", "start")
        if isinstance(anchor, (list, tuple)):
            anchor = tuple(float(v) for v in anchor)
        elif anchor not in ("start", "reference"):
            raise ScenarioError(f"unknown anchor {anchor!r}")
        return SpringDamperPatient(
            stiffness=float(doc.get("stiffness", 0.0)),
            damping=float(doc.get("damping", 0.0)),
            anchor=anchor,
            noise_std_n=float(doc.get("noise_std_n", 0.0)))
    if kind == "spasm":
        base = doc.get("base")
        base_model = _parse_patient(dict(base, kind="scripted")) if base else None
        return SpasmPatient(
            base=base_model,
            spike_n=float(doc.get("spike_n", 40.0)),
            onset_progress=float(doc.get("onset_progress", 0.4)),
            duration_s=float(doc.get("duration_s", 0.2)),
            direction=doc.get("direction", "resist"),
            orthogonal_angle=float(doc.get("orthogonal_angle", 0.0)),
            noise_std_n=float(doc.get("noise_std_n", 0.0)))
    raise ScenarioError(f"unknown patient kind {kind!r}")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON ({e})") from e
    return scenario_from_dict(doc, base_dir=path.parent,
                              default_name=path.stem)


def scenario_from_dict(doc: dict, base_dir=Path("."),
                       default_name: str = "scenario") -> Scenario:
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ScenarioError(
            f"scenario schema {doc.get('schema')!r} not supported "
            f"(expected {SCENARIO_SCHEMA!r})")
    if "model" not in doc:
        raise ScenarioError("scenario needs a 'model' path")
    safety_doc = doc.get("safety", {})
    safety = SafetySettings(
        enabled=bool(safety_doc.get("enabled", False)),
        gmr_path=safety_doc.get("gmr_model"),
        n_sigma=float(safety_doc.get("n_sigma", 5.0)),
        dwell_ticks=int(safety_doc.get("dwell_ticks", 30)),
        reverse_speed_mps=(None if safety_doc.get("reverse_speed_mps") is None
                           else float(safety_doc["reverse_speed_mps"])),
        hold_timeout_s=float(safety_doc.get("hold_timeout_s", 10.0)),
        sigma_floor_n=float(safety_doc.get("sigma_floor_n",
                                           DEFAULT_SIGMA_FLOOR_N)),
    )
    if safety.enabled and not safety.gmr_path:
        raise ScenarioError("safety enabled but no 'gmr_model' given")
    dt = float(doc.get("dt", 0.01))
    if not (0.0 < dt <= 0.1):
        raise ScenarioError(f"dt {dt} outside (0, 0.1]")
    start = doc.get("start_position")
    goal = doc.get("goal_position")
    return Scenario(
        name=str(doc.get("name") or default_name),
        model_path=str(doc["model"]),
        modality=_parse_modality(doc.get("modality", {})),
        patient=_parse_patient(doc.get("patient")),
        time_scale=float(doc.get("time_scale", 1.0)),
        seed=int(doc.get("seed", 0)),
        dt=dt,
        duration_limit_s=float(doc.get("duration_limit_s", 60.0)),
        patient_limb_m=(None if doc.get("patient_limb_m") is None
                        else float(doc["patient_limb_m"])),
        scale_to_patient=bool(doc.get("scale_to_patient", True)),
        start_position=(None if start is None else np.asarray(start, float)),
        goal_position=(None if goal is None else np.asarray(goal, float)),
        safety=safety,
        base_dir=Path(base_dir),
    )


# ---------------------------------------------------------------- trace

@dataclass(frozen=True, eq=False)
class SimTrace:
    """Columnar run record: one row per control tick plus meta."""

    columns: tuple
    data: dict
    meta: dict

    def __len__(self) -> int:
        return len(self.data[self.columns[0]])

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    def trajectory(self, which: str = "tcp") -> TimedTrajectory:
        """Positions/orientations of one pose stream as a trajectory."""
        if which not in ("ref", "cmd", "tcp"):
            raise ValueError("which must be ref, cmd, or tcp")
        p = np.column_stack([self.data[f"{which}_p{a}"] for a in "xyz"])
        q = np.column_stack([self.data[f"{which}_q{a}"] for a in "wxyz"])
        return TimedTrajectory(self.data["time_s"], p, q)


class _TraceBuilder:
    def __init__(self):
        self.rows = {name: [] for name in TRACE_COLUMNS}

    def add(self, **values):
        for name in TRACE_COLUMNS:
            self.rows[name].append(values[name])

    def finalize(self, meta: dict) -> SimTrace:
        data = {}
        for name, col in self.rows.items():
            if name == "tick":
                data[name] = np.array(col, dtype=np.int64)
            elif name == "safety_mode":
                data[name] = np.array(col, dtype=object)
            else:
                data[name] = np.array(col, dtype=float)
        return SimTrace(TRACE_COLUMNS, data, dict(meta))


# ----------------------------------------------------------- main loop

class SessionLoop:
    """Owns one session's state and advances it tick by tick.

    The loop is synchronous and simulation-time-driven; callers decide the
    pacing (batch runs tick as fast as possible, the telemetry service
    paces ticks against the wall clock). Forces come either from the
    scenario's patient model or from an externally injected force (live
    console), never both.
    """

    def __init__(self, model: DmpModel, params: ModalityParams,
                 dt: float = 0.01, time_scale: float = 1.0,
                 patient=None, seed: int = 0,
                 gmr: GmrModel | None = None,
                 safety: SafetySettings | None = None,
                 name: str = "session", limb_m: float | None = None):
        self.model = model
        self.params = params
        self.dt = float(dt)
        self.name = name
        self.seed = seed
        self.time_scale = time_scale
        self.limb_m = limb_m if limb_m is not None else model.demo_limb_m
        self.ctrl = init_controller(model, params, time_scale)
        self.plant = PlantState(model.start, np.zeros(3), 0.0)
        self.rng = np.random.default_rng(seed)
        self.patient = _PatientRuntime(patient, self.rng)
        self.safety_cfg = safety if (safety and safety.enabled) else None
        self.gmr = gmr
        if self.safety_cfg:
            if gmr is None:
                raise ScenarioError("safety enabled but no corridor model")
            speed = self.safety_cfg.reverse_speed_mps
            if speed is None:
                speed = nominal_reverse_speed(model, time_scale)
            self.sstate = init_safety(self.safety_cfg.n_sigma,
                                      self.safety_cfg.dwell_ticks, speed)
        else:
            self.sstate = None
        self.trace = _TraceBuilder()
        self.tick_index = 0
        self.status = "running"
        self.hold_s = 0.0
        self.duration_limit_s = 60.0
        self.last_row: dict | None = None

    # -- helpers

    def _effective_phase(self) -> float:
        if self.sstate is not None and self.sstate.mode != MODE_FORWARD \
                and self.sstate.buffer:
            return self.sstate.buffer[self.sstate.cursor].phase
        return self.ctrl.canonical.phase

    @staticmethod
    def _progress_of(phase: float) -> float:
        return progress(CanonicalState(phase=phase))

    def tick(self, external_force: np.ndarray | None = None) -> dict | None:
        """Advance one control period. Returns the recorded row, or None
        once the session has stopped."""
        if self.status != "running":
            return None
        dt = self.dt
        t = self.tick_index * dt
        phase_now = self._effective_phase()
        prog_now = self._progress_of(phase_now)
        tangent_held = self.ctrl.last_tangent

        if external_force is not None:
            f_ex = np.asarray(external_force, dtype=float).reshape(3)
        else:
            f_ex = self.patient.force(
                t, phase_now, prog_now, tangent_held, self.plant,
                self.ctrl.integrator.pose.position, self.model.start.position)
        mag = float(np.linalg.norm(f_ex))
        if mag > MAX_FORCE_N:
            f_ex = f_ex * (MAX_FORCE_N / mag)
            mag = MAX_FORCE_N

        corridor_mean = math.nan
        corridor_sigma = math.nan
        in_corridor = True
        if self.sstate is not None:
            corridor_mean, corridor_sigma = gmr_predict(
                self.gmr, phase_now, self.safety_cfg.sigma_floor_n)
            in_corridor = corridor_check(mag, corridor_mean, corridor_sigma,
                                         self.sstate.n_sigma)

        split = resolve_split(self.ctrl, self.params, f_ex)
        pre_phase = self.ctrl.canonical.phase
        ref_pose = self.ctrl.integrator.pose

        if self.sstate is None:
            cmd, self.ctrl = control_step(self.model, self.ctrl, self.params,
                                          f_ex, dt)
            cmd_pose = cmd.pose
            mode_label = "OFF"
            row_phase = pre_phase
        elif self.sstate.mode == MODE_FORWARD and in_corridor:
            cmd, self.ctrl = control_step(self.model, self.ctrl, self.params,
                                          f_ex, dt)
            cmd_pose = cmd.pose
            entry = BufferEntry(pre_phase, cmd_pose, snapshot=self.ctrl)
            self.sstate, _ = safety_step(self.sstate, True, entry, dt)
            mode_label = MODE_FORWARD
            row_phase = pre_phase
        elif self.sstate.mode == MODE_FORWARD:
            # Corridor violated: freeze the controller, start reversing
            self.sstate, directive = safety_step(self.sstate, False, None, dt)
            cmd_pose = directive.pose if directive.pose is not None \
                else self.plant.pose
            mode_label = self.sstate.mode
            row_phase = self._effective_phase()
        else:
            self.sstate, directive = safety_step(self.sstate, in_corridor,
                                                 None, dt)
            if directive.kind == MODE_FORWARD:
                if directive.resume_snapshot is not None:
                    self.ctrl = directive.resume_snapshot
                split = resolve_split(self.ctrl, self.params, f_ex)
                pre_phase = self.ctrl.canonical.phase
                ref_pose = self.ctrl.integrator.pose
                cmd, self.ctrl = control_step(self.model, self.ctrl,
                                              self.params, f_ex, dt)
                cmd_pose = cmd.pose
                entry = BufferEntry(pre_phase, cmd_pose, snapshot=self.ctrl)
                self.sstate, _ = safety_step(self.sstate, True, entry, dt)
                mode_label = MODE_FORWARD
                row_phase = pre_phase
            else:
                cmd_pose = directive.pose if directive.pose is not None \
                    else self.plant.pose
                mode_label = self.sstate.mode
                row_phase = self._effective_phase()

        self.plant = plant_step(self.plant, TcpCommand(
            cmd_pose, np.zeros(3), np.zeros(3)), dt)

        row = dict(
            tick=self.tick_index, time_s=t,
            phase=row_phase, progress=self._progress_of(row_phase),
            ref_px=ref_pose.position[0], ref_py=ref_pose.position[1],
            ref_pz=ref_pose.position[2],
            ref_qw=ref_pose.orientation[0], ref_qx=ref_pose.orientation[1],
            ref_qy=ref_pose.orientation[2], ref_qz=ref_pose.orientation[3],
            cmd_px=cmd_pose.position[0], cmd_py=cmd_pose.position[1],
            cmd_pz=cmd_pose.position[2],
            cmd_qw=cmd_pose.orientation[0], cmd_qx=cmd_pose.orientation[1],
            cmd_qy=cmd_pose.orientation[2], cmd_qz=cmd_pose.orientation[3],
            tcp_px=self.plant.pose.position[0],
            tcp_py=self.plant.pose.position[1],
            tcp_pz=self.plant.pose.position[2],
            tcp_qw=self.plant.pose.orientation[0],
            tcp_qx=self.plant.pose.orientation[1],
            tcp_qy=self.plant.pose.orientation[2],
            tcp_qz=self.plant.pose.orientation[3],
            force_x=f_ex[0], force_y=f_ex[1], force_z=f_ex[2],
            force_mag_n=mag, force_tangential_n=split.tangential_force,
            force_ortho_n=float(np.linalg.norm(split.orthogonal_force)),
            tangent_x=split.tangent[0], tangent_y=split.tangent[1],
            tangent_z=split.tangent[2],
            deviation_m=float(np.linalg.norm(self.ctrl.deviation)),
            safety_mode=mode_label, in_corridor=float(in_corridor),
            corridor_mean_n=corridor_mean, corridor_sigma_n=corridor_sigma,
        )
        self.trace.add(**row)
        self.last_row = row
        self.tick_index += 1

        if mode_label == MODE_HOLD:
            self.hold_s += dt
        else:
            self.hold_s = 0.0

        if progress(self.ctrl.canonical) >= 1.0 and (
                self.sstate is None or self.sstate.mode == MODE_FORWARD):
            self.status = "completed"
        elif self.tick_index * dt >= self.duration_limit_s:
            self.status = "duration_limit"
        elif self.safety_cfg is not None \
                and self.hold_s >= self.safety_cfg.hold_timeout_s:
            self.status = "hold_timeout"
        return row

    def finalize(self) -> SimTrace:
        meta = {
            "name": self.name,
            "seed": str(self.seed),
            "dt": repr(self.dt),
            "modality": self.params.mode,
            "time_scale": repr(self.time_scale),
            "limb_m": repr(self.limb_m),
            "status": self.status,
        }
        if self.sstate is not None:
            meta["n_sigma"] = repr(self.sstate.n_sigma)
        return self.trace.finalize(meta)


def build_loop(scenario: Scenario) -> SessionLoop:
    """Load referenced models and assemble the loop for a scenario."""
    from .dmp import scale_dmp
    from .serialize import load_dmp_model, load_gmr_model

    model = load_dmp_model(scenario.resolve(scenario.model_path))
    start_new = goal_new = None
    if scenario.start_position is not None:
        start_new = Pose(scenario.start_position, model.start.orientation)
    if scenario.goal_position is not None:
        goal_new = Pose(scenario.goal_position, model.goal.orientation)
    wants_scale = scenario.scale_to_patient and (
        scenario.patient_limb_m is not None or start_new is not None
        or goal_new is not None)
    if wants_scale:
        limb = scenario.patient_limb_m or model.demo_limb_m
        model = scale_dmp(model, limb, start_new=start_new, goal_new=goal_new)
    gmr = None
    if scenario.safety.enabled:
        gmr = load_gmr_model(scenario.resolve(scenario.safety.gmr_path))
    loop = SessionLoop(
        model, scenario.modality, dt=scenario.dt,
        time_scale=scenario.time_scale, patient=scenario.patient,
        seed=scenario.seed, gmr=gmr, safety=scenario.safety,
        name=scenario.name, limb_m=scenario.patient_limb_m)
    loop.duration_limit_s = scenario.duration_limit_s
    return loop


def run_scenario(scenario: Scenario) -> SimTrace:
    """Execute the scenario to termination and return its trace."""
    loop = build_loop(scenario)
    max_ticks = int(math.ceil(scenario.duration_limit_s / scenario.dt)) + 1
    for _ in range(max_ticks):
        if loop.tick() is None:
            break
    return loop.finalize()


# -------------------------------------------------------------- metrics

def completion_time_s(trace: SimTrace) -> float:
    """Seconds to progress 1.0, or nan if the run did not complete."""
    if trace.meta.get("status") != "completed":
        return math.nan
    return float((trace.column("tick")[-1] + 1) * float(trace.meta["dt"]))


def max_deviation_m(trace: SimTrace) -> float:
    return float(trace.column("deviation_m").max())


def reaction_ticks(trace: SimTrace) -> float:
    """Ticks between the first corridor violation and the first reversal."""
    viol = np.where(trace.column("in_corridor") < 0.5)[0]
    rev = np.where(trace.column("safety_mode") == MODE_REVERSING)[0]
    if viol.size == 0 or rev.size == 0:
        return math.nan
    return float(rev[0] - viol[0])


def path_distance_m(trace: SimTrace, which: str = "cmd") -> float:
    from .bodyframe import path_distance
    return path_distance(trace.trajectory(which))


def rmse_m(traj_a: TimedTrajectory, traj_b: TimedTrajectory,
           n_samples: int = 200, align_start: bool = False) -> float:
    """Position RMSE on a common normalized timeline."""
    ua = np.linspace(0.0, 1.0, n_samples)
    pa = traj_a.resample_positions(
        traj_a.times[0] + ua * (traj_a.times[-1] - traj_a.times[0]))
    pb = traj_b.resample_positions(
        traj_b.times[0] + ua * (traj_b.times[-1] - traj_b.times[0]))
    if align_start:
        pa = pa - pa[0]
        pb = pb - pb[0]
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))
