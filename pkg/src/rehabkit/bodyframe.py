"""Camera-to-body normalization of tracked keypoint streams.

A body-centric frame is anchored on the torso every frame: x from left to
right shoulder, y the caudal direction (toward the hips, orthogonalized
against x), z = x cross y. Trajectories expressed in this frame are
invariant to where the subject sits and how the trunk is rotated, which is
what makes demonstrations recorded on one day reusable on another.

Keypoint streams arrive as JSON lines:
    {"time_s": 0.0, "keypoints": {"name": [x, y, z], ...},
     "confidence": {"name": 0.9, ...}}
Confidence below 0.5 drops the landmark for that frame before any checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .motion import (Pose, TimedTrajectory, power_moving_average,
                     quat_from_matrix, rotation_matrix)
from . import _kernels

REQUIRED_LANDMARKS = ("left_shoulder", "right_shoulder", "right_hip")
CONFIDENCE_THRESHOLD = 0.5
MIN_SHOULDER_SEPARATION_M = 0.01
MIN_AXIS_ANGLE_RAD = np.radians(2.0)
ALIGNMENT_TOLERANCE_S = 0.05
MIN_JOINT_SEPARATION_M = 0.01
LIMB_LENGTH_BAND_M = (0.3, 1.0)
MIN_LIMB_FRAMES = 10


class KeypointStreamError(ValueError):
    """Malformed keypoint stream (bad JSON, bad shapes, bad values)."""


class MissingLandmarkError(KeypointStreamError):
    """A required landmark is absent (or gated out) on some frame."""

    def __init__(self, frame_index: int, landmark: str):
        self.frame_index = frame_index
        self.landmark = landmark
        super().__init__(
            f"frame {frame_index}: required landmark '{landmark}' missing "
            f"or below confidence {CONFIDENCE_THRESHOLD}")


class DegenerateLandmarksError(ValueError):
    """Landmark geometry too degenerate to define a direction or frame."""


class AlignmentGapError(ValueError):
    """No skeleton frame close enough in time to a trajectory sample."""


class InsufficientFramesError(ValueError):
    """Too few usable frames for a statistic."""


@dataclass(frozen=True, eq=False)
class SkeletonFrame:
    """One tracked frame: landmark positions (camera frame, m) by name."""

    time: float
    keypoints: dict
    confidence: dict

    def has(self, name: str) -> bool:
        return name in self.keypoints

    def point(self, name: str) -> np.ndarray:
        return self.keypoints[name]


@dataclass(frozen=True, eq=False)
class BodyFrame:
    """Torso-anchored frame: origin at the tracked-side shoulder."""

    origin: np.ndarray
    orientation: np.ndarray  # camera-from-body rotation, unit quaternion

    @property
    def rotation(self) -> np.ndarray:
        """Columns are the body axes expressed in camera coordinates."""
        return rotation_matrix(self.orientation)


@dataclass(frozen=True)
class AnthropometricProfile:
    """Per-patient limb geometry used for amplitude scaling."""

    limb_m: float
    side: str


@dataclass(frozen=True)
class ForearmRoll:
    angle_rad: float
    grasp: str  # "pronated" or "supinated"


def load_keypoint_stream(path) -> list[SkeletonFrame]:
    """Parse a JSONL keypoint file into time-sorted skeleton frames.

    Landmarks with confidence below the threshold are dropped per frame.
    Raises MissingLandmarkError (with 0-based frame index in file order)
    if a required torso landmark does not survive gating, and
    KeypointStreamError on malformed lines.
    """
    frames = []
    text = Path(path).read_text()
    index = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise KeypointStreamError(f"line {lineno}: invalid JSON ({e})") from e
        try:
            t = float(rec["time_s"])
            raw = rec["keypoints"]
        except (KeyError, TypeError, ValueError) as e:
            raise KeypointStreamError(f"line {lineno}: bad record ({e})") from e
        conf = rec.get("confidence", {})
        pts = {}
        kept_conf = {}
        for name, xyz in raw.items():
            c = float(conf.get(name, 1.0))
            if c < CONFIDENCE_THRESHOLD:
                continue
            p = np.asarray(xyz, dtype=float)
            if p.shape != (3,) or not np.all(np.isfinite(p)):
                raise KeypointStreamError(
                    f"line {lineno}: landmark '{name}' is not a finite 3-vector")
            p.flags.writeable = False
            pts[name] = p
            kept_conf[name] = c
        for name in REQUIRED_LANDMARKS:
            if name not in pts:
                raise MissingLandmarkError(index, name)
        frames.append(SkeletonFrame(t, pts, kept_conf))
        index += 1
    frames.sort(key=lambda f: f.time)
    return frames


def smooth_keypoints(frames, window: int = 5, power: float = 2.0):
    """Filter landmark positions over time with the power moving average.

    Only landmarks present in every frame are filtered; intermittent ones
    pass through untouched. Returns a new frame list.
    """
    if not frames:
        return []
    common = set(frames[0].keypoints)
    for f in frames[1:]:
        common &= set(f.keypoints)
    smoothed = {}
    for name in common:
        series = np.array([f.point(name) for f in frames])
        smoothed[name] = power_moving_average(series, window, power)
    out = []
    for i, f in enumerate(frames):
        pts = dict(f.keypoints)
        for name in common:
            p = smoothed[name][i].copy()
            p.flags.writeable = False
            pts[name] = p
        out.append(SkeletonFrame(f.time, pts, f.confidence))
    return out


def build_body_frame(frame: SkeletonFrame, side: str) -> BodyFrame:
    """Construct the torso frame from one skeleton frame.

    x: left to right shoulder. y: caudal (hip direction orthogonalized
    against x). z: x cross y. Origin: the tracked-side shoulder.
    """
    _check_side(side)
    for name in REQUIRED_LANDMARKS:
        if not frame.has(name):
            raise MissingLandmarkError(-1, name)
    ls = frame.point("left_shoulder")
    rs = frame.point("right_shoulder")
    hip = frame.point("right_hip")

    x = rs - ls
    d = np.linalg.norm(x)
    if d < MIN_SHOULDER_SEPARATION_M:
        raise DegenerateLandmarksError(
            f"shoulders separated by {d * 1e3:.2f} mm, cannot define frame")
    x = x / d

    mid = 0.5 * (ls + rs)
    v = hip - mid
    vn = np.linalg.norm(v)
    y_raw = v - (v @ x) * x
    # Hip nearly on the shoulder line leaves no usable caudal direction
    if vn < MIN_SHOULDER_SEPARATION_M or np.linalg.norm(y_raw) < vn * np.sin(MIN_AXIS_ANGLE_RAD):
        raise DegenerateLandmarksError(
            "hip landmark is collinear with the shoulder line")
    y = y_raw / np.linalg.norm(y_raw)
    z = np.cross(x, y)

    rot = np.column_stack([x, y, z])
    origin = frame.point(f"{side}_shoulder").copy()
    return BodyFrame(origin, quat_from_matrix(rot))


def to_body_frame(traj: TimedTrajectory, frames, side: str) -> TimedTrajectory:
    """Re-express a camera-frame trajectory in the per-frame body frame.

    Each trajectory sample is paired with the nearest skeleton frame in
    time; a gap beyond the alignment tolerance raises AlignmentGapError.
    """
    if not frames:
        raise AlignmentGapError("no skeleton frames to align against")
    frame_times = np.array([f.time for f in frames])
    order = np.argsort(frame_times)
    frame_times = frame_times[order]
    frames = [frames[i] for i in order]

    cache: dict[int, BodyFrame] = {}
    n = len(traj)
    pos_out = np.empty((n, 3))
    quat_out = np.empty((n, 4))
    for k in range(n):
        t = traj.times[k]
        j = int(np.searchsorted(frame_times, t))
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(frames):
                gap = abs(frame_times[cand] - t)
                if best is None or gap < best[1]:
                    best = (cand, gap)
        idx, gap = best
        if gap > ALIGNMENT_TOLERANCE_S:
            raise AlignmentGapError(
                f"trajectory sample at t={t:.3f}s has no skeleton frame "
                f"within {ALIGNMENT_TOLERANCE_S * 1e3:.0f} ms (nearest {gap:.3f}s)")
        if idx not in cache:
            cache[idx] = build_body_frame(frames[idx], side)
        bf = cache[idx]
        rot = bf.rotation
        pos_out[k] = rot.T @ (traj.positions[k] - bf.origin)
        quat_out[k] = _kernels.quat_mul(
            _kernels.quat_conj(bf.orientation), traj.orientations[k])
    return TimedTrajectory(traj.times.copy(), pos_out, quat_out, frame_id="body")


def _check_side(side: str):
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _unit_between(frame, a: str, b: str, min_sep: float):
    if not (frame.has(a) and frame.has(b)):
        missing = a if not frame.has(a) else b
        raise MissingLandmarkError(-1, missing)
    v = frame.point(b) - frame.point(a)
    n = np.linalg.norm(v)
    if n < min_sep:
        raise DegenerateLandmarksError(
            f"landmarks '{a}' and '{b}' are {n * 1e3:.2f} mm apart")
    return v / n, n


def forearm_roll(frame: SkeletonFrame, side: str) -> ForearmRoll:
    """Rotation of the hand about the forearm axis, signed, in (-pi, pi].

    Measured between the knuckle line (index to pinky) and the body-frame
    x-axis, both projected perpendicular to the forearm axis. |roll| below
    pi/2 reads as supinated, pi/2 and beyond as pronated.
    """
    _check_side(side)
    axis, _ = _unit_between(frame, f"{side}_elbow", f"{side}_wrist",
                            MIN_JOINT_SEPARATION_M)
    kvec, _ = _unit_between(frame, f"{side}_knuckle_pinky",
                            f"{side}_knuckle_index", 1e-4)

    k_perp = kvec - (kvec @ axis) * axis
    if np.linalg.norm(k_perp) < np.sin(MIN_AXIS_ANGLE_RAD):
        raise DegenerateLandmarksError(
            "knuckle line is parallel to the forearm axis")
    k_perp /= np.linalg.norm(k_perp)

    bf = build_body_frame(frame, side)
    ref = bf.rotation[:, 0]
    r_perp = ref - (ref @ axis) * axis
    if np.linalg.norm(r_perp) < np.sin(MIN_AXIS_ANGLE_RAD):
        raise DegenerateLandmarksError(
            "roll reference direction is parallel to the forearm axis")
    r_perp /= np.linalg.norm(r_perp)

    angle = float(np.arctan2(np.cross(r_perp, k_perp) @ axis, r_perp @ k_perp))
    grasp = "supinated" if abs(angle) < np.pi / 2 else "pronated"
    return ForearmRoll(angle, grasp)


def wrist_pose_stream(frames, side: str) -> TimedTrajectory:
    """6-DoF wrist poses in the camera frame, one per skeleton frame.

    Orientation: x along the forearm (elbow to wrist), y toward the index
    knuckle projected off the forearm axis, z completing the triad. This is
    the raw tool trajectory a demonstration records.
    """
    _check_side(side)
    if len(frames) < 2:
        raise InsufficientFramesError("need at least two frames")
    times = []
    poses = []
    for f in frames:
        axis, _ = _unit_between(f, f"{side}_elbow", f"{side}_wrist",
                                MIN_JOINT_SEPARATION_M)
        kvec, _ = _unit_between(f, f"{side}_knuckle_pinky",
                                f"{side}_knuckle_index", 1e-4)
        y_raw = kvec - (kvec @ axis) * axis
        if np.linalg.norm(y_raw) < np.sin(MIN_AXIS_ANGLE_RAD):
            raise DegenerateLandmarksError(
                "knuckle line is parallel to the forearm axis")
        y = y_raw / np.linalg.norm(y_raw)
        rot = np.column_stack([axis, y, np.cross(axis, y)])
        times.append(f.time)
        poses.append(Pose(f.point(f"{side}_wrist"), quat_from_matrix(rot)))
    return TimedTrajectory.from_poses(times, poses, frame_id="camera")


def estimate_limb_length(frames, side: str) -> AnthropometricProfile:
    """Median shoulder-elbow-wrist chain length over the stream.

    Needs at least 10 frames with all three landmarks; the result must land
    in the anatomical sanity band (0.3 to 1.0 m) or a ValueError is raised.
    """
    _check_side(side)
    names = (f"{side}_shoulder", f"{side}_elbow", f"{side}_wrist")
    lengths = []
    for f in frames:
        if all(f.has(n) for n in names):
            upper = np.linalg.norm(f.point(names[1]) - f.point(names[0]))
            fore = np.linalg.norm(f.point(names[2]) - f.point(names[1]))
            lengths.append(upper + fore)
    if len(lengths) < MIN_LIMB_FRAMES:
        raise InsufficientFramesError(
            f"only {len(lengths)} frames carry the full {side} arm chain, "
            f"need {MIN_LIMB_FRAMES}")
    limb = float(np.median(lengths))
    lo, hi = LIMB_LENGTH_BAND_M
    if not (lo <= limb <= hi):
        raise ValueError(
            f"estimated limb length {limb:.3f} m outside sanity band "
            f"[{lo}, {hi}] m; check tracking units")
    return AnthropometricProfile(limb_m=limb, side=side)


def joint_angle(a, b, c) -> float:
    """Angle at vertex b of the a-b-c chain, degrees in [0, 180]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    u = a - b
    v = c - b
    if np.linalg.norm(u) < MIN_JOINT_SEPARATION_M or \
            np.linalg.norm(v) < MIN_JOINT_SEPARATION_M:
        raise DegenerateLandmarksError("joint landmarks nearly coincide")
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), u @ v)))


def path_distance(traj: TimedTrajectory) -> float:
    """Arc length of the position polyline, meters."""
    steps = np.diff(traj.positions, axis=0)
    return float(np.linalg.norm(steps, axis=1).sum())


def reach_ratio(distance_m: float, limb_m: float) -> float:
    """Path length normalized by limb length (dimensionless)."""
    if limb_m <= 0.0:
        raise ValueError("limb length must be positive")
    return distance_m / limb_m
