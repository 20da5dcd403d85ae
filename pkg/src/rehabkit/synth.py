"""Synthetic demonstration and skeleton generators.

Deterministic builders for desk testing without a capture rig: a smooth
3-D exercise arc with a min-jerk time profile, and a skeleton stream of a
seated subject performing elbow flexion whose wrist traces that arc. Used
by the bundled fixtures and the test suite.
"""

from __future__ import annotations

import numpy as np

from .bodyframe import SkeletonFrame
from .motion import (Pose, TimedTrajectory, canonical_quat, quat_from_matrix,
                     rotation_matrix)
from . import _kernels


def min_jerk(u: np.ndarray) -> np.ndarray:
    """Smooth 0 to 1 ramp with zero velocity and acceleration at both ends."""
    return 10.0 * u ** 3 - 15.0 * u ** 4 + 6.0 * u ** 5


def exercise_arc(duration_s: float = 12.0, rate_hz: float = 100.0,
                 radius_m: float = 0.28, path_m: float = 0.47,
                 tilt_m: float = 0.04, frame_id: str = "body"
                 ) -> TimedTrajectory:
    """Tilted circular arc with min-jerk timing, exact polyline length.

    The wrist sweeps a forearm-radius arc (flexion about a fixed elbow)
    with a small out-of-plane excursion so all three axes move; the whole
    curve is rescaled about its start so the sampled polyline length is
    path_m to machine precision. Orientation rotates with the sweep.
    """
    n = int(round(duration_s * rate_hz)) + 1
    t = np.linspace(0.0, duration_s, n)
    m = min_jerk(t / duration_s)
    sweep = path_m / radius_m  # radians of flexion, pre-normalization
    theta = -0.35 + sweep * m

    pos = np.column_stack([
        radius_m * np.cos(theta),
        radius_m * np.sin(theta),
        tilt_m * (1.0 - np.cos(np.pi * m)),
    ])
    pos = pos - pos[0]

    # Normalize the sampled polyline length exactly to path_m
    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1).sum()
    pos = pos * (path_m / seg)

    quats = np.empty((n, 4))
    axis = np.array([0.15, 0.1, 1.0])
    axis /= np.linalg.norm(axis)
    for k in range(n):
        quats[k] = _kernels.quat_from_rotvec(axis * (theta[k] - theta[0]))
    return TimedTrajectory(t, pos, quats, frame_id=frame_id)


def _subject_geometry():
    """Fixed camera-frame anchor points of the seated subject.

    Camera axes: x right, y down, z away from the camera. The subject
    faces the camera, so their left shoulder appears on the camera's
    right.
    """
    left_sh = np.array([0.18, -0.05, 2.10])
    right_sh = np.array([-0.18, -0.05, 2.05])
    right_hip = np.array([-0.16, 0.40, 2.08])
    return left_sh, right_sh, right_hip


def elbow_flexion_stream(duration_s: float = 12.0, rate_hz: float = 30.0,
                         upper_arm_m: float = 0.33, forearm_m: float = 0.28,
                         sweep_rad: float | None = None,
                         side: str = "right") -> list[SkeletonFrame]:
    """Skeleton frames of a seated subject flexing the elbow.

    The upper arm hangs at a fixed orientation; the forearm sweeps with a
    min-jerk profile, carrying wrist and knuckle markers. Limb chain is
    upper_arm_m + forearm_m. Knuckles ride the forearm frame, so grasp
    roll is well defined on every frame.
    """
    left_sh, right_sh, right_hip = _subject_geometry()
    shoulder = right_sh if side == "right" else left_sh
    n = int(round(duration_s * rate_hz)) + 1
    t = np.linspace(0.0, duration_s, n)
    m = min_jerk(t / duration_s)
    if sweep_rad is None:
        sweep_rad = 0.47 / forearm_m
    theta = -0.35 + sweep_rad * m

    # Upper arm points down and slightly forward; elbow is fixed
    upper_dir = np.array([0.05, 0.97, -0.15])
    upper_dir /= np.linalg.norm(upper_dir)
    elbow = shoulder + upper_arm_m * upper_dir

    # Flexion plane: forearm sweeps in a plane tilted off the torso
    e1 = np.array([0.2, -0.9, -0.25])
    e1 -= (e1 @ upper_dir) * upper_dir
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(upper_dir, e1)

    frames = []
    for k in range(n):
        fore_dir = np.cos(theta[k]) * e1 + np.sin(theta[k]) * e2
        wrist = elbow + forearm_m * fore_dir
        # Knuckle line perpendicular to the forearm, rotating with it
        lat = np.cross(fore_dir, upper_dir)
        lat /= np.linalg.norm(lat)
        knuckle_mid = wrist + 0.06 * fore_dir
        pts = {
            "left_shoulder": left_sh,
            "right_shoulder": right_sh,
            "right_hip": right_hip,
            f"{side}_shoulder": shoulder,
            f"{side}_elbow": elbow,
            f"{side}_wrist": wrist,
            f"{side}_knuckle_index": knuckle_mid + 0.04 * lat,
            f"{side}_knuckle_pinky": knuckle_mid - 0.04 * lat,
        }
        pts = {k2: _readonly(v) for k2, v in pts.items()}
        conf = {k2: 0.97 for k2 in pts}
        frames.append(SkeletonFrame(float(t[k]), pts, conf))
    return frames


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).copy()
    a.flags.writeable = False
    return a


def rotate_stream(frames, angle_deg: float,
                  pivot: np.ndarray | None = None) -> list:
    """Rigidly rotate every landmark about the camera vertical axis.

    Emulates the same subject sitting with the trunk turned by angle_deg.
    Pivot defaults to the first frame's shoulder midpoint.
    """
    if pivot is None:
        f0 = frames[0]
        pivot = 0.5 * (f0.point("left_shoulder") + f0.point("right_shoulder"))
    ang = np.radians(angle_deg)
    c, s = np.cos(ang), np.sin(ang)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    out = []
    for f in frames:
        pts = {name: _readonly(rot @ (p - pivot) + pivot)
               for name, p in f.keypoints.items()}
        out.append(SkeletonFrame(f.time, pts, dict(f.confidence)))
    return out


def jitter_stream(frames, noise_std_m: float, rng: np.random.Generator) -> list:
    """Add iid Gaussian position noise to every landmark of every frame."""
    out = []
    for f in frames:
        pts = {name: _readonly(p + rng.normal(0.0, noise_std_m, 3))
               for name, p in f.keypoints.items()}
        out.append(SkeletonFrame(f.time, pts, dict(f.confidence)))
    return out


def write_keypoint_jsonl(frames, path):
    """Serialize skeleton frames to the keypoint JSONL interchange format."""
    import json
    with open(path, "w") as fh:
        for f in frames:
            rec = {
                "time_s": f.time,
                "keypoints": {k: [float(x) for x in v]
                              for k, v in f.keypoints.items()},
                "confidence": {k: float(c) for k, c in f.confidence.items()},
            }
            fh.write(json.dumps(rec) + "\n")
