"""Geometric value types shared across the stack.

Conventions: positions in meters, forces in newtons, quaternions scalar
first [w, x, y, z] and hemisphere-canonicalized (w >= 0; on w == 0 the
first nonzero vector component is made positive). All value types are
immutable; arrays they hold are marked non-writeable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

QUAT_NORM_TOL = 1e-6


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is non-negative.

    On an exactly zero scalar part the first nonzero vector component is
    made positive, which keeps the choice deterministic for 180 degree
    rotations.
    """
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return q if c > 0.0 else -q
    return q


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _as_unit_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4).copy()
    if not np.all(np.isfinite(q)):
        raise ValueError("quaternion must be finite")
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"quaternion norm {n:.9f} is not 1 within {QUAT_NORM_TOL}")
    return canonical_quat(q / n)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid-body pose: position (m) plus unit quaternion orientation."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3).copy()
        if not np.all(np.isfinite(p)):
            raise ValueError("position must be finite")
        q = _as_unit_quat(self.orientation)
        object.__setattr__(self, "position", _freeze(p))
        object.__setattr__(self, "orientation", _freeze(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass(frozen=True, eq=False)
class Wrench:
    """External load on the end effector: force (N) and torque (Nm)."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3).copy()
        t = np.asarray(self.torque, dtype=float).reshape(3).copy()
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("wrench components must be finite")
        object.__setattr__(self, "force", _freeze(f))
        object.__setattr__(self, "torque", _freeze(t))

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class TimedTrajectory:
    """Uniform container for a timed pose sequence.

    times are strictly increasing seconds, at least two samples.
    Quaternions are normalized and canonicalized on construction.
    """

    times: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    frame_id: str = "body"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1).copy()
        p = np.asarray(self.positions, dtype=float).copy()
        q = np.asarray(self.orientations, dtype=float).copy()
        n = t.shape[0]
        if n < 2:
            raise ValueError("trajectory needs at least two samples")
        if p.shape != (n, 3) or q.shape != (n, 4):
            raise ValueError(
                f"shape mismatch: times {t.shape}, positions {p.shape}, "
                f"orientations {q.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))
                and np.all(np.isfinite(q))):
            raise ValueError("trajectory values must be finite")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")
        norms = np.linalg.norm(q, axis=1)
        if np.any(np.abs(norms - 1.0) > QUAT_NORM_TOL):
            raise ValueError("orientations must be unit quaternions")
        q = q / norms[:, None]
        for i in range(n):
            q[i] = canonical_quat(q[i])
        object.__setattr__(self, "times", _freeze(t))
        object.__setattr__(self, "positions", _freeze(p))
        object.__setattr__(self, "orientations", _freeze(q))

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def pose(self, i: int) -> Pose:
        return Pose(self.positions[i], self.orientations[i])

    @classmethod
    def from_poses(cls, times, poses, frame_id: str = "body") -> "TimedTrajectory":
        p = np.array([po.position for po in poses], dtype=float)
        q = np.array([po.orientation for po in poses], dtype=float)
        return cls(np.asarray(times, dtype=float), p, q, frame_id)

    def resample_positions(self, query_times: np.ndarray) -> np.ndarray:
        """Linear per-axis position interpolation at the query times."""
        qt = np.asarray(query_times, dtype=float)
        out = np.empty((qt.shape[0], 3))
        for k in range(3):
            out[:, k] = np.interp(qt, self.times, self.positions[:, k])
        return out


def quat_log(q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Rotation vector carrying q_ref onto q (magnitude <= pi)."""
    qa = _as_unit_quat(q)
    qb = _as_unit_quat(q_ref)
    return _kernels.quat_log_rel(qa, qb)


def quat_exp_step(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation q by angular velocity omega over dt seconds."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q = _as_unit_quat(q)
    w = np.asarray(omega, dtype=float).reshape(3)
    step = _kernels.quat_from_rotvec(w * dt)
    return canonical_quat(_kernels.quat_normalize(_kernels.quat_mul(step, q)))


def slerp_step(q_from: np.ndarray, q_to: np.ndarray, frac: float) -> np.ndarray:
    """Geodesic interpolation from q_from toward q_to by fraction frac."""
    qa = _as_unit_quat(q_from)
    qb = _as_unit_quat(q_to)
    r = _kernels.quat_log_rel(qb, qa)
    step = _kernels.quat_from_rotvec(frac * r)
    return canonical_quat(_kernels.quat_normalize(_kernels.quat_mul(step, qa)))


def quat_from_matrix(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion for a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(rot, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("rotation matrix must be 3x3")
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
        ])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([
            (m[2, 1] - m[1, 2]) / s,
            0.25 * s,
            (m[0, 1] + m[1, 0]) / s,
            (m[0, 2] + m[2, 0]) / s,
        ])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([
            (m[0, 2] - m[2, 0]) / s,
            (m[0, 1] + m[1, 0]) / s,
            0.25 * s,
            (m[1, 2] + m[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        ])
    return canonical_quat(q / np.linalg.norm(q))


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion."""
    w, x, y, z = _as_unit_quat(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def power_moving_average(series, window: int, power: float = 2.0) -> np.ndarray:
    """Causal weighted moving average with polynomially rising weights.

    Weight of the sample j steps from the window start is (j + 1) ** power,
    so the newest sample always carries the largest weight. During warm-up
    (fewer than window samples seen) the window is the available prefix.
    Works on (n,) series and (n, d) stacked series alike.

    power = 0 recovers the plain moving average; larger powers track fast
    changes more closely at the cost of less smoothing.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim not in (1, 2):
        raise ValueError("series must be 1-D or 2-D")
    if x.shape[0] == 0:
        raise ValueError("series must be non-empty")
    if window < 1:
        raise ValueError("window must be >= 1")
    if power < 0.0:
        raise ValueError("power must be >= 0")
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        m = min(window, i + 1)
        w = np.arange(1.0, m + 1.0) ** power
        out[i] = w @ x[i - m + 1:i + 1] / w.sum()
    return out
