"""Jitted numeric kernels: quaternion algebra and attractor integration.

Everything here works on plain float64 ndarrays so the same code runs under
numba and the interpreter fallback (see accel.py). Quaternions are scalar
first [w, x, y, z]. The integration state is packed as a 13-vector:
position (0:3), scaled velocity (3:6), quaternion (6:10), scaled angular
velocity (10:13). "Scaled" means derivatives with respect to normalized
phase time, not seconds.
"""

import numpy as np

from .accel import njit

STATE_DIM = 13


@njit(cache=True)
def quat_mul(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@njit(cache=True)
def quat_mul_vec(v, q):
    """Product (0, v) * q, used for the quaternion rate equation."""
    out = np.empty(4)
    out[0] = -v[0] * q[1] - v[1] * q[2] - v[2] * q[3]
    out[1] = v[0] * q[0] + v[1] * q[3] - v[2] * q[2]
    out[2] = -v[0] * q[3] + v[1] * q[0] + v[2] * q[1]
    out[3] = v[0] * q[2] - v[1] * q[1] + v[2] * q[0]
    return out


@njit(cache=True)
def quat_conj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@njit(cache=True)
def quat_normalize(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@njit(cache=True)
def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    tx = 2.0 * (q[2] * v[2] - q[3] * v[1])
    ty = 2.0 * (q[3] * v[0] - q[1] * v[2])
    tz = 2.0 * (q[1] * v[1] - q[2] * v[0])
    out = np.empty(3)
    out[0] = v[0] + q[0] * tx + q[2] * tz - q[3] * ty
    out[1] = v[1] + q[0] * ty + q[3] * tx - q[1] * tz
    out[2] = v[2] + q[0] * tz + q[1] * ty - q[2] * tx
    return out


@njit(cache=True)
def quat_log_rel(qa, qb):
    """Rotation vector of qa * qb^-1, magnitude <= pi.

    Hemisphere is canonicalized before taking the log so the result is the
    minimal rotation carrying qb onto qa.
    """
    r = quat_mul(qa, quat_conj(qb))
    if r[0] < 0.0:
        r = -r
    nv = np.sqrt(r[1] * r[1] + r[2] * r[2] + r[3] * r[3])
    if nv < 1e-12:
        # w ~ 1 here for unit inputs; first-order log
        return 2.0 * r[1:4].copy()
    angle = 2.0 * np.arctan2(nv, r[0])
    return r[1:4] * (angle / nv)


@njit(cache=True)
def quat_from_rotvec(r):
    angle = np.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    out = np.empty(4)
    if angle < 1e-12:
        out[0] = 1.0
        out[1] = 0.5 * r[0]
        out[2] = 0.5 * r[1]
        out[3] = 0.5 * r[2]
        return quat_normalize(out)
    half = 0.5 * angle
    k = np.sin(half) / angle
    out[0] = np.cos(half)
    out[1] = r[0] * k
    out[2] = r[1] * k
    out[3] = r[2] * k
    return out


@njit(cache=True)
def _state_deriv(
    sigma,
    state,
    centers,
    inv_two_w2,
    pos_weights,
    ori_weights,
    amplitude,
    goal_pos,
    goal_quat,
    k_gain,
    d_gain,
    log_span,
):
    """Derivative of the packed state with respect to phase time."""
    s = np.exp(-log_span * sigma)
    d = sigma - centers
    psi = np.exp(-(d * d) * inv_two_w2)
    denom = psi.sum()
    if denom > 1e-300:
        base = psi * (s / denom)
        forcing_pos = (pos_weights @ base) * amplitude
        forcing_ori = ori_weights @ base
    else:
        forcing_pos = np.zeros(3)
        forcing_ori = np.zeros(3)

    y = state[0:3]
    z = state[3:6]
    q = state[6:10]
    eta = state[10:13]

    err = quat_log_rel(goal_quat, q)
    dq = 0.5 * quat_mul_vec(eta, q)

    out = np.empty(STATE_DIM)
    out[0:3] = z
    out[3:6] = k_gain * (goal_pos - y) - d_gain * z + forcing_pos
    out[6:10] = dq
    out[10:13] = k_gain * err - d_gain * eta + forcing_ori
    return out


@njit(cache=True)
def advance_state(
    state,
    sigma,
    dsigma,
    max_h,
    centers,
    inv_two_w2,
    pos_weights,
    ori_weights,
    amplitude,
    goal_pos,
    goal_quat,
    k_gain,
    d_gain,
    log_span,
):
    """RK4-advance the packed state through dsigma of phase time.

    Substep size is capped at max_h; the quaternion block is renormalized
    after every substep. Returns (new_state, new_sigma).
    """
    if dsigma <= 0.0:
        return state.copy(), sigma
    n_sub = int(np.ceil(dsigma / max_h))
    if n_sub < 1:
        n_sub = 1
    h = dsigma / n_sub
    st = state.copy()
    for _ in range(n_sub):
        k1 = _state_deriv(sigma, st, centers, inv_two_w2, pos_weights,
                          ori_weights, amplitude, goal_pos, goal_quat,
                          k_gain, d_gain, log_span)
        k2 = _state_deriv(sigma + 0.5 * h, st + (0.5 * h) * k1, centers,
                          inv_two_w2, pos_weights, ori_weights, amplitude,
                          goal_pos, goal_quat, k_gain, d_gain, log_span)
        k3 = _state_deriv(sigma + 0.5 * h, st + (0.5 * h) * k2, centers,
                          inv_two_w2, pos_weights, ori_weights, amplitude,
                          goal_pos, goal_quat, k_gain, d_gain, log_span)
        k4 = _state_deriv(sigma + h, st + h * k3, centers, inv_two_w2,
                          pos_weights, ori_weights, amplitude, goal_pos,
                          goal_quat, k_gain, d_gain, log_span)
        st = st + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        qn = np.sqrt(st[6] ** 2 + st[7] ** 2 + st[8] ** 2 + st[9] ** 2)
        st[6:10] /= qn
        sigma += h
    return st, sigma


@njit(cache=True)
def rollout_states(
    n_steps,
    sigma_end,
    max_h,
    centers,
    inv_two_w2,
    pos_weights,
    ori_weights,
    amplitude,
    start_pos,
    start_quat,
    goal_pos,
    goal_quat,
    k_gain,
    d_gain,
    log_span,
):
    """Integrate from rest at phase time 0 to sigma_end.

    Returns an (n_steps + 1, 13) array of states on the uniform grid.
    """
    out = np.empty((n_steps + 1, STATE_DIM))
    st = np.zeros(STATE_DIM)
    st[0:3] = start_pos
    st[6:10] = start_quat
    out[0] = st
    sigma = 0.0
    dsig = sigma_end / n_steps
    for k in range(n_steps):
        st, sigma = advance_state(
            st, sigma, dsig, max_h, centers, inv_two_w2, pos_weights,
            ori_weights, amplitude, goal_pos, goal_quat, k_gain, d_gain,
            log_span)
        out[k + 1] = st
    return out
