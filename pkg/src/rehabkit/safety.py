"""Force-aware safety supervision.

A calibration pass records the force magnitudes a patient produces over
the course of the exercise. A Gaussian mixture over (phase, force)
summarizes that baseline; its conditional along phase gives an expected
force and spread at every point of the motion. During execution each
tick's measured force is checked against a corridor of n_sigma around the
conditional mean; leaving the corridor triggers a reversal along the
exact poses already traversed, a dwell back inside the corridor resumes
the exercise from where it was interrupted, and reversal past the start
parks the session in a hold.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .motion import Pose

DEFAULT_N_SIGMA = 5.0
DEFAULT_DWELL_TICKS = 30
DEFAULT_SIGMA_FLOOR_N = 0.05
PRUNE_WEIGHT = 1e-4
COV_EIG_FLOOR = 1e-8

MODE_FORWARD = "FORWARD"
MODE_REVERSING = "REVERSING"
MODE_HOLD = "HOLD_AT_START"


class CalibrationError(ValueError):
    """Calibration data unusable for a baseline model."""


@dataclass(frozen=True)
class ForceSample:
    """One calibration observation: clock phase and force magnitude (N)."""

    phase: float
    force_n: float

    def __post_init__(self):
        if not (0.0 < self.phase <= 1.0):
            raise ValueError(f"phase must be in (0, 1], got {self.phase}")
        if not np.isfinite(self.force_n) or self.force_n < 0.0:
            raise ValueError("force magnitude must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class GmrModel:
    """Gaussian mixture over (phase, force magnitude).

    weights sum to 1; every covariance is symmetric positive definite.
    """

    weights: np.ndarray      # (k,)
    means: np.ndarray        # (k, 2)
    covariances: np.ndarray  # (k, 2, 2)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1).copy()
        k = w.shape[0]
        m = np.asarray(self.means, dtype=float).reshape(k, 2).copy()
        c = np.asarray(self.covariances, dtype=float).reshape(k, 2, 2).copy()
        if k < 1:
            raise ValueError("mixture needs at least one component")
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        for j in range(k):
            if not np.allclose(c[j], c[j].T, atol=1e-12):
                raise ValueError(f"covariance {j} not symmetric")
            eig = np.linalg.eigvalsh(c[j])
            if eig.min() < COV_EIG_FLOOR * 0.99:
                raise ValueError(
                    f"covariance {j} has eigenvalue {eig.min():.3e} below floor")
        for a in (w, m, c):
            a.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


def acquire_baseline(mode: str, rollouts) -> list[ForceSample]:
    """Pool (phase, |force|) observations from calibration runs.

    mode selects the calibration style the runs were recorded under
    ("passive" for therapist-driven guidance with the patient relaxed,
    "active" for gravity-supported patient-driven motion); the pooling
    itself is identical. rollouts is an iterable of simulation traces.
    """
    if mode not in ("passive", "active"):
        raise ValueError("mode must be 'passive' or 'active'")
    samples: list[ForceSample] = []
    n_traces = 0
    for trace in rollouts:
        n_traces += 1
        force = np.linalg.norm(
            np.column_stack([trace.column("force_x"),
                             trace.column("force_y"),
                             trace.column("force_z")]), axis=1)
        phase = trace.column("phase")
        for s, f in zip(phase, force):
            if 0.0 < s <= 1.0:
                samples.append(ForceSample(float(s), float(f)))
    if n_traces == 0 or not samples:
        raise CalibrationError("no calibration rollouts provided")
    return samples


def _log_gauss2(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of 2-D Gaussians, vectorized over rows of x."""
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    d = x - mean
    quad = (d @ inv * d).sum(axis=1)
    return -0.5 * (quad + np.log(det) + 2.0 * np.log(2.0 * np.pi))


def _regularize(cov: np.ndarray) -> np.ndarray:
    """Lift eigenvalues to the SPD floor only when needed."""
    cov = 0.5 * (cov + cov.T)
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < COV_EIG_FLOOR:
        cov = cov + (COV_EIG_FLOOR - eig.min() + 1e-12) * np.eye(2)
    return cov


def _kmeans_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style center selection on standardized data."""
    n = x.shape[0]
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    z = x / scale
    centers = [z[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((z - c) ** 2, axis=1) for c in centers], axis=0)
        tot = d2.sum()
        if tot <= 0.0:
            centers.append(z[rng.integers(n)])
            continue
        centers.append(z[np.searchsorted(np.cumsum(d2 / tot),
                                         rng.random())])
    return np.array(centers) * scale


def fit_gmm(samples, n_components: int = 5, seed: int = 0,
            max_iter: int = 500, tol: float = 1e-7) -> GmrModel:
    """Expectation-maximization fit of the (phase, force) mixture.

    Deterministic for a given seed. The mean per-sample log-likelihood is
    asserted non-decreasing every iteration; components whose weight
    collapses below 1e-4 are pruned with a warning and the fit continues
    with the reduced mixture.
    """
    x = np.array([[s.phase, s.force_n] for s in samples], dtype=float)
    n = x.shape[0]
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n < 10 * n_components:
        raise CalibrationError(
            f"{n} samples cannot support {n_components} components "
            f"(need {10 * n_components})")

    rng = np.random.default_rng(seed)
    means = _kmeans_seed(x, n_components, rng)
    # Initial responsibilities from nearest seed center
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    k = n_components
    weights = np.empty(k)
    covs = np.empty((k, 2, 2))
    base_cov = _regularize(np.cov(x.T, bias=True) + 1e-6 * np.eye(2))
    for j in range(k):
        mask = labels == j
        weights[j] = max(mask.sum(), 1.0) / n
        if mask.sum() >= 2:
            means[j] = x[mask].mean(axis=0)
            covs[j] = _regularize(np.cov(x[mask].T, bias=True))
        else:
            covs[j] = base_cov
    weights = weights / weights.sum()

    prev_ll = -np.inf
    for _ in range(max_iter):
        # E step
        log_p = np.empty((n, k))
        for j in range(k):
            log_p[:, j] = np.log(weights[j]) + _log_gauss2(x, means[j], covs[j])
        m = log_p.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_p - m).sum(axis=1))
        ll = float(log_norm.mean())
        if ll < prev_ll - 1e-9:
            raise RuntimeError(
                f"EM log-likelihood decreased ({prev_ll} -> {ll})")
        resp = np.exp(log_p - log_norm[:, None])

        # M step
        nk = resp.sum(axis=0)
        new_weights = nk / n
        if np.any(new_weights < PRUNE_WEIGHT) and k > 1:
            keep = new_weights >= PRUNE_WEIGHT
            dropped = int((~keep).sum())
            warnings.warn(
                f"pruned {dropped} degenerate mixture component(s) "
                f"with weight < {PRUNE_WEIGHT}", RuntimeWarning)
            k = int(keep.sum())
            weights = new_weights[keep] / new_weights[keep].sum()
            means = means[keep]
            covs = covs[keep]
            prev_ll = -np.inf  # mixture changed; restart the monotone check
            continue
        weights = new_weights
        for j in range(k):
            r = resp[:, j]
            means[j] = (r[:, None] * x).sum(axis=0) / nk[j]
            d = x - means[j]
            covs[j] = _regularize((r[:, None] * d).T @ d / nk[j])
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            prev_ll = ll
            break
        prev_ll = ll

    return GmrModel(weights, means, covs)


def gmm_responsibilities(model: GmrModel, samples) -> np.ndarray:
    """Posterior component responsibilities for each sample, (n, k)."""
    x = np.array([[s.phase, s.force_n] for s in samples], dtype=float)
    k = model.n_components
    log_p = np.empty((x.shape[0], k))
    for j in range(k):
        log_p[:, j] = np.log(model.weights[j]) + _log_gauss2(
            x, model.means[j], model.covariances[j])
    m = log_p.max(axis=1, keepdims=True)
    p = np.exp(log_p - m)
    return p / p.sum(axis=1, keepdims=True)


def gmr_predict(model: GmrModel, phase: float,
                sigma_floor_n: float = DEFAULT_SIGMA_FLOOR_N):
    """Conditional force distribution at a phase: (mean_n, sigma_n).

    Standard mixture conditioning: responsibilities from the phase
    marginal, per-component conditional means and variances, plus the
    cross-component spread. The returned sigma is floored (default 0.05 N)
    so corridors never collapse; pass 0 to disable the floor.
    """
    if not (0.0 < phase <= 1.0):
        raise ValueError(f"phase must be in (0, 1], got {phase}")
    w = model.weights
    mu = model.means
    cov = model.covariances
    var_s = cov[:, 0, 0]
    log_h = np.log(w) - 0.5 * ((phase - mu[:, 0]) ** 2 / var_s
                               + np.log(var_s) + np.log(2.0 * np.pi))
    log_h -= log_h.max()
    h = np.exp(log_h)
    h /= h.sum()

    cond_mean = mu[:, 1] + cov[:, 0, 1] / var_s * (phase - mu[:, 0])
    cond_var = cov[:, 1, 1] - cov[:, 0, 1] ** 2 / var_s

    mean = float(h @ cond_mean)
    var = float(h @ (cond_var + cond_mean ** 2) - mean ** 2)
    var = max(var, 0.0)
    sigma = max(np.sqrt(var), float(sigma_floor_n))
    return mean, sigma


def corridor_check(force_n: float, mean_n: float, sigma_n: float,
                   n_sigma: float = DEFAULT_N_SIGMA) -> bool:
    """True when the force sits inside the corridor (boundary inclusive)."""
    return abs(force_n - mean_n) <= n_sigma * sigma_n


@dataclass(frozen=True, eq=False)
class BufferEntry:
    """One traversed tick: clock phase, commanded pose, controller snapshot."""

    phase: float
    pose: Pose
    snapshot: object = None


@dataclass(frozen=True, eq=False)
class Directive:
    """What the supervisor wants this tick.

    kind FORWARD: proceed normally (resume_snapshot set on the resume tick).
    kind REVERSE_TO: command the attached pose, controller frozen.
    kind HOLD: park at the attached pose (start of the buffer).
    """

    kind: str
    pose: Pose | None = None
    resume_snapshot: object = None


@dataclass(frozen=True, eq=False)
class SafetyState:
    """Supervisor state between ticks (immutable, like the controller's)."""

    mode: str = MODE_FORWARD
    buffer: tuple = ()
    cursor: int = 0
    dwell_count: int = 0
    reverse_debt_m: float = 0.0
    n_sigma: float = DEFAULT_N_SIGMA
    dwell_ticks: int = DEFAULT_DWELL_TICKS
    reverse_speed_mps: float = 0.1


def init_safety(n_sigma: float = DEFAULT_N_SIGMA,
                dwell_ticks: int = DEFAULT_DWELL_TICKS,
                reverse_speed_mps: float = 0.1) -> SafetyState:
    if n_sigma <= 0.0 or dwell_ticks < 1 or reverse_speed_mps <= 0.0:
        raise ValueError("invalid safety settings")
    return SafetyState(n_sigma=n_sigma, dwell_ticks=dwell_ticks,
                       reverse_speed_mps=reverse_speed_mps)


def safety_step(state: SafetyState, in_corridor: bool,
                current: BufferEntry | None, dt: float):
    """Advance the supervisor one tick.

    Forward ticks append `current` to the traversed buffer. A violation
    switches to reversal, walking the buffer backward at the configured
    pace; every reversal pose is an exact element of the buffer (whole
    entries, never interpolated). A full dwell back inside the corridor
    resumes from the cursor entry, handing its snapshot back to the
    caller; reversing past the first entry parks in hold-at-start, which
    resumes the same way after a dwell. Returns (state', Directive).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    if state.mode == MODE_FORWARD:
        if in_corridor:
            if current is None:
                raise ValueError("forward tick needs the current entry")
            new = dataclasses.replace(
                state, buffer=state.buffer + (current,),
                cursor=len(state.buffer), dwell_count=0, reverse_debt_m=0.0)
            return new, Directive(MODE_FORWARD)
        if not state.buffer:
            # Violated before any motion: park at start, nothing to reverse
            new = dataclasses.replace(state, mode=MODE_HOLD, cursor=0,
                                      dwell_count=0)
            return new, Directive("HOLD", pose=None)
        cursor = len(state.buffer) - 1
        new = dataclasses.replace(state, mode=MODE_REVERSING, cursor=cursor,
                                  dwell_count=0, reverse_debt_m=0.0)
        return new, Directive("REVERSE_TO", pose=state.buffer[cursor].pose)

    dwell = state.dwell_count + 1 if in_corridor else 0
    if dwell >= state.dwell_ticks:
        if not state.buffer:
            # Violated before any motion was recorded: restart fresh
            new = dataclasses.replace(state, mode=MODE_FORWARD,
                                      dwell_count=0, reverse_debt_m=0.0)
            return new, Directive(MODE_FORWARD)
        entry = state.buffer[state.cursor]
        new = dataclasses.replace(
            state, mode=MODE_FORWARD, dwell_count=0, reverse_debt_m=0.0,
            buffer=state.buffer[:state.cursor + 1], cursor=state.cursor)
        return new, Directive(MODE_FORWARD, pose=entry.pose,
                              resume_snapshot=entry.snapshot)

    if state.mode == MODE_REVERSING:
        budget = state.reverse_debt_m + state.reverse_speed_mps * dt
        cursor = state.cursor
        buf = state.buffer
        while cursor > 0:
            gap = float(np.linalg.norm(
                buf[cursor].pose.position - buf[cursor - 1].pose.position))
            if gap > budget:
                break
            budget -= gap
            cursor -= 1
        if cursor == 0:
            new = dataclasses.replace(state, mode=MODE_HOLD, cursor=0,
                                      dwell_count=dwell, reverse_debt_m=0.0)
            return new, Directive("HOLD", pose=buf[0].pose)
        new = dataclasses.replace(state, cursor=cursor, dwell_count=dwell,
                                  reverse_debt_m=budget)
        return new, Directive("REVERSE_TO", pose=buf[cursor].pose)

    # HOLD_AT_START: stay parked, counting dwell
    pose = state.buffer[0].pose if state.buffer else None
    new = dataclasses.replace(state, dwell_count=dwell)
    return new, Directive("HOLD", pose=pose)
