"""Independent numerical oracles shared by the test modules."""

import numpy as np
from scipy.stats import multivariate_normal


def gmr_quadrature(weights, means, covariances, phase,
                   n_grid=4001, span=20.0):
    """Conditional force mean and spread by brute-force quadrature.

    Evaluates the joint mixture density on a dense force grid at the fixed
    phase and integrates with the trapezoid rule. Independent of the
    analytic conditioning under test.
    """
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covariances, dtype=float)
    sig = np.sqrt(covs[:, 1, 1])
    lo = float(np.min(means[:, 1] - span * sig))
    hi = float(np.max(means[:, 1] + span * sig))
    f = np.linspace(lo, hi, n_grid)
    pts = np.column_stack([np.full(n_grid, phase), f])
    dens = np.zeros(n_grid)
    for w, m, c in zip(weights, means, covs):
        dens += w * multivariate_normal.pdf(pts, mean=m, cov=c)
    z = np.trapezoid(dens, f)
    mean = float(np.trapezoid(f * dens, f) / z)
    var = float(np.trapezoid((f - mean) ** 2 * dens, f) / z)
    return mean, float(np.sqrt(var))


TEST_MIXTURES = {
    1: (np.array([1.0]),
        np.array([[0.5, 6.0]]),
        np.array([[[0.03, 0.015], [0.015, 1.2]]])),
    2: (np.array([0.6, 0.4]),
        np.array([[0.3, 4.0], [0.7, 9.0]]),
        np.array([[[0.02, 0.008], [0.008, 0.9]],
                  [[0.05, -0.02], [-0.02, 1.8]]])),
    3: (np.array([0.5, 0.3, 0.2]),
        np.array([[0.2, 3.0], [0.5, 7.0], [0.85, 11.0]]),
        np.array([[[0.02, 0.005], [0.005, 0.8]],
                  [[0.04, -0.01], [-0.01, 1.5]],
                  [[0.03, 0.012], [0.012, 2.2]]])),
}
