"""Shared generators for the test suite.

These build inputs with known closed-form answers: class-conditional score
models whose posterior is available analytically, and random coefficient
vectors projected into the monotone-feasible region of each family.
"""

import numpy as np

from rankcal.calibrators import ParametricParams, constraint_rows
from rankcal.fitting import project_feasible


def two_gaussian_scores(n, mu0, sd0, mu1, sd1, pi1, rng, upper=None):
    """Scores from two Gaussian class-conditionals with positive rate pi1.

    The posterior P(y=1 | s) is sigmoid(a s^2 + b s + c) with
    a = 1/(2 sd0^2) - 1/(2 sd1^2), b = mu1/sd1^2 - mu0/sd0^2.
    ``upper`` rejection-restricts scores to s <= upper, which leaves the
    posterior unchanged (both class densities are cut by the same rule).
    """
    ys = []
    ss = []
    remaining = n
    while remaining > 0:
        y = (rng.random(remaining) < pi1).astype(np.uint8)
        s = np.where(y == 1, rng.normal(mu1, sd1, remaining), rng.normal(mu0, sd0, remaining))
        if upper is not None:
            keep = s <= upper
            y, s = y[keep], s[keep]
        ys.append(y)
        ss.append(s)
        remaining -= s.size
    y = np.concatenate(ys)[:n]
    s = np.concatenate(ss)[:n]
    return s, y


def two_gaussian_posterior_coefs(mu0, sd0, mu1, sd1, pi1):
    a = 1.0 / (2 * sd0**2) - 1.0 / (2 * sd1**2)
    b = mu1 / sd1**2 - mu0 / sd0**2
    c = (
        mu0**2 / (2 * sd0**2)
        - mu1**2 / (2 * sd1**2)
        + np.log((pi1 * sd0) / ((1 - pi1) * sd1))
    )
    return a, b, c


def two_exponential_scores(n, rate0, rate1, pi1, rng):
    """Scores from two exponential class-conditionals on s >= 0.

    The posterior is sigmoid(b s + c) with b = rate0 - rate1 and
    c = log(pi1 * rate1 / ((1 - pi1) * rate0)).
    """
    y = (rng.random(n) < pi1).astype(np.uint8)
    s = np.where(
        y == 1,
        rng.exponential(1.0 / rate1, n),
        rng.exponential(1.0 / rate0, n),
    )
    return s, y


def random_feasible_params(family, s_min, s_max, rng, scale=1.0):
    """Random coefficients projected into the family's monotone region."""
    theta = rng.normal(0.0, scale, size=3)
    shift = 0.0
    floor = 0.0
    if family == "gamma":
        delta = max(1e-6, 1e-3 * (s_max - s_min))
        shift = s_min - delta
        floor = delta
    rows = constraint_rows(family, s_min, s_max, shift=shift, floor=floor)
    theta = project_feasible(theta, rows, margin_pad=1e-8)
    if family == "platt":
        theta[0] = 0.0
    return ParametricParams(
        family, float(theta[0]), float(theta[1]), float(theta[2]), shift=shift, floor=floor
    )
