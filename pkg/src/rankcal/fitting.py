"""Constrained maximum-likelihood fitting of the parametric calibrators.

Three risks are supported, all means of a per-pair log-loss on the calibrated
probability g:

* ``naive``  — binary log-loss on the observed interaction labels. Treats
  every unobserved pair as a negative, so it targets the interaction
  probability rather than the preference probability.
* ``ideal``  — soft-label log-loss on the true preference probabilities
  (synthetic data only, where those are known).
* ``uerm``   — inverse-propensity-weighted log-loss: labels are reweighted
  by 1/propensity, which makes the risk's expectation over the observation
  process equal to the ideal risk when the propensities are exact.

Fitting minimizes the chosen risk over the family coefficients subject to
the linear endpoint constraints that keep the calibrator strictly
increasing on the score range.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .calibrators import (
    MONOTONE_MARGIN,
    PARAMETRIC_FAMILIES,
    PROB_FLOOR,
    ParametricParams,
    _features,
    check_monotone,
    clamp_probs,
    constraint_rows,
    model_to_dict,
    sigmoid,
    transform,
)

LOSS_KINDS = ("naive", "ideal", "uerm")

# Constraints are imposed slightly inside the public margin so that boundary
# solutions still pass check_monotone despite optimizer tolerance.
_FIT_MARGIN = 1.01 * MONOTONE_MARGIN


@dataclass(frozen=True)
class LossSpec:
    """Which risk to minimize, plus the per-pair side information it needs.

    ``propensities`` (observation probabilities in (0, 1], required for
    ``uerm``) and ``true_preferences`` (preference probabilities in [0, 1],
    required for ``ideal``) are arrays aligned with the score/label arrays
    passed to :func:`empirical_risk` or :func:`fit`.
    """

    kind: str
    propensities: np.ndarray | None = None
    true_preferences: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.propensities is not None:
            w = np.asarray(self.propensities, dtype=np.float64)
            if w.size and (not np.isfinite(w).all() or w.min() <= 0 or w.max() > 1):
                raise ValueError("propensities must lie in (0, 1]")
            object.__setattr__(self, "propensities", w)
        if self.true_preferences is not None:
            r = np.asarray(self.true_preferences, dtype=np.float64)
            if r.size and (not np.isfinite(r).all() or r.min() < 0 or r.max() > 1):
                raise ValueError("true preferences must lie in [0, 1]")
            object.__setattr__(self, "true_preferences", r)
        if self.kind == "uerm" and self.propensities is None:
            raise ValueError("uerm needs propensities")
        if self.kind == "ideal" and self.true_preferences is None:
            raise ValueError("ideal needs true preferences")


def _targets(spec: LossSpec, labels, n: int) -> np.ndarray:
    """Per-pair soft targets t; the risk is mean(-t log g - (1-t) log(1-g))."""
    if spec.kind == "ideal":
        r = spec.true_preferences
        if r.shape != (n,):
            raise ValueError("true_preferences must align with the pairs")
        return r
    if labels is None:
        raise ValueError(f"{spec.kind} loss needs labels")
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError("labels must align with the scores")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("labels must be binary")
    if spec.kind == "naive":
        return y
    w = spec.propensities
    if w.shape != (n,):
        raise ValueError("missing propensity for some pair")
    return y / w


def risk_from_targets(targets: np.ndarray, probs: np.ndarray) -> float:
    """Mean log-loss against soft targets, with the standard probability clamp."""
    g = clamp_probs(np.asarray(probs, dtype=np.float64))
    t = np.asarray(targets, dtype=np.float64)
    return float(np.mean(-(t * np.log(g) + (1.0 - t) * np.log1p(-g))))


def empirical_risk(params: ParametricParams, scores, labels, spec: LossSpec) -> float:
    """Risk of a fixed calibrator on validation pairs under the chosen loss."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("need at least one pair")
    t = _targets(spec, labels, s.size)
    return risk_from_targets(t, transform(params, s))


def uerm_bias_closed_form(params, scores, prefer_probs, obs_probs, est_propensities):
    """Exact bias of the propensity-weighted risk under misestimated propensities.

    Returns ``mean(rho * (omega/omega_hat - 1) * log((1-g)/g))`` over the
    pairs, where rho/omega are the true preference/observation probabilities
    and omega_hat the estimates used in the weighted risk. Note the ratio
    orientation: a calibrator with g < 0.5 everywhere makes the log factor
    positive, so underestimated propensities (omega/omega_hat > 1) inflate
    the weighted risk above the ideal risk. Zero when the propensities are
    exact.
    """
    s = np.asarray(scores, dtype=np.float64)
    rho = np.asarray(prefer_probs, dtype=np.float64)
    omega = np.asarray(obs_probs, dtype=np.float64)
    omega_hat = np.asarray(est_propensities, dtype=np.float64)
    if np.any(omega_hat == 0):
        raise ValueError("estimated propensities must be nonzero")
    g = clamp_probs(transform(params, s))
    log_ratio = np.log1p(-g) - np.log(g)
    return float(np.mean(rho * (omega / omega_hat - 1.0) * log_ratio))


@dataclass
class FitResult:
    """Outcome of a constrained fit."""

    params: ParametricParams
    final_risk: float
    iterations: int
    converged: bool
    active_constraints: list[str]
    history: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "params": model_to_dict(self.params),
            "final_risk": self.final_risk,
            "iterations": self.iterations,
            "converged": self.converged,
            "active_constraints": list(self.active_constraints),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def project_feasible(theta, rows, margin_pad: float = 0.0, passes: int = 200):
    """Cyclic projection of (a, b, c) onto the constraint half-planes."""
    theta = np.asarray(theta, dtype=np.float64).copy()
    for _ in range(passes):
        ok = True
        for _, coefs, bound in rows:
            slack = float(coefs @ theta) - (bound + margin_pad)
            if slack < 0:
                theta += (-slack / float(coefs @ coefs)) * coefs
                ok = False
        if ok:
            break
    return theta


PROB_CLAMP_BOUNDS = (PROB_FLOOR, 1.0 - PROB_FLOOR)


def _risk_and_grad(theta, X, t):
    """Clamped log-loss risk and its exact gradient in the coefficients."""
    z = X @ theta
    g = sigmoid(z)
    lo, hi = PROB_CLAMP_BOUNDS
    gc = np.clip(g, lo, hi)
    risk = np.mean(-(t * np.log(gc) + (1.0 - t) * np.log1p(-gc)))
    # d/dz of the clamped loss: the log terms go flat where the clamp binds
    dz = np.where(g > lo, -t * (g * (1.0 - g)) / gc, 0.0)
    dz += np.where(g < hi, (1.0 - t) * (g * (1.0 - g)) / (1.0 - gc), 0.0)
    grad = X.T @ dz / X.shape[0]
    return float(risk), grad


def fit(
    family: str,
    scores,
    labels,
    spec: LossSpec,
    init: ParametricParams | None = None,
    score_range: tuple[float, float] | None = None,
    max_iter: int = 500,
    tol: float = 1e-9,
) -> FitResult:
    """Fit one parametric family by constrained risk minimization.

    ``score_range`` sets the interval over which monotonicity is enforced;
    it is widened to cover the fit scores, and should span every score the
    calibrator will later be applied to (for example the union of the
    validation and test ranges). Deterministic given data and init.
    """
    if family not in PARAMETRIC_FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-d array")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    if np.unique(s).size < 3:
        raise ValueError("need at least 3 distinct score values")
    t = _targets(spec, labels, s.size)

    lo, hi = (float(s.min()), float(s.max()))
    if score_range is not None:
        lo = min(lo, float(score_range[0]))
        hi = max(hi, float(score_range[1]))

    shift = 0.0
    floor = 0.0
    if family == "gamma":
        delta = max(1e-6, 1e-3 * (hi - lo))
        shift = lo - delta
        floor = delta

    rows = constraint_rows(family, lo, hi, shift=shift, floor=floor, margin=_FIT_MARGIN)
    A = np.stack([coefs for _, coefs, _ in rows])
    bounds = np.array([bound for _, _, bound in rows])

    if init is None:
        theta0 = np.array([0.0, 1.0, 0.0])
    else:
        theta0 = np.array([init.a, init.b, init.c])
    theta0 = project_feasible(theta0, rows)
    if family == "platt":
        theta0[0] = 0.0

    def build(theta) -> ParametricParams:
        a = 0.0 if family == "platt" else float(theta[0])
        return ParametricParams(
            family, a, float(theta[1]), float(theta[2]), shift=shift, floor=floor
        )

    X = _features(build(theta0), s)
    if family == "platt":
        X = X[:, 1:]
        A_opt = A[:, 1:]
        theta_opt0 = theta0[1:]
    else:
        A_opt = A
        theta_opt0 = theta0

    def objective(theta):
        return _risk_and_grad(theta, X, t)

    history: list[tuple[int, float, float]] = []

    def callback(theta):
        risk, _ = _risk_and_grad(theta, X, t)
        slack = float(np.min(A_opt @ theta - bounds))
        history.append((len(history) + 1, risk, slack))

    res = minimize(
        objective,
        theta_opt0,
        jac=True,
        method="SLSQP",
        constraints=[
            {"type": "ineq", "fun": lambda th: A_opt @ th - bounds, "jac": lambda th: A_opt}
        ],
        options={"maxiter": max_iter, "ftol": tol},
        callback=callback,
    )

    theta_opt = np.asarray(res.x, dtype=np.float64)
    # safety net: optimizer tolerance may leave a hair of infeasibility
    if np.min(A_opt @ theta_opt - bounds) < 0:
        full = np.concatenate(([0.0], theta_opt)) if family == "platt" else theta_opt
        full = project_feasible(full, rows)
        theta_opt = full[1:] if family == "platt" else full

    theta_full = np.concatenate(([0.0], theta_opt)) if family == "platt" else theta_opt
    params = build(theta_full)
    slacks = A_opt @ theta_opt - bounds
    active = [rows[i][0] for i in range(len(rows)) if slacks[i] <= 1e-8]

    g = transform(params, s)
    clamped = np.mean((g < PROB_CLAMP_BOUNDS[0]) | (g > PROB_CLAMP_BOUNDS[1]))
    if clamped > 0.01:
        warnings.warn(
            f"{clamped:.1%} of calibrated probabilities sit at the loss clamp; "
            "the fitted risk is dominated by the clamp there",
            RuntimeWarning,
            stacklevel=2,
        )

    final_risk = risk_from_targets(t, g)
    converged = bool(res.success)
    if not check_monotone(params, lo, hi):
        raise RuntimeError("fit returned non-monotone parameters")  # pragma: no cover
    return FitResult(
        params=params,
        final_risk=final_risk,
        iterations=int(res.nit),
        converged=converged,
        active_constraints=active,
        history=history,
    )


def fit_log_csv(result: FitResult) -> str:
    """Fit history as CSV text: iteration, risk, minimum constraint slack."""
    lines = ["iteration,risk,constraint_slack"]
    for it, risk, slack in result.history:
        lines.append(f"{it},{risk!r},{slack!r}")
    return "\n".join(lines) + "\n"
