"""Calibration maps from ranking scores to preference probabilities.

Two kinds of calibrator live here. Parametric families apply a sigmoid to an
affine (platt), quadratic (gaussian), log-linear (gamma), or beta-style
feature map of the score; linear endpoint constraints on the coefficients
keep each map strictly increasing over the score range, so calibration never
reorders a ranked list. Binning models (histogram, isotonic) are the
non-parametric baselines: a step function over score bins.

Fitted models are immutable and ``transform`` / ``transform_binned`` are pure
functions, safe for data-parallel application.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARAMETRIC_FAMILIES = ("platt", "gaussian", "gamma", "beta")
BINNING_KINDS = ("histogram", "isotonic")

#: Margin that turns the strict monotonicity inequalities into a closed
#: feasible set, so the constrained optimizer has an attainable optimum.
MONOTONE_MARGIN = 1e-6

#: Probability clamp applied inside loss computations only; reported
#: probabilities are not clamped to this range.
PROB_FLOOR = 1e-7

_TINY = np.finfo(np.float64).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def logit(p):
    """Inverse of the logistic function."""
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def clamp_probs(p, floor: float = PROB_FLOOR):
    """Clamp probabilities away from {0, 1} for log-loss stability."""
    return np.clip(p, floor, 1.0 - floor)


@dataclass(frozen=True)
class ParametricParams:
    """Coefficients of a sigmoid-family calibration map.

    ``a``, ``b``, ``c`` weight the per-family feature map (``a`` is fixed to
    zero for platt). ``shift`` and ``floor`` apply to gamma only: scores
    enter the log as ``max(s - shift, floor)`` so the log stays finite for
    scores at or below the fitted minimum. ``input_squash`` applies to beta
    only: scores are squashed through the logistic first, since the beta map
    needs inputs in (0, 1).
    """

    family: str
    a: float
    b: float
    c: float
    shift: float = 0.0
    floor: float = 0.0
    input_squash: bool = True

    def __post_init__(self):
        if self.family not in PARAMETRIC_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for name in ("a", "b", "c", "shift", "floor"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite parameter {name}")
        if self.family == "platt" and self.a != 0.0:
            raise ValueError("platt fixes a = 0")
        if self.family == "gamma" and self.floor <= 0.0:
            raise ValueError("gamma needs a positive score floor")


def _features(params: ParametricParams, s: np.ndarray) -> np.ndarray:
    """Design matrix with columns weighted by (a, b, c)."""
    n = s.shape[0]
    X = np.empty((n, 3), dtype=np.float64)
    X[:, 2] = 1.0
    fam = params.family
    if fam == "platt":
        X[:, 0] = 0.0
        X[:, 1] = s
    elif fam == "gaussian":
        X[:, 0] = s * s
        X[:, 1] = s
    elif fam == "gamma":
        shifted = np.maximum(s - params.shift, params.floor)
        X[:, 0] = np.log(shifted)
        X[:, 1] = shifted
    else:  # beta
        if params.input_squash:
            # log(sigmoid(s)) and -log(1 - sigmoid(s)) without round-trip loss
            X[:, 0] = -np.logaddexp(0.0, -s)
            X[:, 1] = np.logaddexp(0.0, s)
        else:
            u = np.clip(s, PROB_FLOOR, 1.0 - PROB_FLOOR)
            X[:, 0] = np.log(u)
            X[:, 1] = -np.log1p(-u)
    return X


def transform(params: ParametricParams, scores):
    """Map ranking scores to preference probabilities, strictly inside (0, 1).

    Accepts a scalar or an array; pure function of its arguments.
    """
    s = np.asarray(scores, dtype=np.float64)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    z = _features(params, s) @ np.array([params.a, params.b, params.c])
    p = np.clip(sigmoid(z), _TINY, _BELOW_ONE)
    return float(p[0]) if scalar else p


def constraint_rows(
    family: str,
    s_min: float,
    s_max: float,
    shift: float = 0.0,
    floor: float = 0.0,
    margin: float = MONOTONE_MARGIN,
) -> list[tuple[str, np.ndarray, float]]:
    """Linear constraints keeping a family strictly increasing on [s_min, s_max].

    Each row is ``(name, coefficients over (a, b, c), lower bound)`` meaning
    ``coefficients @ (a, b, c) >= lower bound``. The derivative of every
    family's inner map is linear (gaussian: 2as+b) or monotone (gamma: a/s'+b)
    in the score, so positivity at the two endpoints is equivalent to
    positivity on the whole interval. For beta the derivative factor is
    a(1-u)+bu with u in (0,1), positive whenever a, b >= 0 and a+b > 0.
    """
    if s_min > s_max:
        raise ValueError("s_min must not exceed s_max")
    if family == "platt":
        return [("slope", np.array([0.0, 1.0, 0.0]), margin)]
    if family == "gaussian":
        return [
            ("left_endpoint", np.array([2.0 * s_min, 1.0, 0.0]), margin),
            ("right_endpoint", np.array([2.0 * s_max, 1.0, 0.0]), margin),
        ]
    if family == "gamma":
        lo = max(s_min - shift, floor)
        hi = max(s_max - shift, floor)
        if lo <= 0.0 or hi <= 0.0:
            raise ValueError("gamma shifted scores must be positive")
        return [
            ("left_endpoint", np.array([1.0 / lo, 1.0, 0.0]), margin),
            ("right_endpoint", np.array([1.0 / hi, 1.0, 0.0]), margin),
        ]
    if family == "beta":
        return [
            ("a_nonnegative", np.array([1.0, 0.0, 0.0]), 0.0),
            ("b_nonnegative", np.array([0.0, 1.0, 0.0]), 0.0),
            ("strictness", np.array([1.0, 1.0, 0.0]), margin),
        ]
    raise ValueError(f"unknown family {family!r}")


def check_monotone(params: ParametricParams, s_min: float, s_max: float) -> bool:
    """True iff the family's endpoint constraints hold with the standard margin."""
    theta = np.array([params.a, params.b, params.c])
    rows = constraint_rows(
        params.family, s_min, s_max, shift=params.shift, floor=params.floor
    )
    return all(float(coefs @ theta) >= bound for _, coefs, bound in rows)


@dataclass(frozen=True)
class BinningModel:
    """Step-function calibrator: ascending bin edges and one value per bin."""

    kind: str
    bin_edges: np.ndarray
    bin_values: np.ndarray

    def __post_init__(self):
        if self.kind not in BINNING_KINDS:
            raise ValueError(f"unknown binning kind {self.kind!r}")
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        values = np.asarray(self.bin_values, dtype=np.float64)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_values", values)
        if edges.ndim != 1 or values.ndim != 1 or edges.size != values.size + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("bin edges must be strictly ascending")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("bin values must lie in [0, 1]")
        if self.kind == "isotonic" and np.any(np.diff(values) < 0):
            raise ValueError("isotonic bin values must be non-decreasing")


def _bin_index(edges: np.ndarray, s: np.ndarray) -> np.ndarray:
    # half-open bins [e_k, e_{k+1}); values on an edge fall in the right bin;
    # out-of-range scores clamp to the first/last bin
    idx = np.searchsorted(edges, s, side="right") - 1
    return np.clip(idx, 0, edges.size - 2)


def fit_histogram(scores, labels_or_weights, num_bins: int) -> BinningModel:
    """Equi-width histogram binning over the observed score range.

    Each bin's value is the mean of the labels (or weights) falling in it,
    clamped to [0, 1]; empty bins inherit the nearest non-empty bin's value
    (ties broken toward the left).
    """
    s = np.asarray(scores, dtype=np.float64)
    w = np.asarray(labels_or_weights, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot fit on an empty sample")
    if s.shape != w.shape:
        raise ValueError("scores and labels must have equal length")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        hi = lo + 1.0  # degenerate constant-score input gets one unit-width bin
    edges = np.linspace(lo, hi, num_bins + 1)
    idx = _bin_index(edges, s)
    counts = np.bincount(idx, minlength=num_bins)
    sums = np.bincount(idx, weights=w, minlength=num_bins)
    values = np.zeros(num_bins)
    filled = np.flatnonzero(counts > 0)
    values[filled] = sums[filled] / counts[filled]
    for j in np.flatnonzero(counts == 0):
        nearest = filled[np.argmin(np.abs(filled - j))]
        values[j] = values[nearest]
    return BinningModel("histogram", edges, np.clip(values, 0.0, 1.0))


def _pava(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pool adjacent violators; returns block means and block lengths."""
    means: list[float] = []
    wsum: list[float] = []
    sizes: list[int] = []
    for v, w in zip(values, weights):
        means.append(float(v))
        wsum.append(float(w))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            v1, w1, n1 = means.pop(), wsum.pop(), sizes.pop()
            total = wsum[-1] + w1
            means[-1] = (means[-1] * wsum[-1] + v1 * w1) / total
            wsum[-1] = total
            sizes[-1] += n1
    return np.array(means), np.array(sizes, dtype=np.intp)


def fit_isotonic(scores, labels_or_weights) -> BinningModel:
    """Isotonic regression: the non-decreasing step function closest in
    squared error to the labels taken in score order.

    Tied scores are pre-pooled (weighted by multiplicity), which is the exact
    least-squares treatment since the fit must be constant on equal scores.
    Output values are clamped to [0, 1].
    """
    s = np.asarray(scores, dtype=np.float64)
    w = np.asarray(labels_or_weights, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot fit on an empty sample")
    if s.shape != w.shape:
        raise ValueError("scores and labels must have equal length")
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    means = np.bincount(inverse, weights=w) / counts
    block_vals, block_sizes = _pava(means, counts.astype(np.float64))
    block_vals = np.clip(block_vals, 0.0, 1.0)
    if uniq.size == 1:
        edges = np.array([uniq[0], uniq[0] + 1.0])
        return BinningModel("isotonic", edges, block_vals)
    # block boundaries sit midway between the adjacent unique scores
    ends = np.cumsum(block_sizes)  # index one past each block's last unique score
    inner = (uniq[ends[:-1] - 1] + uniq[ends[:-1]]) / 2.0
    edges = np.concatenate(([uniq[0]], inner, [uniq[-1]]))
    return BinningModel("isotonic", edges, block_vals)


def transform_binned(model: BinningModel, scores):
    """Value of the bin containing each score; out-of-range scores clamp to
    the first/last bin."""
    s = np.asarray(scores, dtype=np.float64)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    out = model.bin_values[_bin_index(model.bin_edges, s)]
    return float(out[0]) if scalar else out


def model_to_dict(model) -> dict:
    """JSON-ready dict for either model kind; unused fields are omitted."""
    if isinstance(model, ParametricParams):
        d = {"family": model.family, "a": model.a, "b": model.b, "c": model.c}
        if model.family == "gamma":
            d["shift"] = model.shift
            d["floor"] = model.floor
        if model.family == "beta":
            d["input_squash"] = model.input_squash
        return d
    if isinstance(model, BinningModel):
        return {
            "family": model.kind,
            "edges": model.bin_edges.tolist(),
            "values": model.bin_values.tolist(),
        }
    raise TypeError(f"not a calibrator model: {type(model).__name__}")


def model_from_dict(d: dict):
    family = d["family"]
    if family in PARAMETRIC_FAMILIES:
        kwargs = dict(a=float(d.get("a", 0.0)), b=float(d["b"]), c=float(d["c"]))
        if family == "gamma":
            kwargs["shift"] = float(d["shift"])
            kwargs["floor"] = float(d["floor"])
        if family == "beta":
            kwargs["input_squash"] = bool(d.get("input_squash", True))
        return ParametricParams(family=family, **kwargs)
    if family in BINNING_KINDS:
        return BinningModel(family, np.asarray(d["edges"]), np.asarray(d["values"]))
    raise ValueError(f"unknown family {family!r}")


def apply_model(model, scores):
    """Dispatch to ``transform`` or ``transform_binned``."""
    if isinstance(model, ParametricParams):
        return transform(model, scores)
    return transform_binned(model, scores)


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
