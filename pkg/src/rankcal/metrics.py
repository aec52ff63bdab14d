"""Calibration and ranking metrics.

Calibration error compares, within equi-spaced probability bins, the mean
label ("accuracy") against the mean predicted probability ("confidence").
ECE weights the per-bin gap by bin occupancy, MCE takes the worst bin, and
NLL is the clamped mean log-loss. Ranking metrics (NDCG@k, Recall@k) operate
on per-user candidate lists; any strictly increasing calibrator leaves them
unchanged because the per-user order is preserved.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .calibrators import clamp_probs

#: Default bin counts: error metrics use 15 bins, diagrams 10.
DEFAULT_ERROR_BINS = 15
DEFAULT_DIAGRAM_BINS = 10


@dataclass(frozen=True)
class ReliabilityTable:
    """Per-bin occupancy, accuracy, confidence, and gap over [0, 1].

    Bins are half-open ``[(m-1)/M, m/M)`` with the last bin closed at 1.
    Empty bins carry NaN statistics and are excluded from aggregate metrics.
    In two-sided mode the accuracy of bins centered below 0.5 is the
    proportion of *negative* samples, which is the reading some reliability
    diagrams use for the negative range; error metrics never use this mode.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray
    gap: np.ndarray
    two_sided: bool = False

    @property
    def num_bins(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["bin_lo", "bin_hi", "count", "accuracy", "confidence", "gap"])
        for m in range(self.num_bins):
            if self.counts[m] == 0:
                acc = conf = gap = ""
            else:
                acc = repr(float(self.accuracy[m]))
                conf = repr(float(self.confidence[m]))
                gap = repr(float(self.gap[m]))
            writer.writerow(
                [
                    repr(float(self.bin_edges[m])),
                    repr(float(self.bin_edges[m + 1])),
                    int(self.counts[m]),
                    acc,
                    conf,
                    gap,
                ]
            )
        return buf.getvalue()


def _check_probs_labels(probs, labels):
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0 or p.shape != y.shape or p.ndim != 1:
        raise ValueError("probs and labels must be non-empty and aligned")
    if not np.isfinite(p).all() or p.min() < 0 or p.max() > 1:
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.isfinite(y).all() or y.min() < 0 or y.max() > 1:
        raise ValueError("labels must lie in [0, 1]")
    return p, y


def reliability(probs, labels, num_bins: int = DEFAULT_DIAGRAM_BINS, two_sided: bool = False) -> ReliabilityTable:
    """Bin predictions into ``num_bins`` equi-spaced probability bins.

    Labels are normally binary; values in [0, 1] are accepted so exact
    per-pair preference probabilities can stand in for labels on synthetic
    data.
    """
    p, y = _check_probs_labels(probs, labels)
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    idx = np.minimum(np.floor(p * num_bins).astype(np.intp), num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins)
    with np.errstate(invalid="ignore"):
        conf = np.bincount(idx, weights=p, minlength=num_bins) / counts
        acc = np.bincount(idx, weights=y, minlength=num_bins) / counts
    edges = np.arange(num_bins + 1) / num_bins
    if two_sided:
        centers = (edges[:-1] + edges[1:]) / 2.0
        acc = np.where(centers < 0.5, 1.0 - acc, acc)
    gap = np.abs(acc - conf)
    return ReliabilityTable(edges, counts, acc, conf, gap, two_sided=two_sided)


def ece(probs, labels, num_bins: int = DEFAULT_ERROR_BINS) -> float:
    """Expected calibration error: occupancy-weighted mean per-bin gap."""
    table = reliability(probs, labels, num_bins)
    filled = table.counts > 0
    weights = table.counts[filled] / table.total
    return float(np.sum(weights * table.gap[filled]))


def mce(probs, labels, num_bins: int = DEFAULT_ERROR_BINS) -> float:
    """Maximum calibration error: worst per-bin gap among non-empty bins."""
    table = reliability(probs, labels, num_bins)
    filled = table.counts > 0
    return float(np.max(table.gap[filled]))


def nll(probs, labels) -> float:
    """Mean negative log-likelihood with the standard probability clamp."""
    p, y = _check_probs_labels(probs, labels)
    pc = clamp_probs(p)
    return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))


def ndcg_recall(user_ids, item_ids, values, labels, ks) -> tuple[dict[int, float], dict[int, float]]:
    """NDCG@k and Recall@k over per-user candidate lists.

    ``values`` rank each user's candidate items (higher first, ties broken
    by input order); ``labels`` mark the relevant candidates. Users without
    any relevant candidate are skipped. Recall divides by the user's total
    number of relevant candidates; NDCG uses binary gains with the ideal DCG
    truncated at that number.
    """
    users = np.asarray(user_ids)
    items = np.asarray(item_ids)
    vals = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if not (users.shape == items.shape == vals.shape == y.shape) or users.size == 0:
        raise ValueError("candidate arrays must be non-empty and aligned")
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive")
    discounts = 1.0 / np.log2(np.arange(2, max(ks) + 2))
    ndcg_sums = {k: 0.0 for k in ks}
    recall_sums = {k: 0.0 for k in ks}
    kept = 0
    order = np.argsort(users, kind="stable")
    boundaries = np.flatnonzero(np.diff(users[order])) + 1
    for group in np.split(order, boundaries):
        rel = y[group]
        npos = int(np.sum(rel == 1))
        if npos == 0:
            continue
        kept += 1
        ranked = rel[np.argsort(-vals[group], kind="stable")]
        for k in ks:
            top = ranked[:k]
            hits = np.flatnonzero(top == 1)
            dcg = float(np.sum(discounts[hits]))
            idcg = float(np.sum(discounts[: min(k, npos)]))
            ndcg_sums[k] += dcg / idcg
            recall_sums[k] += hits.size / npos
    if kept == 0:
        raise ValueError("no user has a relevant candidate")
    return (
        {k: ndcg_sums[k] / kept for k in ks},
        {k: recall_sums[k] / kept for k in ks},
    )


@dataclass(frozen=True)
class MetricReport:
    """Bundle of calibration metrics plus optional ranking metrics."""

    ece: float
    mce: float
    nll: float
    num_bins: int
    n: int
    ndcg_at: dict[int, float] | None = None
    recall_at: dict[int, float] | None = None

    def to_dict(self) -> dict:
        d = {
            "ece": self.ece,
            "mce": self.mce,
            "nll": self.nll,
            "num_bins": self.num_bins,
            "n": self.n,
        }
        if self.ndcg_at is not None:
            d["ndcg_at"] = {str(k): v for k, v in sorted(self.ndcg_at.items())}
        if self.recall_at is not None:
            d["recall_at"] = {str(k): v for k, v in sorted(self.recall_at.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"


def metric_report(probs, labels, num_bins: int = DEFAULT_ERROR_BINS) -> MetricReport:
    p, y = _check_probs_labels(probs, labels)
    return MetricReport(
        ece=ece(p, y, num_bins),
        mce=mce(p, y, num_bins),
        nll=nll(p, y),
        num_bins=num_bins,
        n=p.size,
    )


def reliability_svg(table: ReliabilityTable, width: int = 520, height: int = 360) -> str:
    """Minimal standalone SVG reliability diagram: accuracy and confidence
    bars per bin plus the diagonal ideal line. Empty bins draw no bars."""
    pad = 40
    plot_w = width - 2 * pad
    plot_h = height - 2 * pad

    def sx(v: float) -> float:
        return pad + v * plot_w

    def sy(v: float) -> float:
        return height - pad - v * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{pad}" y="{pad}" width="{plot_w}" height="{plot_h}" '
        'fill="white" stroke="black"/>',
        f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(1):.1f}" y2="{sy(1):.1f}" '
        'stroke="grey" stroke-dasharray="4,4"/>',
    ]
    m = table.num_bins
    for i in range(m):
        if table.counts[i] == 0:
            continue
        lo = float(table.bin_edges[i])
        bw = plot_w / m
        acc_h = float(table.accuracy[i])
        conf_h = float(table.confidence[i])
        parts.append(
            f'<rect x="{sx(lo):.1f}" y="{sy(acc_h):.1f}" width="{bw * 0.45:.1f}" '
            f'height="{plot_h * acc_h:.1f}" fill="steelblue"/>'
        )
        parts.append(
            f'<rect x="{sx(lo) + bw * 0.45:.1f}" y="{sy(conf_h):.1f}" '
            f'width="{bw * 0.45:.1f}" height="{plot_h * conf_h:.1f}" fill="salmon"/>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
        'font-size="12">predicted probability</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
