"""Per-item observation-propensity estimates from interaction popularity.

The estimate is ``(pop_i / max_j pop_j) ** exponent`` where ``pop_i`` counts
a given item's positive interactions; items nobody interacted with get zero
and rely on the clipping floor. Clipping keeps the inverse weights bounded.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import InteractionDataset


@dataclass(frozen=True)
class PropensityTable:
    """Per-item observation probability estimates in (0, 1] after clipping."""

    values: np.ndarray
    exponent: float
    floor: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("values must be per-item (1-d)")
        if not np.isfinite(v).all() or v.min() < 0 or v.max() > 1:
            raise ValueError("propensities must lie in [0, 1]")

    @property
    def num_items(self) -> int:
        return self.values.size

    def lookup(self, item_ids) -> np.ndarray:
        """Per-pair propensities for the given item ids."""
        items = np.asarray(item_ids)
        if items.size and (items.min() < 0 or items.max() >= self.num_items):
            raise IndexError("item id outside the propensity table")
        return self.values[items]


def estimate_popularity(train: InteractionDataset, exponent: float = 0.5) -> PropensityTable:
    """Propensity from item popularity, normalized so the most popular item
    gets exactly 1. Zero-popularity items get 0 and need :func:`clip`."""
    if len(train) == 0:
        raise ValueError("cannot estimate propensities from an empty dataset")
    pop = np.bincount(
        train.item_ids, weights=train.labels.astype(np.float64), minlength=train.num_items
    )
    top = pop.max()
    if top == 0:
        raise ValueError("no positive interactions to estimate propensities from")
    values = (pop / top) ** exponent
    zero = np.flatnonzero(pop == 0)
    if zero.size:
        shown = ", ".join(map(str, zero[:10]))
        more = f" (+{zero.size - 10} more)" if zero.size > 10 else ""
        warnings.warn(
            f"{zero.size} items have zero popularity and propensity 0 "
            f"before clipping: {shown}{more}",
            RuntimeWarning,
            stacklevel=2,
        )
    return PropensityTable(values, exponent=exponent)


def clip(table: PropensityTable, floor: float = 0.1) -> PropensityTable:
    """Raise every propensity to at least ``floor``, bounding the weights."""
    if not 0.0 < floor < 1.0:
        raise ValueError("floor must lie in (0, 1)")
    return PropensityTable(
        np.maximum(table.values, floor), exponent=table.exponent, floor=floor
    )


def uniform_baseline(num_items: int) -> PropensityTable:
    """All-ones table; the weighted risk then equals the naive risk."""
    return PropensityTable(np.ones(num_items), exponent=0.0)


def save_propensities(table: PropensityTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item", "propensity"])
        for i, v in enumerate(table.values):
            writer.writerow([i, repr(float(v))])


def load_propensities(path, exponent: float = 0.5, floor: float | None = None) -> PropensityTable:
    items = []
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["item", "propensity"]:
            raise ValueError(f"{path}: expected header 'item,propensity'")
        for row in reader:
            items.append(int(row[0]))
            values.append(float(row[1]))
    out = np.zeros(max(items) + 1 if items else 0)
    out[np.array(items, dtype=np.intp)] = values
    return PropensityTable(out, exponent=exponent, floor=floor)
