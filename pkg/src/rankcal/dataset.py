"""Implicit-feedback interaction data and ranking-score tables.

Interactions are (user, item, label) records with dense integer ids; raw ids
from input files are re-indexed at load time and the raw<->dense maps are
kept on the dataset (and can be persisted as JSON) so hot loops can index
arrays directly. Datasets are immutable after load and safe to share across
workers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

ROLES = ("train", "validation", "test_unbiased")


class DatasetError(ValueError):
    """Base class for malformed interaction data."""


class EmptyDatasetError(DatasetError):
    pass


class MalformedRowError(DatasetError):
    pass


class DuplicatePairError(DatasetError):
    pass


class InvalidFractionError(DatasetError):
    pass


@dataclass(frozen=True)
class InteractionDataset:
    """Sparse (user, item, label) records over dense id ranges.

    A ``test_unbiased`` dataset is read as observing preferences directly
    (every listed pair was exposed), so its labels are preference labels
    rather than interaction labels.
    """

    num_users: int
    num_items: int
    user_ids: np.ndarray
    item_ids: np.ndarray
    labels: np.ndarray
    role: str = "train"
    raw_user_ids: tuple[str, ...] | None = None
    raw_item_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        u = np.asarray(self.user_ids, dtype=np.intp)
        i = np.asarray(self.item_ids, dtype=np.intp)
        y = np.asarray(self.labels, dtype=np.uint8)
        object.__setattr__(self, "user_ids", u)
        object.__setattr__(self, "item_ids", i)
        object.__setattr__(self, "labels", y)
        if not (u.shape == i.shape == y.shape) or u.ndim != 1:
            raise DatasetError("record arrays must be 1-d and aligned")
        if self.role not in ROLES:
            raise DatasetError(f"unknown role {self.role!r}")
        if u.size:
            if u.min() < 0 or u.max() >= self.num_users:
                raise DatasetError("user id outside [0, num_users)")
            if i.min() < 0 or i.max() >= self.num_items:
                raise DatasetError("item id outside [0, num_items)")
            if np.any(np.asarray(self.labels) > 1):
                raise DatasetError("labels must be 0 or 1")
            keys = u.astype(np.int64) * self.num_items + i
            if np.unique(keys).size != keys.size:
                raise DuplicatePairError("duplicate (user, item) pair")

    def __len__(self) -> int:
        return self.user_ids.size

    @property
    def num_positives(self) -> int:
        return int(self.labels.sum())

    def subset(self, indices, role: str | None = None) -> "InteractionDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return replace(
            self,
            user_ids=self.user_ids[idx],
            item_ids=self.item_ids[idx],
            labels=self.labels[idx],
            role=role or self.role,
        )


@dataclass(frozen=True)
class SplitConfig:
    """Record-level held-out split: fraction in (0, 1), deterministic seed."""

    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidFractionError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )


def split_train_validation(
    d: InteractionDataset, cfg: SplitConfig
) -> tuple[InteractionDataset, InteractionDataset]:
    """Disjoint record-level partition, uniform over records.

    The validation part has ``round(fraction * len(d))`` records; identical
    inputs always produce identical partitions.
    """
    if d.role != "train":
        raise DatasetError("can only split a train dataset")
    n = len(d)
    n_val = int(round(cfg.validation_fraction * n))
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return d.subset(train_idx), d.subset(val_idx, role="validation")


def _open_rows(path, fmt: str):
    delim = {"csv": ",", "tsv": "\t"}.get(fmt)
    if delim is None:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, newline="") as fh:
        yield from csv.reader(fh, delimiter=delim)


def load_interactions(
    path,
    fmt: str = "csv",
    rating_threshold: float = 4.0,
    binary: bool = False,
    role: str = "train",
) -> InteractionDataset:
    """Load `user,item,value` rows, re-indexing ids densely.

    With ``binary=True`` the value column must already be a 0/1 label;
    otherwise it is a rating and labels are ``value >= rating_threshold``
    (default 4, i.e. ratings over 3 count as positive). Dense ids follow
    first-appearance order; the raw ids are kept on the returned dataset.
    """
    rows = _open_rows(path, fmt)
    header = next(rows, None)
    if header is None:
        raise EmptyDatasetError(f"{path}: file is empty")
    if [h.strip().lower() for h in header] != ["user", "item", "value"]:
        raise MalformedRowError(f"{path}:1: expected header 'user,item,value'")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users: list[int] = []
    items: list[int] = []
    labels: list[int] = []
    seen: set[tuple[int, int]] = set()
    for lineno, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise MalformedRowError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        raw_u, raw_i, raw_v = (f.strip() for f in row)
        try:
            value = float(raw_v)
        except ValueError as err:
            raise MalformedRowError(f"{path}:{lineno}: bad value {raw_v!r}") from err
        if binary:
            if value not in (0.0, 1.0):
                raise MalformedRowError(f"{path}:{lineno}: binary value must be 0 or 1")
            label = int(value)
        else:
            label = int(value >= rating_threshold)
        u = user_index.setdefault(raw_u, len(user_index))
        i = item_index.setdefault(raw_i, len(item_index))
        if (u, i) in seen:
            raise DuplicatePairError(f"{path}:{lineno}: duplicate pair ({raw_u}, {raw_i})")
        seen.add((u, i))
        users.append(u)
        items.append(i)
        labels.append(label)
    if not users:
        raise EmptyDatasetError(f"{path}: no records")
    return InteractionDataset(
        num_users=len(user_index),
        num_items=len(item_index),
        user_ids=np.array(users, dtype=np.intp),
        item_ids=np.array(items, dtype=np.intp),
        labels=np.array(labels, dtype=np.uint8),
        role=role,
        raw_user_ids=tuple(user_index),
        raw_item_ids=tuple(item_index),
    )


def save_interactions(d: InteractionDataset, path, fmt: str = "csv") -> None:
    """Write records as `user,item,value` with binary labels as the value.

    Raw ids are written when the dataset carries them, so a load after a
    save reproduces the same records and id maps.
    """
    delim = {"csv": ",", "tsv": "\t"}[fmt]
    raw_u = d.raw_user_ids
    raw_i = d.raw_item_ids
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim)
        writer.writerow(["user", "item", "value"])
        for u, i, y in zip(d.user_ids, d.item_ids, d.labels):
            out_u = raw_u[u] if raw_u is not None else int(u)
            out_i = raw_i[i] if raw_i is not None else int(i)
            writer.writerow([out_u, out_i, int(y)])


def save_id_map(d: InteractionDataset, path) -> None:
    """Persist the raw->dense id maps (dense index = list position)."""
    if d.raw_user_ids is None or d.raw_item_ids is None:
        raise DatasetError("dataset carries no raw id maps")
    payload = {"users": list(d.raw_user_ids), "items": list(d.raw_item_ids)}
    Path(path).write_text(json.dumps(payload) + "\n")


def load_id_map(path) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text())


@dataclass(frozen=True)
class ScoreTable:
    """Per-(user, item) ranking scores with their global min/max."""

    user_ids: np.ndarray
    item_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.user_ids, dtype=np.intp)
        i = np.asarray(self.item_ids, dtype=np.intp)
        s = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "user_ids", u)
        object.__setattr__(self, "item_ids", i)
        object.__setattr__(self, "scores", s)
        if not (u.shape == i.shape == s.shape) or u.ndim != 1 or u.size == 0:
            raise ValueError("score table needs aligned, non-empty entries")
        if not np.isfinite(s).all():
            raise ValueError("scores must be finite")

    def __len__(self) -> int:
        return self.scores.size

    @property
    def s_min(self) -> float:
        return float(self.scores.min())

    @property
    def s_max(self) -> float:
        return float(self.scores.max())

    def lookup(self, user_ids, item_ids) -> np.ndarray:
        """Scores for the given pairs; every pair must be present."""
        index = getattr(self, "_index", None)
        if index is None:
            index = {
                (int(u), int(i)): k
                for k, (u, i) in enumerate(zip(self.user_ids, self.item_ids))
            }
            object.__setattr__(self, "_index", index)
        users = np.asarray(user_ids)
        items = np.asarray(item_ids)
        out = np.empty(users.size, dtype=np.float64)
        for k, (u, i) in enumerate(zip(users, items)):
            key = (int(u), int(i))
            if key not in index:
                raise KeyError(f"no score for pair {key}")
            out[k] = self.scores[index[key]]
        return out


def save_scores(table: ScoreTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "item", "score"])
        for u, i, s in zip(table.user_ids, table.item_ids, table.scores):
            writer.writerow([int(u), int(i), repr(float(s))])


def load_scores(path) -> ScoreTable:
    users: list[int] = []
    items: list[int] = []
    scores: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user", "item", "score"]:
            raise ValueError(f"{path}: expected header 'user,item,score'")
        for row in reader:
            users.append(int(row[0]))
            items.append(int(row[1]))
            scores.append(float(row[2]))
    return ScoreTable(
        np.array(users, dtype=np.intp),
        np.array(items, dtype=np.intp),
        np.array(scores, dtype=np.float64),
    )
