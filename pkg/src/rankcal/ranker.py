"""Minimal matrix-factorization ranker trained with a pairwise logistic loss.

The model scores a pair by the dot product of its user and item embeddings.
Training does SGD over (positive, sampled-negative) pairs: each observed
positive is matched with items drawn uniformly from those not known positive
for that user, and the loss is -log sigmoid(score(u, i) - score(u, j)).
Desk-scale and deterministic: a fixed seed reproduces embeddings bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibrators import sigmoid
from .dataset import InteractionDataset, ScoreTable


@dataclass(frozen=True)
class TrainConfig:
    embedding_dim: int = 16
    learning_rate: float = 0.001
    weight_decay: float = 0.001
    negatives_per_positive: int = 1
    epochs: int = 10
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        for name in (
            "embedding_dim",
            "learning_rate",
            "weight_decay",
            "negatives_per_positive",
            "epochs",
            "batch_size",
        ):
            if getattr(self, name) <= 0 and name != "weight_decay":
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass(frozen=True)
class MFModel:
    """User/item embedding matrices; score(u, i) = e_u . e_i."""

    user_embeddings: np.ndarray
    item_embeddings: np.ndarray
    epoch_losses: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ue = np.asarray(self.user_embeddings, dtype=np.float64)
        ie = np.asarray(self.item_embeddings, dtype=np.float64)
        object.__setattr__(self, "user_embeddings", ue)
        object.__setattr__(self, "item_embeddings", ie)
        if ue.ndim != 2 or ie.ndim != 2 or ue.shape[1] != ie.shape[1]:
            raise ValueError("embedding matrices must share one latent dimension")
        if not (np.isfinite(ue).all() and np.isfinite(ie).all()):
            raise ValueError("embeddings must be finite")

    @property
    def num_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.user_embeddings.shape[1]

    def score(self, user_ids, item_ids) -> np.ndarray:
        u = np.asarray(user_ids, dtype=np.intp)
        i = np.asarray(item_ids, dtype=np.intp)
        if u.size and (u.min() < 0 or u.max() >= self.num_users):
            raise IndexError("user id outside the model")
        if i.size and (i.min() < 0 or i.max() >= self.num_items):
            raise IndexError("item id outside the model")
        return np.einsum("nd,nd->n", self.user_embeddings[u], self.item_embeddings[i])


def pairwise_loss(score_diffs) -> np.ndarray:
    """-log sigmoid(x) per positive/negative score difference."""
    x = np.asarray(score_diffs, dtype=np.float64)
    return np.logaddexp(0.0, -x)


def pairwise_loss_grad(score_diffs) -> np.ndarray:
    """d/dx of -log sigmoid(x), i.e. -sigmoid(-x); equals -0.5 at x = 0."""
    x = np.asarray(score_diffs, dtype=np.float64)
    return -np.atleast_1d(sigmoid(-x))


def _sample_negatives(rng, user_ids, pos_sets, num_items, per_positive):
    """Uniform negatives among items not known positive for each user."""
    n = user_ids.size * per_positive
    users = np.repeat(user_ids, per_positive)
    neg = rng.integers(0, num_items, size=n)
    bad = np.array([neg[k] in pos_sets[users[k]] for k in range(n)])
    while bad.any():
        idx = np.flatnonzero(bad)
        neg[idx] = rng.integers(0, num_items, size=idx.size)
        bad[idx] = [neg[k] in pos_sets[users[k]] for k in idx]
    return users, neg


def train_bpr(train: InteractionDataset, cfg: TrainConfig) -> MFModel:
    """SGD on the pairwise logistic objective over sampled pairs.

    Raises if the data has no positives (no pairs can be formed) or if the
    loss diverges to non-finite values.
    """
    pos_mask = train.labels == 1
    pos_users = train.user_ids[pos_mask]
    pos_items = train.item_ids[pos_mask]
    if pos_users.size == 0:
        raise ValueError("training data has no positive interactions")
    pos_sets: dict[int, set[int]] = {}
    for u, i in zip(pos_users, pos_items):
        pos_sets.setdefault(int(u), set()).add(int(i))
    for u in range(train.num_users):
        pos_sets.setdefault(u, set())
    full_users = {u for u, s in pos_sets.items() if len(s) >= train.num_items}
    if full_users:
        raise ValueError("some users are positive on every item; cannot sample negatives")

    rng = np.random.default_rng(cfg.seed)
    d = cfg.embedding_dim
    ue = rng.uniform(-0.01, 0.01, size=(train.num_users, d))
    ie = rng.uniform(-0.01, 0.01, size=(train.num_items, d))

    # fixed evaluation negatives give a deterministic per-epoch loss curve
    eval_users, eval_neg = _sample_negatives(
        rng, pos_users, pos_sets, train.num_items, 1
    )

    def epoch_loss() -> float:
        diffs = np.einsum(
            "nd,nd->n", ue[eval_users], ie[pos_items] - ie[eval_neg]
        )
        return float(np.mean(pairwise_loss(diffs)))

    losses = [epoch_loss()]
    lr = cfg.learning_rate
    wd = cfg.weight_decay
    for _ in range(cfg.epochs):
        order = rng.permutation(pos_users.size)
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            bu_pos = pos_users[batch]
            bi = pos_items[batch]
            bu, bj = _sample_negatives(
                rng, bu_pos, pos_sets, train.num_items, cfg.negatives_per_positive
            )
            bi_rep = np.repeat(bi, cfg.negatives_per_positive)
            eu = ue[bu]
            ei = ie[bi_rep]
            ej = ie[bj]
            x = np.einsum("nd,nd->n", eu, ei - ej)
            coef = pairwise_loss_grad(x)[:, None]
            gu = coef * (ei - ej) + wd * eu
            gi = coef * eu + wd * ei
            gj = -coef * eu + wd * ej
            np.add.at(ue, bu, -lr * gu)
            np.add.at(ie, bi_rep, -lr * gi)
            np.add.at(ie, bj, -lr * gj)
        if not (np.isfinite(ue).all() and np.isfinite(ie).all()):
            raise RuntimeError("training diverged: non-finite embeddings")
        losses.append(epoch_loss())
    return MFModel(ue, ie, epoch_losses=tuple(losses))


def score_all(model: MFModel, user_ids, item_ids) -> ScoreTable:
    """Score the given pairs; pure function of the model."""
    u = np.asarray(user_ids, dtype=np.intp)
    i = np.asarray(item_ids, dtype=np.intp)
    return ScoreTable(u, i, model.score(u, i))


def save_checkpoint(model: MFModel, path) -> None:
    payload = {
        "dim": model.dim,
        "num_users": model.num_users,
        "num_items": model.num_items,
        "user_embeddings": model.user_embeddings.tolist(),
        "item_embeddings": model.item_embeddings.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path) -> MFModel:
    payload = json.loads(Path(path).read_text())
    model = MFModel(
        np.array(payload["user_embeddings"], dtype=np.float64),
        np.array(payload["item_embeddings"], dtype=np.float64),
    )
    if model.dim != payload["dim"] or model.num_users != payload["num_users"]:
        raise ValueError(f"{path}: dims header disagrees with matrix shapes")
    return model
