"""Generative simulator with known per-pair ground truth.

Each pair carries a true preference probability and each item a true
observation probability; an interaction happens exactly when a pair is both
observed and preferred, the two being independent coin flips. Because the
ground truth is known, risks can be computed in exact expectation (the
expectation over interactions is taken analytically per pair), which turns
statements about the propensity-weighted risk into machine-checkable
identities instead of Monte Carlo estimates.

Randomness comes from named child streams of one seed, in a fixed order
(item base preference, user shift, per-pair preference, item observation,
score noise), so a world regenerates identically from (config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .calibrators import ParametricParams, clamp_probs, logit, sigmoid, transform
from .dataset import InteractionDataset, ScoreTable
from .fitting import risk_from_targets

_STREAMS = ("item_base", "user_shift", "pair", "omega", "score_noise")
_SAMPLE_TAG = 0x5EED


@dataclass(frozen=True)
class WorldConfig:
    """Knobs of the generative model.

    Preference: each item draws a base rate from a Beta with mean
    ``mean_prefer``; each user shifts it on the logit scale; each pair then
    draws its own probability from a Beta around the shifted rate.
    Observation: per-item, ``observe_min + (observe_max - observe_min) * u**observe_skew``
    with u uniform, so most items are rarely exposed (popularity skew).
    """

    num_users: int
    num_items: int
    mean_prefer: float = 0.1
    item_concentration: float = 4.0
    pair_concentration: float = 30.0
    user_shift_sd: float = 0.25
    observe_min: float = 0.02
    observe_max: float = 0.8
    observe_skew: float = 3.0
    score_noise_sd: float = 1.0

    def __post_init__(self):
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("need at least one user and one item")
        if not 0.0 < self.mean_prefer < 1.0:
            raise ValueError("mean_prefer must lie in (0, 1)")
        if not 0.0 < self.observe_min <= self.observe_max <= 1.0:
            raise ValueError("need 0 < observe_min <= observe_max <= 1")
        if self.score_noise_sd < 0:
            raise ValueError("score_noise_sd must be non-negative")
        if min(self.item_concentration, self.pair_concentration) <= 0:
            raise ValueError("concentrations must be positive")
        if self.user_shift_sd < 0:
            raise ValueError("user_shift_sd must be non-negative")


@dataclass(frozen=True)
class SyntheticWorld:
    """Ground truth: per-pair preference and per-item observation probabilities."""

    config: WorldConfig
    seed: int
    prefer_probs: np.ndarray  # (num_users, num_items)
    observe_probs: np.ndarray  # (num_items,)

    @property
    def num_users(self) -> int:
        return self.config.num_users

    @property
    def num_items(self) -> int:
        return self.config.num_items

    @property
    def num_pairs(self) -> int:
        return self.num_users * self.num_items

    def pair_ids(self) -> tuple[np.ndarray, np.ndarray]:
        """User/item ids in the canonical user-major pair order used by all
        flattened per-pair arrays here."""
        users = np.repeat(np.arange(self.num_users, dtype=np.intp), self.num_items)
        items = np.tile(np.arange(self.num_items, dtype=np.intp), self.num_users)
        return users, items

    def observe_probs_per_pair(self) -> np.ndarray:
        return np.tile(self.observe_probs, self.num_users)


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def generate_world(config: WorldConfig, seed: int) -> SyntheticWorld:
    """Draw a world; identical (config, seed) always gives identical output."""
    rngs = _streams(seed)
    m = config.mean_prefer
    kappa = config.item_concentration
    base = rngs["item_base"].beta(kappa * m, kappa * (1.0 - m), size=config.num_items)
    base = np.clip(base, 1e-4, 1.0 - 1e-4)
    shift = rngs["user_shift"].normal(0.0, config.user_shift_sd, size=config.num_users)
    mu = sigmoid(logit(base)[None, :] + shift[:, None])
    mu = np.clip(mu, 1e-4, 1.0 - 1e-4)
    kp = config.pair_concentration
    prefer = rngs["pair"].beta(kp * mu, kp * (1.0 - mu))
    u = rngs["omega"].uniform(size=config.num_items)
    observe = config.observe_min + (config.observe_max - config.observe_min) * (
        u**config.observe_skew
    )
    return SyntheticWorld(
        config=config,
        seed=seed,
        prefer_probs=prefer,
        observe_probs=observe,
    )


@dataclass(frozen=True)
class WorldSample:
    """One realization: per-pair observation, preference, and interaction flags.

    ``interacted`` is elementwise ``observed * preferred``; the two factor
    variables are drawn independently per pair.
    """

    world: SyntheticWorld
    observed: np.ndarray
    preferred: np.ndarray

    @property
    def interacted(self) -> np.ndarray:
        return self.observed * self.preferred


def sample_world(world: SyntheticWorld, replicate: int = 0) -> WorldSample:
    """Draw one sample; ``replicate`` indexes independent replications."""
    rng = np.random.default_rng(
        np.random.SeedSequence([world.seed, _SAMPLE_TAG, replicate])
    )
    shape = (world.num_users, world.num_items)
    observed = (rng.random(size=shape) < world.observe_probs[None, :]).astype(np.uint8)
    preferred = (rng.random(size=shape) < world.prefer_probs).astype(np.uint8)
    return WorldSample(world=world, observed=observed, preferred=preferred)


def interaction_dataset(sample: WorldSample, role: str = "train") -> InteractionDataset:
    """All pairs with the interaction flag as label."""
    users, items = sample.world.pair_ids()
    return InteractionDataset(
        num_users=sample.world.num_users,
        num_items=sample.world.num_items,
        user_ids=users,
        item_ids=items,
        labels=sample.interacted.ravel(),
        role=role,
    )


def preference_dataset(sample: WorldSample) -> InteractionDataset:
    """All pairs with the preference flag as label (exposure-free test set)."""
    users, items = sample.world.pair_ids()
    return InteractionDataset(
        num_users=sample.world.num_users,
        num_items=sample.world.num_items,
        user_ids=users,
        item_ids=items,
        labels=sample.preferred.ravel(),
        role="test_unbiased",
    )


def scores_from_world(world: SyntheticWorld) -> ScoreTable:
    """Scores as logit(preference) plus Gaussian noise.

    At zero noise the true preference probability given the score is exactly
    sigmoid(score), a closed form for validating fitted calibrators.
    """
    rng = np.random.default_rng(np.random.SeedSequence(world.seed).spawn(5)[4])
    base = logit(clamp_probs(world.prefer_probs))
    if world.config.score_noise_sd > 0:
        base = base + rng.normal(0.0, world.config.score_noise_sd, size=base.shape)
    users, items = world.pair_ids()
    return ScoreTable(users, items, base.ravel())


def exact_expected_risk(
    params: ParametricParams,
    world: SyntheticWorld,
    est_propensities: np.ndarray | None = None,
    kind: str = "uerm",
) -> float:
    """Risk in exact expectation over the interaction process.

    The expectation over each pair's interaction flag is taken analytically
    (its mean is observe * prefer), so no sampling is involved:

    * ``ideal`` — soft-label risk on the true preference probabilities.
    * ``uerm``  — expected propensity-weighted risk with the given per-item
      estimates; equals the ideal risk when the estimates are the true
      observation probabilities.
    * ``naive`` — expected unweighted risk on interaction labels.
    """
    scores = scores_from_world(world).scores
    g = transform(params, scores)
    rho = world.prefer_probs.ravel()
    if kind == "ideal":
        targets = rho
    elif kind == "naive":
        targets = world.observe_probs_per_pair() * rho
    elif kind == "uerm":
        if est_propensities is None:
            raise ValueError("uerm needs per-item propensity estimates")
        om_hat = np.asarray(est_propensities, dtype=np.float64)
        if om_hat.shape != (world.num_items,):
            raise ValueError("propensity estimates must be per-item")
        if np.any(om_hat == 0):
            raise ValueError("propensity estimates must be nonzero")
        targets = (world.observe_probs_per_pair() * rho) / np.tile(
            om_hat, world.num_users
        )
    else:
        raise ValueError(f"unknown risk kind {kind!r}")
    return risk_from_targets(targets, g)


def save_ground_truth(world: SyntheticWorld, rho_path, omega_path) -> None:
    """Sidecar CSVs with the per-pair and per-item ground truth."""
    users, items = world.pair_ids()
    flat = world.prefer_probs.ravel()
    with open(rho_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "item", "rho"])
        for u, i, r in zip(users, items, flat):
            writer.writerow([int(u), int(i), repr(float(r))])
    with open(omega_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item", "omega"])
        for i, w in enumerate(world.observe_probs):
            writer.writerow([i, repr(float(w))])


def world_config_dict(world: SyntheticWorld) -> dict:
    return {"seed": world.seed, **asdict(world.config)}
