"""rankcal: calibrated preference probabilities for personalized ranking.

Maps unbounded ranking scores to well-calibrated preference probabilities.
Parametric calibrators (platt, gaussian, gamma, beta) are fitted by
constrained maximum likelihood under either the naive log-loss or an
inverse-propensity-weighted loss that corrects for items users never saw;
histogram and isotonic binning are the non-parametric baselines. A synthetic
simulator with known ground truth validates the unbiasedness claims exactly.
"""

from .calibrators import (
    BinningModel,
    MONOTONE_MARGIN,
    PARAMETRIC_FAMILIES,
    ParametricParams,
    apply_model,
    check_monotone,
    fit_histogram,
    fit_isotonic,
    load_model,
    save_model,
    transform,
    transform_binned,
)
from .dataset import (
    InteractionDataset,
    ScoreTable,
    SplitConfig,
    load_interactions,
    load_scores,
    save_interactions,
    save_scores,
    split_train_validation,
)
from .fitting import (
    FitResult,
    LOSS_KINDS,
    LossSpec,
    empirical_risk,
    fit,
    uerm_bias_closed_form,
)
from .metrics import (
    MetricReport,
    ReliabilityTable,
    ece,
    mce,
    metric_report,
    ndcg_recall,
    nll,
    reliability,
)
from .propensity import (
    PropensityTable,
    clip,
    estimate_popularity,
    uniform_baseline,
)
from .ranker import MFModel, TrainConfig, score_all, train_bpr
from .synthetic import (
    SyntheticWorld,
    WorldConfig,
    WorldSample,
    exact_expected_risk,
    generate_world,
    sample_world,
    scores_from_world,
)

__version__ = "0.1.0"

__all__ = [
    "BinningModel",
    "FitResult",
    "InteractionDataset",
    "LOSS_KINDS",
    "LossSpec",
    "MetricReport",
    "MFModel",
    "MONOTONE_MARGIN",
    "PARAMETRIC_FAMILIES",
    "ParametricParams",
    "PropensityTable",
    "ReliabilityTable",
    "ScoreTable",
    "SplitConfig",
    "SyntheticWorld",
    "TrainConfig",
    "WorldConfig",
    "WorldSample",
    "apply_model",
    "check_monotone",
    "clip",
    "ece",
    "empirical_risk",
    "estimate_popularity",
    "exact_expected_risk",
    "fit",
    "fit_histogram",
    "fit_isotonic",
    "generate_world",
    "load_interactions",
    "load_model",
    "load_scores",
    "mce",
    "metric_report",
    "ndcg_recall",
    "nll",
    "reliability",
    "sample_world",
    "save_interactions",
    "save_model",
    "save_scores",
    "score_all",
    "scores_from_world",
    "split_train_validation",
    "train_bpr",
    "transform",
    "transform_binned",
    "uerm_bias_closed_form",
    "uniform_baseline",
]
