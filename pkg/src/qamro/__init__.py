"""Quality-aware adaptive-margin ranking losses for MOS prediction."""

__version__ = "0.1.0"

from .estimator import QAMRORegressor
from .losses import (LossConfig, LossOutput, combined_loss, huber_loss, margin_ranking_loss,
                     qamro_loss, quality_weight)
from .metrics import ktau, lcc, mse, srcc
from .pairing import PairSet, build_pair_set, normalize_scores

__all__ = [
    "LossConfig", "LossOutput", "PairSet", "QAMRORegressor", "build_pair_set",
    "combined_loss", "huber_loss", "ktau", "lcc", "margin_ranking_loss", "mse",
    "normalize_scores", "qamro_loss", "quality_weight", "srcc",
]
