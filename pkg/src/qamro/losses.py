"""Pairwise ranking losses, the Huber loss and their combination.

Every loss returns a :class:`LossOutput` holding the scalar value and the
exact (sub)gradient with respect to the prediction vector. At a hinge kink
the hinge is treated as inactive, i.e. its subgradient is 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .pairing import TIE_TOLERANCE, PairSet, build_pair_set, normalize_scores

RANKING_TERMS = ("qamro", "mr")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.2
    beta: float = 7.0
    fixed_margin: float = 0.5
    huber_delta: float = 1.0
    lambda_rank: float = 1.0
    scale_min: float = 1.0
    scale_max: float = 5.0
    # "qamro": adaptive margin + quality weights; "mr": fixed margin, unweighted
    ranking: str = "qamro"

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not self.fixed_margin >= 0:
            raise ValueError(f"fixed_margin must be >= 0, got {self.fixed_margin}")
        if not self.huber_delta > 0:
            raise ValueError(f"huber_delta must be > 0, got {self.huber_delta}")
        if not self.lambda_rank >= 0:
            raise ValueError(f"lambda_rank must be >= 0, got {self.lambda_rank}")
        if not self.scale_min < self.scale_max:
            raise ValueError("scale_min must be < scale_max")
        if self.ranking not in RANKING_TERMS:
            raise ValueError(f"ranking must be one of {RANKING_TERMS}, got {self.ranking!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    # set when the pair set was empty and the ranking term is undefined
    degenerate: bool = False
    huber: float | None = None
    ranking: float | None = None


def quality_weight(y_norm_i, y_norm_j, beta: float):
    """Pair weight ``1 + (beta - 1) * max(y_norm_i, y_norm_j)``.

    Accepts scalars or arrays of normalized scores in [0, 1].
    """
    if not beta >= 1:
        raise ValueError(f"beta must be >= 1, got {beta}")
    a = np.asarray(y_norm_i, dtype=np.float64)
    b = np.asarray(y_norm_j, dtype=np.float64)
    for v in (a, b):
        if np.any((v < 0) | (v > 1) | ~np.isfinite(v)):
            raise ValueError("normalized scores must lie in [0, 1]")
    w = 1.0 + (beta - 1.0) * np.maximum(a, b)
    return float(w) if w.ndim == 0 else w


def _as_vectors(y_true, y_pred):
    y = np.asarray(y_true, dtype=np.float64).ravel()
    p = np.asarray(y_pred, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ValueError(f"y_true and y_pred lengths differ: {y.shape[0]} vs {p.shape[0]}")
    return y, p


def _check_pairs(pairs: PairSet, n: int):
    if len(pairs) and (pairs.i.max() >= n or pairs.j.max() >= n or min(pairs.i.min(), pairs.j.min()) < 0):
        raise ValueError("pair set references indices outside the batch")


def _pairwise_hinge(y_pred, pairs: PairSet, margins, weights) -> LossOutput:
    n = y_pred.shape[0]
    n_pairs = len(pairs)
    if n_pairs == 0:
        return LossOutput(0.0, np.zeros(n), degenerate=True)
    s = pairs.signs
    slack = -s * (y_pred[pairs.i] - y_pred[pairs.j]) + margins
    active = slack > 0
    value = float(np.sum(weights * np.where(active, slack, 0.0)) / n_pairs)
    coef = np.where(active, weights * s, 0.0) / n_pairs
    # bincount accumulates in index order, so the reduction is deterministic
    grad = np.bincount(pairs.j, weights=coef, minlength=n) - np.bincount(
        pairs.i, weights=coef, minlength=n
    )
    return LossOutput(value, grad)


def margin_ranking_loss(y_true, y_pred, pairs: PairSet | None = None, m: float = 0.5) -> LossOutput:
    """Fixed-margin pairwise hinge averaged over the pair set."""
    if not m >= 0:
        raise ValueError(f"margin must be >= 0, got {m}")
    y, p = _as_vectors(y_true, y_pred)
    if pairs is None:
        pairs = build_pair_set(y)
    _check_pairs(pairs, p.shape[0])
    k = len(pairs)
    return _pairwise_hinge(p, pairs, np.full(k, float(m)), np.ones(k))


def qamro_loss(y_true, y_pred, pairs: PairSet | None = None, config: LossConfig | None = None) -> LossOutput:
    """Quality-weighted pairwise hinge with margin ``alpha * |y_i - y_j|``."""
    config = config or LossConfig()
    y, p = _as_vectors(y_true, y_pred)
    y_norm = normalize_scores(y, config.scale_min, config.scale_max)
    if pairs is None:
        pairs = build_pair_set(y)
    _check_pairs(pairs, p.shape[0])
    if len(pairs) == 0:
        return LossOutput(0.0, np.zeros(p.shape[0]), degenerate=True)
    q = 1.0 + (config.beta - 1.0) * np.maximum(y_norm[pairs.i], y_norm[pairs.j])
    return _pairwise_hinge(p, pairs, config.alpha * pairs.gaps, q)


def huber_loss(y_true, y_pred, delta: float = 1.0) -> LossOutput:
    """Mean Huber loss of the residuals ``y_pred - y_true``."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    y, p = _as_vectors(y_true, y_pred)
    n = y.shape[0]
    if n == 0:
        raise ValueError("huber_loss needs at least one sample")
    r = p - y
    a = np.abs(r)
    per = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return LossOutput(float(per.sum() / n), np.clip(r, -delta, delta) / n)


def ranking_loss(y_true, y_pred, pairs: PairSet | None, config: LossConfig) -> LossOutput:
    """The ranking term selected by ``config.ranking``."""
    if config.ranking == "mr":
        return margin_ranking_loss(y_true, y_pred, pairs, config.fixed_margin)
    return qamro_loss(y_true, y_pred, pairs, config)


def combined_loss(y_true, y_pred, pairs: PairSet | None = None, config: LossConfig | None = None) -> LossOutput:
    """``huber + lambda_rank * ranking``; component values are kept on the output."""
    config = config or LossConfig()
    y, p = _as_vectors(y_true, y_pred)
    if pairs is None:
        pairs = build_pair_set(y, TIE_TOLERANCE)
    hub = huber_loss(y, p, config.huber_delta)
    if config.lambda_rank == 0:
        # disabled term is reported as exactly 0, not evaluated
        return LossOutput(hub.value, hub.grad, degenerate=len(pairs) == 0, huber=hub.value, ranking=0.0)
    rank = ranking_loss(y, p, pairs, config)
    value = hub.value + config.lambda_rank * rank.value
    grad = hub.grad + config.lambda_rank * rank.grad
    return LossOutput(value, grad, degenerate=rank.degenerate, huber=hub.value, ranking=rank.value)
