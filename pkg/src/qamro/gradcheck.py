"""Analytic-vs-finite-difference gradient verification for the losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossConfig, combined_loss, huber_loss, margin_ranking_loss, qamro_loss
from .pairing import build_pair_set

LOSS_NAMES = ("mr", "qamro", "huber", "combined")
KINK_DISTANCE = 1e-3


def central_difference(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + step
        hi = f(x)
        x[k] = orig - step
        lo = f(x)
        x[k] = orig
        g[k] = (hi - lo) / (2 * step)
    return g


def relative_error(analytic, numeric, floor=1e-8) -> float:
    a = np.asarray(analytic)
    b = np.asarray(numeric)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


@dataclass
class Trial:
    y_true: np.ndarray
    y_pred: np.ndarray
    config: LossConfig


@dataclass
class GradCheckReport:
    loss: str
    trials: int
    tolerance: float
    max_rel_error: float = 0.0
    failures: list[tuple[float, Trial]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def loss_fn(name: str, y_true, config: LossConfig):
    """``y_pred -> LossOutput`` closure for one of :data:`LOSS_NAMES`."""
    pairs = build_pair_set(y_true)
    if name == "mr":
        return lambda p: margin_ranking_loss(y_true, p, pairs, config.fixed_margin)
    if name == "qamro":
        return lambda p: qamro_loss(y_true, p, pairs, config)
    if name == "huber":
        return lambda p: huber_loss(y_true, p, config.huber_delta)
    if name == "combined":
        return lambda p: combined_loss(y_true, p, pairs, config)
    raise ValueError(f"unknown loss {name!r}; choose from {LOSS_NAMES}")


def _near_kink(name, y_true, y_pred, config, pairs, dist) -> bool:
    if name in ("huber", "combined"):
        if np.any(np.abs(np.abs(y_pred - y_true) - config.huber_delta) < dist):
            return True
    if name in ("mr", "qamro", "combined") and len(pairs):
        use_mr = name == "mr" or (name == "combined" and config.ranking == "mr")
        margins = np.full(len(pairs), config.fixed_margin) if use_mr else config.alpha * pairs.gaps
        slack = -pairs.signs * (y_pred[pairs.i] - y_pred[pairs.j]) + margins
        if np.any(np.abs(slack) < dist):
            return True
    return False


def sample_trial(name: str, rng, dist: float = KINK_DISTANCE, max_n: int = 8) -> Trial:
    """Draw a random batch and config at least ``dist`` away from every kink."""
    while True:
        n = int(rng.integers(2, max_n + 1))
        y_true = np.round(rng.uniform(1.0, 5.0, size=n), 2)
        y_pred = rng.uniform(0.5, 5.5, size=n)
        config = LossConfig(
            alpha=float(rng.uniform(0.0, 0.5)),
            beta=float(rng.uniform(1.0, 10.0)),
            fixed_margin=float(rng.uniform(0.0, 1.0)),
            huber_delta=float(rng.uniform(0.1, 2.0)),
            lambda_rank=float(rng.uniform(0.0, 2.0)),
            ranking="mr" if rng.random() < 0.25 else "qamro",
        )
        pairs = build_pair_set(y_true)
        if not _near_kink(name, y_true, y_pred, config, pairs, dist):
            return Trial(y_true, y_pred, config)


def check_gradients(name: str, trials: int = 1000, seed: int = 0, step: float = 1e-5,
                    tolerance: float = 1e-5) -> GradCheckReport:
    if name not in LOSS_NAMES:
        raise ValueError(f"unknown loss {name!r}; choose from {LOSS_NAMES}")
    rng = np.random.default_rng(seed)
    report = GradCheckReport(name, trials, tolerance)
    for _ in range(trials):
        t = sample_trial(name, rng)
        f = loss_fn(name, t.y_true, t.config)
        analytic = f(t.y_pred).grad
        numeric = central_difference(lambda p: f(p).value, t.y_pred, step)
        err = relative_error(analytic, numeric)
        report.max_rel_error = max(report.max_rel_error, err)
        if not err < tolerance:
            report.failures.append((err, t))
    return report
