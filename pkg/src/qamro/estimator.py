"""scikit-learn compatible wrapper around the multi-head regressor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .losses import LossConfig
from .regressor import TrainConfig, forward, init_regressor, train


class QAMRORegressor(RegressorMixin, BaseEstimator):
    """MOS regressor trained with Huber loss plus a pairwise ranking term.

    ``y`` may be 1-D (one head) or 2-D with one column per rated dimension.
    Without an explicit ``eval_set`` a ``validation_fraction`` of the rows
    is held out for early stopping.

    Parameters mirror :class:`LossConfig` and :class:`TrainConfig`; the
    defaults are batch 256, SGD at lr 5e-4, patience 20, alpha 0.2, beta 7.
    Set ``beta=1`` to disable quality weighting, ``ranking="mr"`` for a fixed
    margin, ``lambda_rank=0`` for plain Huber regression.
    """

    def __init__(self, hidden_dims=(128, 64), alpha=0.2, beta=7.0, fixed_margin=0.5,
                 huber_delta=1.0, lambda_rank=1.0, ranking="qamro", scale_min=1.0,
                 scale_max=5.0, batch_size=256, learning_rate=0.0005, momentum=0.0,
                 patience=20, max_epochs=1000, validation_fraction=0.1,
                 head_names=None, random_state=0):
        self.hidden_dims = hidden_dims
        self.alpha = alpha
        self.beta = beta
        self.fixed_margin = fixed_margin
        self.huber_delta = huber_delta
        self.lambda_rank = lambda_rank
        self.ranking = ranking
        self.scale_min = scale_min
        self.scale_max = scale_max
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.patience = patience
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.head_names = head_names
        self.random_state = random_state

    def _loss_config(self) -> LossConfig:
        return LossConfig(alpha=self.alpha, beta=self.beta, fixed_margin=self.fixed_margin,
                          huber_delta=self.huber_delta, lambda_rank=self.lambda_rank,
                          scale_min=self.scale_min, scale_max=self.scale_max,
                          ranking=self.ranking)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, learning_rate=self.learning_rate,
                           patience=self.patience, max_epochs=self.max_epochs,
                           loss=self._loss_config(), seed=self.random_state,
                           momentum=self.momentum)

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1)
        names = list(self.head_names) if self.head_names is not None else [
            f"y{k}" for k in range(Y.shape[1])]
        if len(names) != Y.shape[1]:
            raise ValueError(f"{len(names)} head names for {Y.shape[1]} target columns")
        config = self._train_config()

        if eval_set is None:
            rng = np.random.default_rng(self.random_state)
            perm = rng.permutation(len(X))
            n_val = int(round(self.validation_fraction * len(X)))
            if not 0 < n_val < len(X):
                raise ValueError("validation_fraction leaves the train or validation side empty")
            val, tr = np.sort(perm[:n_val]), np.sort(perm[n_val:])
            train_set, val_set = (X[tr], Y[tr]), (X[val], Y[val])
        else:
            Xv, yv = check_X_y(*eval_set, multi_output=True, y_numeric=True, dtype=np.float64)
            train_set, val_set = (X, Y), (Xv, yv.reshape(len(yv), -1))

        midpoint = 0.5 * (self.scale_min + self.scale_max)
        reg = init_regressor(X.shape[1], names, tuple(self.hidden_dims), self.random_state,
                             output_bias=midpoint)
        self.model_, self.train_log_ = train(reg, train_set, val_set, config)
        self.n_features_in_ = X.shape[1]
        self.head_names_ = names
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        preds = forward(self.model_, X)
        out = np.column_stack([preds[h] for h in self.head_names_])
        return out[:, 0] if self._single_output else out
