"""Multi-head MLP score predictor trained with SGD on the combined loss.

Each head is an independent three-layer MLP (two tanh hidden layers and a
linear scalar output). All heads read the same feature vector.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .losses import LossConfig, combined_loss
from .pairing import build_pair_set

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "qamro-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Regressor:
    input_dim: int
    head_names: list[str]
    hidden_dims: tuple[int, int]
    seed: int
    # head name -> [(W1, b1), (W2, b2), (W3, b3)]
    heads: dict[str, list[tuple[np.ndarray, np.ndarray]]]
    loss_config: LossConfig | None = None

    def copy(self) -> "Regressor":
        heads = {h: [(W.copy(), b.copy()) for W, b in layers] for h, layers in self.heads.items()}
        return Regressor(self.input_dim, list(self.head_names), tuple(self.hidden_dims),
                         self.seed, heads, self.loss_config)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.0005
    patience: int = 20
    max_epochs: int = 1000
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_huber: dict[str, float]
    train_ranking: dict[str, float]
    val_loss: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        if not self.epochs:
            return float("nan")
        return min(r.val_loss for r in self.epochs)


def init_regressor(input_dim: int, head_names, hidden_dims=(128, 64), seed: int = 0,
                   output_bias: float = 3.0) -> Regressor:
    """Glorot-uniform weights, zero hidden biases, output bias at ``output_bias``.

    ``output_bias`` defaults to the midpoint of a 1-5 rating scale.
    """
    head_names = list(head_names)
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if not head_names:
        raise ValueError("at least one head is required")
    if len(set(head_names)) != len(head_names):
        raise ValueError(f"duplicate head names in {head_names}")
    if len(hidden_dims) != 2 or min(hidden_dims) < 1:
        raise ValueError("hidden_dims must hold two positive sizes")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden_dims, 1]
    heads = {}
    for name in head_names:
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append((rng.uniform(-lim, lim, size=(fan_in, fan_out)), np.zeros(fan_out)))
        W, _ = layers[-1]
        layers[-1] = (W, np.full(1, float(output_bias)))
        heads[name] = layers
    return Regressor(input_dim, head_names, tuple(int(h) for h in hidden_dims), seed, heads)


def _check_features(reg: Regressor, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != reg.input_dim:
        raise ValueError(f"expected features of width {reg.input_dim}, got shape {X.shape}")
    return X


def _forward_head(layers, X):
    (W1, b1), (W2, b2), (W3, b3) = layers
    a1 = np.tanh(X @ W1 + b1)
    a2 = np.tanh(a1 @ W2 + b2)
    out = (a2 @ W3 + b3)[:, 0]
    return out, (a1, a2)


def forward(reg: Regressor, X) -> dict[str, np.ndarray]:
    X = _check_features(reg, X)
    return {h: _forward_head(reg.heads[h], X)[0] for h in reg.head_names}


def _backward_head(layers, X, cache, g):
    (W1, _), (W2, _), (W3, _) = layers
    a1, a2 = cache
    g = g[:, None]
    dW3, db3 = a2.T @ g, g.sum(axis=0)
    d2 = (g @ W3.T) * (1.0 - a2 * a2)
    dW2, db2 = a1.T @ d2, d2.sum(axis=0)
    d1 = (d2 @ W2.T) * (1.0 - a1 * a1)
    dW1, db1 = X.T @ d1, d1.sum(axis=0)
    return [(dW1, db1), (dW2, db2), (dW3, db3)]


def backward(reg: Regressor, X, grads: dict) -> dict[str, list[tuple[np.ndarray, np.ndarray]]]:
    """Parameter gradients given d(loss)/d(prediction) per head.

    Heads missing from ``grads`` get zero gradients.
    """
    X = _check_features(reg, X)
    out = {}
    for h in reg.head_names:
        layers = reg.heads[h]
        if h not in grads:
            out[h] = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
            continue
        g = np.asarray(grads[h], dtype=np.float64).ravel()
        if g.shape[0] != X.shape[0]:
            raise ValueError(f"head {h!r}: gradient length {g.shape[0]} != batch size {X.shape[0]}")
        _, cache = _forward_head(layers, X)
        out[h] = _backward_head(layers, X, cache, g)
    unknown = set(grads) - set(reg.head_names)
    if unknown:
        raise ValueError(f"gradients given for unknown heads {sorted(unknown)}")
    return out


def batch_loss(reg: Regressor, X, Y, config: LossConfig, with_grad: bool = True):
    """Combined loss averaged over heads; ``Y`` columns follow ``reg.head_names``.

    Returns ``(total, per_head_outputs, param_grads)``.
    """
    X = _check_features(reg, X)
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    n_heads = len(reg.head_names)
    total = 0.0
    outputs = {}
    grads = {}
    caches = {}
    for k, h in enumerate(reg.head_names):
        pred, caches[h] = _forward_head(reg.heads[h], X)
        y = Y[:, k]
        lo = combined_loss(y, pred, build_pair_set(y), config)
        outputs[h] = lo
        total += lo.value / n_heads
        grads[h] = lo.grad / n_heads
    if not with_grad:
        return total, outputs, None
    pgrads = {h: _backward_head(reg.heads[h], X, caches[h], grads[h]) for h in reg.head_names}
    return total, outputs, pgrads


def _eval_loss(reg, X, Y, config: LossConfig, batch_size: int) -> float:
    # fixed-order chunks keep the pair count bounded for large validation sets
    n = X.shape[0]
    acc = 0.0
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        total, _, _ = batch_loss(reg, X[sl], Y[sl], config, with_grad=False)
        acc += total * (min(n, start + batch_size) - start)
    return acc / n


def sgd_step(reg: Regressor, pgrads, lr: float, velocity=None, momentum: float = 0.0):
    for h in reg.head_names:
        new = []
        for k, ((W, b), (dW, db)) in enumerate(zip(reg.heads[h], pgrads[h])):
            if momentum and velocity is not None:
                vW, vb = velocity[h][k]
                vW *= momentum
                vW += dW
                vb *= momentum
                vb += db
                dW, db = vW, vb
            new.append((W - lr * dW, b - lr * db))
        reg.heads[h] = new


def train(reg: Regressor, train_set, val_set, config: TrainConfig | None = None):
    """SGD with early stopping on the total validation loss.

    ``train_set`` and ``val_set`` are ``(X, Y)`` pairs, ``Y`` shaped
    (n, n_heads) in head order. Returns a new regressor holding the best
    validation-epoch parameters and the :class:`TrainLog`.
    """
    config = config or TrainConfig()
    Xt, Yt = train_set
    Xv, Yv = val_set
    Xt = _check_features(reg, Xt)
    Xv = _check_features(reg, Xv)
    n_heads = len(reg.head_names)
    Yt = np.asarray(Yt, dtype=np.float64).reshape(Xt.shape[0], -1)
    Yv = np.asarray(Yv, dtype=np.float64).reshape(Xv.shape[0], -1)
    if Xt.shape[0] == 0 or Xv.shape[0] == 0:
        raise ValueError("train and validation sets must be non-empty")
    if Yt.shape[1] != n_heads or Yv.shape[1] != n_heads:
        raise ValueError(f"targets need {n_heads} columns, one per head")

    model = reg.copy()
    model.loss_config = config.loss
    log = TrainLog()
    if config.max_epochs == 0:
        return model, log

    rng = np.random.default_rng(config.seed)
    velocity = None
    if config.momentum:
        velocity = {h: [(np.zeros_like(W), np.zeros_like(b)) for W, b in model.heads[h]]
                    for h in model.head_names}
    best = model.copy()
    best_val = np.inf
    n = Xt.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        tot = 0.0
        hub = {h: 0.0 for h in model.head_names}
        rank = {h: 0.0 for h in model.head_names}
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            total, outputs, pgrads = batch_loss(model, Xt[idx], Yt[idx], config.loss)
            sgd_step(model, pgrads, config.learning_rate, velocity, config.momentum)
            tot += total
            for h, lo in outputs.items():
                hub[h] += lo.huber
                rank[h] += lo.ranking
            n_batches += 1
        val = _eval_loss(model, Xv, Yv, config.loss, config.batch_size)
        rec = EpochRecord(
            epoch,
            tot / n_batches,
            {h: v / n_batches for h, v in hub.items()},
            {h: v / n_batches for h, v in rank.items()},
            val,
        )
        if not (np.isfinite(rec.train_loss) and np.isfinite(val)):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}; lower the learning rate")
        log.epochs.append(rec)
        if val < best_val:
            best_val = val
            best = model.copy()
            log.best_epoch = epoch
        log.stopped_epoch = epoch
        logger.debug("epoch %d train %.6f val %.6f", epoch, rec.train_loss, val)
        if epoch - log.best_epoch >= config.patience:
            break
    return best, log


def save_checkpoint(reg: Regressor, path) -> None:
    obj = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": reg.input_dim,
        "head_names": list(reg.head_names),
        "hidden_dims": list(reg.hidden_dims),
        "seed": reg.seed,
        "loss_config": reg.loss_config.to_dict() if reg.loss_config else None,
        "heads": {
            h: [{"shape": list(W.shape), "W": W.ravel().tolist(), "b": b.tolist()}
                for W, b in reg.heads[h]]
            for h in reg.head_names
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, allow_nan=False)
        f.write("\n")


def load_checkpoint(path) -> Regressor:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('version')}")
    heads = {}
    for h in obj["head_names"]:
        heads[h] = [
            (np.array(layer["W"], dtype=np.float64).reshape(layer["shape"]),
             np.array(layer["b"], dtype=np.float64))
            for layer in obj["heads"][h]
        ]
    cfg = obj.get("loss_config")
    return Regressor(
        obj["input_dim"], list(obj["head_names"]), tuple(obj["hidden_dims"]), obj["seed"],
        heads, LossConfig(**cfg) if cfg else None,
    )
