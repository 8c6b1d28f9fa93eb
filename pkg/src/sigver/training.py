"""Writer-independent CNN training: user classification over the development set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .nn.functional import softmax_xent
from .nn.network import Network

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.01
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 20
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 100
    epochs: int = 60
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0 or self.lr_decay_every < 1:
            raise ConfigError("epochs must be >= 0 and lr_decay_every >= 1")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")


@dataclass
class OptimizerState:
    velocity: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params])


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    mean_loss: float
    accuracy: float


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    return cfg.initial_lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def nesterov_step(params, grads, state: OptimizerState, lr: float, momentum: float,
                  weight_decay: float, decay_mask=None) -> None:
    """In-place update ``v <- mu*v - lr*(g + wd*w)``, ``w <- w + v``.

    ``grads`` must have been evaluated at the lookahead point ``w + mu*v``.
    ``decay_mask[i]`` False exempts tensor i (biases) from weight decay.
    """
    if not (len(params) == len(grads) == len(state.velocity)):
        raise TrainingError("params, grads and velocity lists differ in length")
    for i, (w, g, v) in enumerate(zip(params, grads, state.velocity)):
        if w.shape != g.shape or w.shape != v.shape:
            raise TrainingError(f"shape mismatch at tensor {i}: {w.shape}, {g.shape}, {v.shape}")
        step = g + weight_decay * w if (decay_mask is None or decay_mask[i]) else g
        v *= momentum
        v -= lr * step
        w += v


def train_wi(network: Network, images: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
             on_epoch: Callable[[EpochLog, Network], None] | None = None) -> list[EpochLog]:
    """Train ``network`` in place with Nesterov-momentum SGD.

    Each epoch shuffles the whole set with a generator derived from
    ``cfg.seed``; the final partial batch is kept. Returns one log row per
    epoch (loss and accuracy measured on the train-mode forward passes).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if len(images) != len(labels):
        raise ConfigError("one label per image required")
    if labels.min() < 0 or labels.max() >= network.n_classes:
        raise ConfigError(f"labels must lie in [0, {network.n_classes})")
    images = np.asarray(images, dtype=network.dtype)
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState.zeros_like(network.params)
    decay_mask = network.decay_mask
    history = []
    window: list[float] = []
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        order = rng.permutation(len(images))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            params = network.params
            saved = [p.copy() for p in params]
            for p, v in zip(params, state.velocity):
                p += cfg.momentum * v
            loss, logits = network.loss_and_grads(images[idx], labels[idx], rng=rng)
            for p, s in zip(params, saved):
                p[...] = s
            nesterov_step(params, network.grads, state, lr, cfg.momentum, cfg.weight_decay, decay_mask)
            loss_sum += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == labels[idx]))
        entry = EpochLog(epoch, lr, loss_sum / len(images), correct / len(images))
        if not math.isfinite(entry.mean_loss):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        history.append(entry)
        log.info("epoch %d lr %.5g loss %.4f acc %.4f", epoch, lr, entry.mean_loss, entry.accuracy)
        if epoch < cfg.lr_decay_every:
            window.append(entry.mean_loss)
            if len(window) > 10 and window[-1] > window[-11]:
                log.warning("training loss rose over the last 10 epochs (%.4f -> %.4f)", window[-11], window[-1])
        if on_epoch is not None:
            on_epoch(entry, network)
    return history


def mean_loss(network: Network, images, labels, batch_size: int = 100) -> float:
    """Inference-mode mean cross-entropy, no parameter update."""
    total = 0.0
    for start in range(0, len(images), batch_size):
        logits = network.forward(images[start:start + batch_size]).astype(np.float64)
        loss, _ = softmax_xent(logits, labels[start:start + batch_size])
        total += loss * len(logits)
    return total / len(images)
