"""Mini-batch training loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptyDataset, InvalidConfig
from .network import Network, softmax_nll
from .optim import SGD


@dataclass
class TrainSchedule:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    # keep a parameter snapshot after every epoch (and of the initial state)
    keep_checkpoints: bool = False
    # restore the epoch with the best validation accuracy at the end
    select_best: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfig("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise InvalidConfig("learning_rate must be >= 0 and momentum in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


@dataclass
class TrainResult:
    history: list[EpochMetrics] = field(default_factory=list)
    # (epoch, state) pairs; epoch 0 is the initialisation
    checkpoints: list[tuple[int, dict]] = field(default_factory=list)
    best_epoch: int | None = None


def evaluate(net: Network, images, labels, batch_size=256) -> tuple[float, float]:
    """Inference-mode (mean loss, accuracy) of ``net`` on labelled images."""
    logits = net.predict_logits(images, batch_size)
    loss, _, probs = softmax_nll(logits.astype(np.float64), np.asarray(labels))
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return loss, acc


def train(
    net: Network,
    images,
    labels,
    schedule: TrainSchedule,
    val: tuple | None = None,
    log=None,
) -> TrainResult:
    """Train ``net`` in place with momentum SGD on a seeded shuffle.

    ``labels`` index the columns of ``net``'s head. ``val`` is an optional
    ``(images, labels)`` pair evaluated after every epoch, or a callable
    ``val(net) -> (loss, accuracy)`` for validation schemes that need a
    different head.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.intp)
    n = len(labels)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    n_classes = len(net.class_ids)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise InvalidConfig("training labels fall outside the head's class set")

    rng = np.random.default_rng(schedule.seed)
    opt = SGD(schedule.learning_rate, schedule.momentum)
    result = TrainResult()
    if schedule.keep_checkpoints:
        result.checkpoints.append((0, net.state()))
    best_acc = -1.0
    best_state = None

    for epoch in range(1, schedule.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            logits, _ = net.forward(images[idx], training=True, rng=rng)
            loss, dz, _ = softmax_nll(logits, labels[idx])
            grads = net.backward(dz)
            opt.step(net, grads)
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels[idx]))
        metrics = EpochMetrics(epoch, total_loss / n, correct / n)
        if callable(val):
            metrics.val_loss, metrics.val_accuracy = val(net)
        elif val is not None and len(val[1]):
            metrics.val_loss, metrics.val_accuracy = evaluate(net, val[0], val[1])
        if metrics.val_accuracy is not None:
            if schedule.select_best and metrics.val_accuracy > best_acc:
                best_acc = metrics.val_accuracy
                best_state = net.state()
                result.best_epoch = epoch
        result.history.append(metrics)
        if schedule.keep_checkpoints:
            result.checkpoints.append((epoch, net.state()))
        if log is not None:
            log(metrics)

    if best_state is not None:
        net.load_state(best_state)
    return result
