"""Mini-batch training with validation-accuracy early stopping."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .data import EmotionClass, LabeledFragment, stack
from .errors import EmptySplit, ShapeMismatch
from .model import BarkNet, predict_batch


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs_max < 1 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ValueError("epochs_max, batch_size and early_stop_patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    wall_time_s: float

    def line(self) -> str:
        return f"epoch={self.epoch} loss={self.train_loss:.6f} val_acc={self.val_acc:.6f}"


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def lines(self) -> List[str]:
        return [r.line() for r in self.records]

    def to_text(self) -> str:
        """Reproducible text form (wall times are left out)."""
        return "".join(line + "\n" for line in self.lines())

    @property
    def best_val_acc(self) -> float:
        return max(r.val_acc for r in self.records)


def _check_items(net: BarkNet, items: Sequence[LabeledFragment], name: str):
    if not items:
        raise EmptySplit(f"{name} split is empty")
    bad = {len(it.samples) for it in items} - {net.config.fragment_len}
    if bad:
        raise ShapeMismatch(f"{name} fragments have lengths {sorted(bad)}, model expects {net.config.fragment_len}")


def first_batch_loss(net: BarkNet, items: Sequence[LabeledFragment], batch_size: int = 32, seed: int = 0) -> float:
    """Train-mode loss of one seeded batch, without touching the parameters.

    Running statistics are restored afterwards.
    """
    x, y = stack(items)
    idx = np.random.default_rng(seed).permutation(len(items))[:batch_size]
    saved = [a.copy() for a in net.state_arrays()]
    out, _ = net.logits(x[idx], "train")
    net.load_state(saved)
    return nn.cross_entropy(nn.softmax(out), y[idx])[0]


def fit(net: BarkNet, train: Sequence[LabeledFragment], val: Sequence[LabeledFragment],
        cfg: TrainConfig = TrainConfig(),
        on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> Tuple[BarkNet, TrainLog]:
    """Train ``net`` in place and return it restored to its best-validation epoch.

    Training stops once validation accuracy has not strictly improved for
    ``early_stop_patience`` epochs, or after ``epochs_max`` epochs.
    """
    _check_items(net, train, "train")
    _check_items(net, val, "val")
    x, y = stack(train)
    xv, yv = stack(val)
    params = net.parameters()
    adam = nn.AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    best_state, best_acc, stale = None, -1.0, 0

    for epoch in range(1, cfg.epochs_max + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(y))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = net.loss_and_grads(x[idx], y[idx])
            total += loss * len(idx)
            if cfg.optimizer == "adam":
                nn.adam_step(adam, params, grads)
            else:
                nn.sgd_step(params, grads, cfg.lr)
        val_acc = float(np.mean(np.argmax(predict_batch(net, xv), axis=1) == yv))
        record = EpochRecord(epoch, total / len(y), val_acc, time.perf_counter() - t0)
        log.records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val_acc > best_acc:
            best_acc, stale, log.best_epoch = val_acc, 0, epoch
            best_state = [a.copy() for a in net.state_arrays()]
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    net.load_state(best_state)
    return net, log


def evaluate_split(net: BarkNet, items: Sequence[LabeledFragment]) -> Tuple[float, List[EmotionClass]]:
    """Infer-mode accuracy and per-item predictions."""
    if not items:
        raise EmptySplit("cannot evaluate an empty split")
    x, y = stack(items)
    pred = np.argmax(predict_batch(net, x), axis=1)
    return float(np.mean(pred == y)), [EmotionClass(int(p)) for p in pred]
