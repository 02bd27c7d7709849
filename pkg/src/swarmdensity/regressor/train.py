"""Mini-batch training with best-on-validation selection."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..errors import NumericalError
from ..geometry import GridSpec
from ..labeling import MODES
from .arch import ArchSpec
from .loss import batch_loss, default_weights
from .network import RegressorParams, backward_batch, forward_batch, prepare
from .optim import AdamState, ScheduleConfig, adam_step, lr_schedule_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 60
    lr: float = 1e-3
    decay: float = 0.8
    threshold: float = 1e-4
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1, epochs >= 0")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(self.decay, self.threshold, self.patience)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    """Per-epoch record; row 0 holds the untrained validation loss."""
    epoch: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    best_epoch: int = 0

    def append(self, epoch, train_loss, val_loss, lr):
        self.epoch.append(int(epoch))
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.lr.append(float(lr))

    @property
    def initial_val(self) -> float:
        return self.val_loss[0]

    @property
    def final_val(self) -> float:
        return self.val_loss[-1]

    @property
    def decays(self) -> int:
        return sum(1 for a, b in zip(self.lr, self.lr[1:]) if b < a)

    def rows(self):
        return list(zip(self.epoch, self.train_loss, self.val_loss, self.lr))

    def __eq__(self, other):
        if not isinstance(other, History):
            return NotImplemented
        return (self.epoch == other.epoch and self.best_epoch == other.best_epoch
                and all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                        for f in ("train_loss", "val_loss", "lr")))


def arrays(samples: Sequence, mode: str = "partial", dtype=np.float32):
    """Stack uint8 images and flattened ``mode`` labels of a sample list."""
    if mode not in MODES:
        raise ValueError(f"unknown label mode {mode!r}")
    if not samples:
        raise ValueError("empty sample list")
    x = np.stack([s.image for s in samples])
    y = np.stack([s.labels[mode].reshape(-1) for s in samples]).astype(dtype)
    return x, y


def evaluate_loss(rp: RegressorParams, x: np.ndarray, y: np.ndarray, w, batch: int = 64) -> float:
    """Mean per-sample loss norm over a set."""
    total = 0.0
    for i in range(0, len(x), batch):
        out, _ = forward_batch(rp, prepare(x[i:i + batch], rp.dtype))
        norms, _ = batch_loss(out, y[i:i + batch], w)
        total += float(norms.astype(np.float64).sum())
    return total / len(x)


def train_step(rp: RegressorParams, x: np.ndarray, y: np.ndarray, w):
    """Mean squared loss and its gradients for one float batch."""
    out, caches = forward_batch(rp, x, keep=True)
    norms, dout = batch_loss(out, y, w)
    return norms, backward_batch(rp, caches, dout)


def train(train_set: Sequence, val_set: Sequence, cfg: TrainConfig = TrainConfig(),
          arch: Optional[ArchSpec] = None, mode: str = "partial", w=None,
          init: Optional[RegressorParams] = None, dtype=np.float32):
    """Train and return the validation-best parameters with the full history."""
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    x_tr, y_tr = arrays(train_set, mode, dtype)
    x_va, y_va = arrays(val_set, mode, dtype)
    if arch is None:
        h_out, w_out, n_bin = train_set[0].labels[mode].shape
        h, wd = x_tr.shape[1:3]
        arch = ArchSpec.desk(size=wd).with_(h_in=h, n_bin=n_bin, grid=GridSpec(w_out, h_out))
    if w is None:
        w = default_weights(arch.n_bin)
    rp = init.copy() if init is not None else RegressorParams.initial(arch, cfg.seed, dtype)
    if y_tr.shape[1] != rp.arch.n_out:
        raise ValueError(f"labels have {y_tr.shape[1]} entries, network emits {rp.arch.n_out}")

    rng = np.random.default_rng([int(cfg.seed), 3])
    state = AdamState.fresh(rp.tensors)
    lr = cfg.lr
    hist = History()
    best = evaluate_loss(rp, x_va, y_va, w)
    hist.append(0, float("nan"), best, lr)
    best_params = rp.copy()
    window_start = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x_tr))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            norms, grads = train_step(rp, prepare(x_tr[idx], dtype), y_tr[idx], w)
            total += float(norms.astype(np.float64).sum())
            adam_step(rp.tensors, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
        train_loss = total / len(x_tr)
        val = evaluate_loss(rp, x_va, y_va, w)
        if not (np.isfinite(train_loss) and np.isfinite(val)):
            raise NumericalError(f"training diverged at epoch {epoch} (train {train_loss}, val {val})")
        hist.append(epoch, train_loss, val, lr)
        if val < best:
            best, hist.best_epoch = val, epoch
            best_params = rp.copy()
        log.info("epoch %d train %.5g val %.5g lr %.3g", epoch, train_loss, val, lr)
        # the window restarts after every decay so one plateau triggers one decay
        new_lr = lr_schedule_update(hist.val_loss[window_start:], lr, cfg.schedule)
        if new_lr != lr:
            window_start = len(hist.val_loss) - 1
            lr = new_lr
    return best_params, hist
