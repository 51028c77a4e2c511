"""Mini-batch training of the residual network."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..dataset import PatchDataset
from .network import NetConfig, NetworkModel, init_model, loss_and_grad, network_forward, residual_loss
from .optim import adam_step, step_decay_lr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 140
    batch_size: int = 32
    lr0: float = 1e-3
    lr_decay_every: int = 20
    lr_decay_factor: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.lr_decay_every) < 1:
            raise ValueError("epochs, batch_size and lr_decay_every must be positive")
        if not (self.lr0 > 0 and self.lr_decay_factor > 0 and self.adam_eps > 0):
            raise ValueError("learning-rate settings must be positive")
        if not 0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in [0, 0.5]")

    def lr_at(self, epoch: int) -> float:
        return step_decay_lr(epoch, self.lr0, self.lr_decay_every, self.lr_decay_factor)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    seconds: float = 0.0


def evaluate_loss(model: NetworkModel, ds: PatchDataset, batch_size: int = 32) -> float:
    """Mean per-patch residual loss in inference mode."""
    total = 0.0
    for s in range(0, len(ds), batch_size):
        y = ds.noisy[s:s + batch_size]
        x = ds.clean[s:s + batch_size]
        total += residual_loss(network_forward(model, y, "infer"), y, x)
    return total / max(len(ds), 1)


def zero_model_loss(ds: PatchDataset) -> float:
    """Mean per-patch ``||y - x||^2``: the loss of a network that predicts no residual."""
    d = ds.noisy.astype(np.float64) - ds.clean.astype(np.float64)
    return float(np.sum(d * d) / max(len(ds), 1))


def split_dataset(ds: PatchDataset, fraction: float, seed: int):
    perm = np.random.default_rng([seed, 0xDA7A]).permutation(len(ds))
    n_val = int(round(fraction * len(ds)))
    return ds.subset(np.sort(perm[n_val:])), ds.subset(np.sort(perm[:n_val]))


def train(ds: PatchDataset, net_cfg: NetConfig, train_cfg: TrainConfig,
          on_epoch=None) -> tuple[NetworkModel, list[EpochRecord]]:
    """Train a fresh network and return the best-validation model and the epoch log.

    With ``validation_fraction = 0`` the final model is returned and the
    validation column repeats the training loss.
    """
    train_ds, val_ds = split_dataset(ds, train_cfg.validation_fraction, train_cfg.seed)
    if len(train_ds) < train_cfg.batch_size:
        raise ValueError(
            f"training split has {len(train_ds)} patches, fewer than one batch "
            f"({train_cfg.batch_size})"
        )
    model = init_model(net_cfg, seed=train_cfg.seed, norm=ds.norm)
    moments: dict = {}
    step = 0
    best, best_loss = model.copy(), np.inf
    history = []
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        lr = train_cfg.lr_at(epoch)
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(train_ds))
        total = 0.0
        n_batches = len(order) // train_cfg.batch_size
        for b in range(n_batches):
            idx = np.sort(order[b * train_cfg.batch_size:(b + 1) * train_cfg.batch_size])
            loss, grads = loss_and_grad(model, train_ds.noisy[idx], train_ds.clean[idx])
            step += 1
            adam_step(model.params, grads, moments, step, lr,
                      train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps)
            total += loss
        train_loss = total / (n_batches * train_cfg.batch_size)
        val_loss = evaluate_loss(model, val_ds) if len(val_ds) else train_loss
        rec = EpochRecord(epoch, lr, train_loss, val_loss, time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d lr %.2e train %.5f val %.5f (%.1fs)", epoch, lr, train_loss,
                 val_loss, rec.seconds)
        if on_epoch is not None:
            on_epoch(rec)
        if val_loss < best_loss or not len(val_ds):
            best_loss = val_loss
            best = model.copy()
    best.meta.update(best_val_loss=float(best_loss), train_config=asdict(train_cfg))
    return best, history


def write_log(history: list[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for r in history:
            w.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.val_loss)])
