"""Mini-batch Adam training with validation-based early stopping.

The loop trains a working copy, snapshots parameters whenever validation
accuracy improves (ties broken by lower validation loss), and returns the
snapshot. Hooks observe every optimizer step and every epoch; they receive
the live model, so they must not mutate it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, NumericError
from .gradients import GradientSet, Loss, grad_l1_norms, loss_and_grad
from .model import TskModel
from .seeding import rng as substream_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 512
    max_epochs: int = 200
    patience: int = 20  # epochs since the best validation epoch
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ConfigError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ConfigError("adam_eps must be positive")


def effective_batch_size(requested: int, n_train: int) -> int:
    """Requested size if it fits the training set, else min(n_train, 60)."""
    if requested < 1:
        raise ConfigError("batch_size must be positive")
    if n_train < 1:
        raise ConfigError("training set is empty")
    if requested <= n_train:
        return requested
    return min(n_train, 60)


class AdamState:
    """First/second moment accumulators for one list of parameter arrays."""

    def __init__(self, params: Sequence[np.ndarray]):
        self.first = [np.zeros_like(p) for p in params]
        self.second = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(
        self,
        params: Sequence[np.ndarray],
        grads: Sequence[np.ndarray],
        lr: float,
        beta1: float,
        beta2: float,
        eps: float,
    ) -> None:
        self.t += 1
        bc1 = 1.0 - beta1**self.t
        bc2 = 1.0 - beta2**self.t
        for p, g, m, v in zip(params, grads, self.first, self.second):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class TrainEvent:
    """Passed to hooks. kind is "batch" (after an optimizer step, batch is a
    running 1-based index across epochs) or "epoch" (after validation)."""

    kind: str
    epoch: int
    model: TskModel
    batch: Optional[int] = None
    loss: Optional[float] = None
    grads: Optional[GradientSet] = None
    grad_l1: Optional[tuple[float, float, float]] = None
    val_accuracy: Optional[float] = None
    val_loss: Optional[float] = None


Hook = Callable[[TrainEvent], None]


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)  # per epoch
    val_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    epochs_run: int = 0
    restored_best: bool = False
    wall_time_s: float = 0.0

    def to_dict(self, include_wall_time: bool = False) -> dict:
        out = {
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "restored_best": self.restored_best,
        }
        if include_wall_time:
            out["wall_time_s"] = self.wall_time_s
        return out


def evaluate(model: TskModel, ds: Dataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy loss) on a labelled dataset."""
    if ds.n_samples < 1:
        raise ConfigError("cannot evaluate on an empty dataset")
    from .gradients import loss_value

    pred, _ = model.predict_batch(ds.features)
    accuracy = float((pred == ds.labels).mean())
    loss = loss_value(model, ds.features, ds.labels, Loss.CROSS_ENTROPY)
    return accuracy, loss


def train(
    model: TskModel,
    train_ds: Dataset,
    val_ds: Dataset,
    cfg: TrainConfig,
    hooks: Sequence[Hook] = (),
    loss: Loss = Loss.CROSS_ENTROPY,
) -> tuple[TskModel, TrainReport]:
    """Train a copy of `model`; returns (best-epoch model, report)."""
    if train_ds.n_samples < 1 or val_ds.n_samples < 1:
        raise ConfigError("train and validation sets must be non-empty")
    if train_ds.n_features != model.input_dim:
        raise ConfigError(
            f"model expects {model.input_dim} features, got {train_ds.n_features}"
        )

    started = time.perf_counter()
    work = model.copy()
    params = [work.centers, work.widths, work.consequents]
    adam = AdamState(params)
    bs = effective_batch_size(cfg.batch_size, train_ds.n_samples)
    shuffle = substream_rng(cfg.seed, "shuffle")

    report = TrainReport()
    best_params = [p.copy() for p in params]
    best_acc = -np.inf
    best_loss = np.inf
    since_best = 0
    global_batch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle.permutation(train_ds.n_samples)
        batch_losses = []
        for lo in range(0, train_ds.n_samples, bs):
            idx = order[lo : lo + bs]
            try:
                value, grads = loss_and_grad(
                    work, train_ds.features[idx], train_ds.labels[idx], loss
                )
            except NumericError as e:
                raise NumericError(
                    f"epoch {epoch}, batch {lo // bs + 1}: {e}"
                ) from e
            adam.step(
                params,
                grads.as_list(),
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )
            batch_losses.append(value)
            global_batch += 1
            for hook in hooks:
                hook(
                    TrainEvent(
                        kind="batch",
                        epoch=epoch,
                        model=work,
                        batch=global_batch,
                        loss=value,
                        grads=grads,
                        grad_l1=grad_l1_norms(grads),
                    )
                )

        val_acc, val_loss = evaluate(work, val_ds)
        report.train_loss.append(float(np.mean(batch_losses)))
        report.val_accuracy.append(val_acc)
        report.val_loss.append(val_loss)
        report.epochs_run = epoch

        if val_acc > best_acc or (val_acc == best_acc and val_loss < best_loss):
            best_acc = val_acc
            best_loss = val_loss
            report.best_epoch = epoch
            best_params = [p.copy() for p in params]
            since_best = 0
        else:
            since_best += 1

        for hook in hooks:
            hook(
                TrainEvent(
                    kind="epoch",
                    epoch=epoch,
                    model=work,
                    loss=report.train_loss[-1],
                    val_accuracy=val_acc,
                    val_loss=val_loss,
                )
            )

        if since_best >= cfg.patience:
            break

    report.restored_best = report.best_epoch != report.epochs_run
    work.centers[...] = best_params[0]
    work.widths[...] = best_params[1]
    work.consequents[...] = best_params[2]
    report.wall_time_s = time.perf_counter() - started
    return work, report
