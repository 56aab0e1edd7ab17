"""Saturation and landscape diagnostics, plus the tidy output contract.

All measurement results flatten into tidy rows with a fixed column set so
downstream consumers (CSV/JSON readers, the plotting package) never parse
anything model-specific:

    variant, dim, rules, h, epoch, repeat, metric, value

For batch-scoped metrics the epoch column carries the running batch index
instead; consumers tell them apart by the metric name.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import synth_gaussian, split, SplitSpec
from .errors import ConfigError, NumericError
from .gradients import Loss, loss_and_grad, loss_value
from .initializers import InitSpec, init_model
from .model import FIRED_THRESHOLD, Defuzz, TskModel
from .seeding import substream_seed
from .trainer import TrainConfig, TrainEvent, train

COLUMNS = ("variant", "dim", "rules", "h", "epoch", "repeat", "metric", "value")

PERCENTILES = (5, 25, 50, 75, 95)

LANDSCAPE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class DiagnosticsRecord:
    """One measurement snapshot of a model against a sample set."""

    epoch: int
    batch: Optional[int]
    mean_fired_rules: float
    a_r: np.ndarray  # (R,) average normalized firing per rule
    a_r_percentiles: dict[str, float]
    grad_l1: Optional[tuple[float, float, float]] = None
    landscape_losses: Optional[np.ndarray] = None


def measure(
    model: TskModel,
    xs: np.ndarray,
    epoch: int,
    batch: Optional[int] = None,
    grad_l1: Optional[tuple[float, float, float]] = None,
    landscape_losses: Optional[np.ndarray] = None,
) -> DiagnosticsRecord:
    a_r = average_firing(model, xs)
    return DiagnosticsRecord(
        epoch=epoch,
        batch=batch,
        mean_fired_rules=count_fired_rules(model, xs),
        a_r=a_r,
        a_r_percentiles=firing_percentiles(a_r),
        grad_l1=grad_l1,
        landscape_losses=landscape_losses,
    )


def count_fired_rules(model: TskModel, xs: np.ndarray) -> float:
    """Mean number of rules per sample whose normalized firing exceeds the
    fired threshold."""
    fbar = model.firing_batch(xs)
    return float((fbar > FIRED_THRESHOLD).sum(axis=1).mean())


def average_firing(model: TskModel, xs: np.ndarray) -> np.ndarray:
    """Per-rule mean normalized firing level over the samples, (R,)."""
    return model.firing_batch(xs).mean(axis=0)


def firing_percentiles(a_r: np.ndarray) -> dict[str, float]:
    return {f"p{q}": float(np.percentile(a_r, q)) for q in PERCENTILES}


def landscape_probe(
    model: TskModel,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    loss: Loss,
    eta: float,
    grid: Sequence[float] = LANDSCAPE_GRID,
) -> np.ndarray:
    """Loss along the negative-gradient ray: L(p - s*eta*g) for each s.

    The model is left untouched. Non-finite probe losses are recorded as
    NaN rather than raised.
    """
    if eta <= 0.0:
        raise ConfigError("probe step eta must be positive")
    base, grads = loss_and_grad(model, batch_x, batch_y, loss)
    out = np.empty(len(grid))
    probe = model.copy()
    for i, s in enumerate(grid):
        if s == 0.0:
            out[i] = base
            continue
        probe.centers[...] = model.centers - s * eta * grads.d_centers
        probe.widths[...] = model.widths - s * eta * grads.d_widths
        probe.consequents[...] = model.consequents - s * eta * grads.d_consequents
        try:
            out[i] = loss_value(probe, batch_x, batch_y, loss)
        except NumericError:
            out[i] = np.nan
    return out


# ---- tidy rows ------------------------------------------------------------


def make_row(
    variant: str,
    dim: int,
    rules: int,
    h: float,
    epoch: int,
    repeat: int,
    metric: str,
    value: float,
) -> dict:
    return {
        "variant": variant,
        "dim": dim,
        "rules": rules,
        "h": h,
        "epoch": epoch,
        "repeat": repeat,
        "metric": metric,
        "value": float(value),
    }


def write_rows_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in COLUMNS})


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append(
                {
                    "variant": raw["variant"],
                    "dim": int(raw["dim"]),
                    "rules": int(raw["rules"]),
                    "h": float(raw["h"]),
                    "epoch": int(raw["epoch"]),
                    "repeat": int(raw["repeat"]),
                    "metric": raw["metric"],
                    "value": float(raw["value"]),
                }
            )
        return rows


def summarize_rows(rows: Sequence[dict]) -> list[dict]:
    """Collapse repeats: mean and p5/p50/p95 per (variant, dim, rules, h,
    epoch, metric) group, sorted by the group key."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row["variant"], row["dim"], row["rules"], row["h"], row["epoch"], row["metric"])
        groups.setdefault(key, []).append(row["value"])
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        finite = vals[np.isfinite(vals)]
        entry = {
            "variant": key[0],
            "dim": key[1],
            "rules": key[2],
            "h": key[3],
            "epoch": key[4],
            "metric": key[5],
            "repeats": int(vals.size),
            "mean": float(finite.mean()) if finite.size else None,
            "p5": float(np.percentile(finite, 5)) if finite.size else None,
            "p50": float(np.percentile(finite, 50)) if finite.size else None,
            "p95": float(np.percentile(finite, 95)) if finite.size else None,
        }
        out.append(entry)
    return out


def write_summary_json(rows: Sequence[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(summarize_rows(rows), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---- training-time collector ----------------------------------------------


class DiagnosticsCollector:
    """Hook that turns train events into tidy rows.

    Epoch events yield fired-rule counts and firing percentiles on a monitor
    sample plus loss/accuracy; batch events yield gradient L1 norms and,
    optionally, landscape probe losses every `landscape_every` batches.
    """

    def __init__(
        self,
        monitor_x: np.ndarray,
        variant: str,
        dim: int,
        rules: int,
        h: float,
        repeat: int = 0,
        landscape: bool = False,
        landscape_every: int = 1,
        landscape_batch: Optional[tuple[np.ndarray, np.ndarray]] = None,
        landscape_eta: float = 0.01,
        loss: Loss = Loss.CROSS_ENTROPY,
        max_monitor: int = 1024,
    ):
        self.monitor_x = np.asarray(monitor_x)[:max_monitor]
        self.tags = dict(variant=variant, dim=dim, rules=rules, h=h, repeat=repeat)
        self.landscape = landscape
        self.landscape_every = max(1, landscape_every)
        self.landscape_batch = landscape_batch
        self.landscape_eta = landscape_eta
        self.loss = loss
        self.rows: list[dict] = []
        self.records: list[DiagnosticsRecord] = []

    def _emit(self, epoch: int, metric: str, value: float) -> None:
        self.rows.append(make_row(epoch=epoch, metric=metric, value=value, **self.tags))

    def measure_model(self, model: TskModel, epoch: int) -> DiagnosticsRecord:
        """Record fired-rule count and firing percentiles at an epoch mark."""
        record = measure(model, self.monitor_x, epoch)
        self.records.append(record)
        self._emit(epoch, "mean_fired_rules", record.mean_fired_rules)
        for name, value in record.a_r_percentiles.items():
            self._emit(epoch, f"a_r_{name}", value)
        return record

    def __call__(self, event: TrainEvent) -> None:
        if event.kind == "batch":
            gm, gw, gb = event.grad_l1
            self._emit(event.batch, "grad_l1_centers", gm)
            self._emit(event.batch, "grad_l1_widths", gw)
            self._emit(event.batch, "grad_l1_consequents", gb)
            if (
                self.landscape
                and self.landscape_batch is not None
                and event.batch % self.landscape_every == 0
            ):
                bx, by = self.landscape_batch
                losses = landscape_probe(
                    event.model, bx, by, self.loss, self.landscape_eta
                )
                for s, val in zip(LANDSCAPE_GRID, losses):
                    self._emit(event.batch, f"landscape_loss_s{int(round(s * 100))}", val)
        elif event.kind == "epoch":
            self.measure_model(event.model, event.epoch)
            self._emit(event.epoch, "train_loss", event.loss)
            self._emit(event.epoch, "val_accuracy", event.val_accuracy)
            self._emit(event.epoch, "val_loss", event.val_loss)


# ---- saturation sweep ------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    dims: tuple[int, ...] = (5, 10, 20, 50, 100, 200)
    rule_counts: tuple[int, ...] = (10,)
    h_values: tuple[float, ...] = (1.0,)
    epochs_at: tuple[int, ...] = (0, 30)  # 0 means at initialization
    repeats: int = 10
    n_samples: int = 500
    num_classes: int = 2
    seed: int = 0
    kmeans_iters: int = 25  # sweeps favour cheap k-means; raise for final runs
    kmeans_restarts: int = 1
    learning_rate: float = 0.01
    batch_size: int = 64
    sigma_spread: float = 0.2

    def __post_init__(self):
        if not self.dims or not self.rule_counts or not self.h_values:
            raise ConfigError("sweep grid must be non-empty")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if any(e < 0 for e in self.epochs_at):
            raise ConfigError("epochs_at entries must be non-negative")
        if self.n_samples < 10:
            raise ConfigError("sweep needs at least 10 samples")


def _sweep_point(task: tuple[SweepSpec, Defuzz, int, int, float, int]) -> list[dict]:
    """Measure one (dim, rules, h, repeat) grid point; self-contained so grid
    points can run in worker processes."""
    spec, variant, dim, rules, h, rep = task
    tag = substream_seed(spec.seed, "sweep", variant.value, dim, rules, h, rep)
    ds = synth_gaussian(spec.n_samples, dim, spec.num_classes, seed=tag, labeling="random")
    model = init_model(
        ds,
        rules,
        variant,
        InitSpec(
            h=h,
            sigma_spread=spec.sigma_spread,
            kmeans_iters=spec.kmeans_iters,
            kmeans_restarts=spec.kmeans_restarts,
            seed=tag,
        ),
    )
    collector = DiagnosticsCollector(
        ds.features, variant=variant.value, dim=dim, rules=rules, h=h, repeat=rep
    )
    if 0 in spec.epochs_at:
        collector.measure_model(model, 0)
    train_epochs = sorted(e for e in spec.epochs_at if e > 0)
    if train_epochs:
        tr, va = split(ds, SplitSpec(0.9, 0.1, seed=tag))[:2]
        marks = set(train_epochs)

        def at_marks(event):
            if event.kind == "epoch" and event.epoch in marks:
                collector.measure_model(event.model, event.epoch)

        train(
            model,
            tr,
            va,
            TrainConfig(
                learning_rate=spec.learning_rate,
                batch_size=spec.batch_size,
                max_epochs=max(train_epochs),
                patience=max(train_epochs),
                seed=tag,
            ),
            hooks=[at_marks],
        )
    return collector.rows


def saturation_sweep(spec: SweepSpec, variant: Defuzz, jobs: int = 1) -> list[dict]:
    """Fired-rule counts on random-label synthetic data over a (dim, rules, h)
    grid, measured at initialization and after each training checkpoint in
    `epochs_at`. Grid points are independent; `jobs` > 1 runs them in worker
    processes, with results merged in grid order either way."""
    variant = Defuzz(variant)
    tasks = [
        (spec, variant, dim, rules, h, rep)
        for dim in spec.dims
        for rules in spec.rule_counts
        for h in spec.h_values
        for rep in range(spec.repeats)
    ]
    if jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(jobs) as pool:
            shards = pool.map(_sweep_point, tasks)
    else:
        shards = [_sweep_point(task) for task in tasks]
    rows: list[dict] = []
    for shard in shards:
        rows.extend(shard)
    return rows
