"""Model initialization: k-means rule centers, perturbed widths, random consequents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .model import SIGMA_MIN, Defuzz, TskModel
from .seeding import rng as substream_rng


@dataclass(frozen=True)
class InitSpec:
    h: float = 1.0  # width location; also the h of width draws N(h, spread^2)
    sigma_spread: float = 0.2
    kmeans_iters: int = 100
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (self.h > 0.0):
            raise ConfigError("h must be positive")
        if self.sigma_spread < 0.0:
            raise ConfigError("sigma_spread must be non-negative")
        if self.kmeans_iters < 1:
            raise ConfigError("kmeans_iters must be at least 1")
        if self.kmeans_restarts < 1:
            raise ConfigError("kmeans_restarts must be at least 1")


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)

def _plusplus_seed(x: np.ndarray, r: int, gen: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(gen.integers(n))]
    best = _sq_dists(x, x[idx[-1]][None, :])[:, 0]
    while len(idx) < r:
        total = best.sum()
        if total <= 0.0:
            idx.append(int(gen.integers(n)))
        else:
            idx.append(int(gen.choice(n, p=best / total)))
        best = np.minimum(best, _sq_dists(x, x[idx[-1]][None, :])[:, 0])
    return x[idx].copy()


def _lloyd(x: np.ndarray, centers: np.ndarray, iters: int) -> tuple[np.ndarray, float]:
    n = x.shape[0]
    assign = np.full(n, -1)
    for _ in range(iters):
        d2 = _sq_dists(x, centers)
        new_assign = d2.argmin(axis=1)
        nearest = d2[np.arange(n), new_assign]
        for r in range(centers.shape[0]):
            mask = new_assign == r
            if mask.any():
                centers[r] = x[mask].mean(axis=0)
            else:
                # revive an empty cluster at the point worst served by the rest
                far = int(nearest.argmax())
                centers[r] = x[far]
                new_assign[far] = r
                nearest[far] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    inertia = float(_sq_dists(x, centers)[np.arange(n), assign].sum())
    return centers, inertia


def kmeans_centers(train: Dataset, r: int, spec: InitSpec) -> np.ndarray:
    """Best-of-restarts Lloyd's k-means on the training features, (r, D)."""
    if r < 1:
        raise ConfigError("need at least one rule")
    x = train.features
    if x.shape[0] < r:
        raise ConfigError(f"cannot place {r} rule centers with {x.shape[0]} samples")
    best_centers = None
    best_inertia = np.inf
    for restart in range(spec.kmeans_restarts):
        gen = substream_rng(spec.seed, "kmeans", restart)
        centers, inertia = _lloyd(x, _plusplus_seed(x, r, gen), spec.kmeans_iters)
        if inertia < best_inertia:
            best_inertia = inertia
            best_centers = centers
    return best_centers


def init_model(train: Dataset, r: int, variant: Defuzz, spec: InitSpec) -> TskModel:
    """k-means centers, widths ~ N(h, spread^2) clamped from below, scaled
    normal consequents with variance 2/(D+1)."""
    centers = kmeans_centers(train, r, spec)
    d = train.n_features
    widths = spec.h + spec.sigma_spread * substream_rng(spec.seed, "widths").standard_normal(
        (r, d)
    )
    widths = np.maximum(widths, SIGMA_MIN)
    scale = np.sqrt(2.0 / (d + 1))
    consequents = scale * substream_rng(spec.seed, "consequents").standard_normal(
        (r, d + 1, train.num_classes)
    )
    return TskModel(centers, widths, consequents, variant=variant)
