"""First-order TSK fuzzy models with Gaussian memberships.

A model holds R rules over D inputs. Rule r has Gaussian memberships with
centers m[r, d] and widths sigma[r, d], and an affine consequent per output
class: o[r, c] = b[r, 0, c] + sum_d b[r, 1 + d, c] * x[d].

The per-rule log-firing value is

    z[r] = -sum_d (x[d] - m[r, d])^2 / (2 * sigma[r, d]^2)

computed directly in the log domain (never as a product of per-dimension
memberships, which underflows in high dimension). The "htsk" variant divides
the sum by D, which bounds |z| independently of the input dimensionality and
is algebraically the same as widening every sigma by sqrt(D).

Normalized firing levels come from `defuzzify`, which supports:

* "vanilla"  softmax over z (with max-subtraction for stability)
* "htsk"     softmax over the D-averaged z
* "logtsk"   g[r] = 1 / (-z[r] + eps), normalized by sum(g); invariant to
             positive rescaling of z when eps is 0
* "l1"/"l2"  z divided by its L1/L2 norm; scale-invariant but the resulting
             "firing levels" are negative (they sum to -1 under "l1") --
             experimental variants, kept off the default CLI choices
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateInputError, NumericError

SIGMA_MIN = 1e-8
"""Evaluation-time lower clamp on membership widths."""

EPS_LOG = 1e-12
"""Added to -z in "logtsk" denominators so an input sitting exactly on a
rule center (z = 0) stays finite."""

FIRED_THRESHOLD = 1e-4
"""A rule counts as fired when its normalized firing level exceeds this."""

_CHUNK_ELEMS = 1 << 23  # cap on the (chunk, R, D) temporary, ~64 MB of float64


class Defuzz(str, Enum):
    VANILLA = "vanilla"
    HTSK = "htsk"
    LOGTSK = "logtsk"
    L1 = "l1"
    L2 = "l2"


SOFTMAX_VARIANTS = (Defuzz.VANILLA, Defuzz.HTSK)
# Variants whose firing levels are a convex combination (nonnegative, sum 1).
NORMALIZED_VARIANTS = (Defuzz.VANILLA, Defuzz.HTSK, Defuzz.LOGTSK)


def defuzzify(z: np.ndarray, variant: Defuzz, eps_log: float = EPS_LOG) -> np.ndarray:
    """Map log-firing values to normalized firing levels along the last axis.

    Accepts a single vector (R,) or a batch (N, R).
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("defuzzify: z contains non-finite values")
    variant = Defuzz(variant)
    if variant in SOFTMAX_VARIANTS:
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    if variant is Defuzz.LOGTSK:
        if np.any(z > 0.0):
            raise ValueError("logtsk defuzzification requires z <= 0")
        denom = -z + eps_log
        if np.any(denom == 0.0):
            raise DegenerateInputError("logtsk with eps_log=0 hit z == 0")
        g = 1.0 / denom
        return g / g.sum(axis=-1, keepdims=True)
    if variant is Defuzz.L1:
        norm = np.abs(z).sum(axis=-1, keepdims=True)
    else:  # L2
        norm = np.sqrt((z * z).sum(axis=-1, keepdims=True))
    if np.any(norm == 0.0):
        raise DegenerateInputError(f"{variant.value} defuzzification of an all-zero z")
    return z / norm


@dataclass
class FiringState:
    """Intermediate quantities of one forward evaluation."""

    z: np.ndarray  # (R,) log-firing values
    fbar: np.ndarray  # (R,) normalized firing levels
    rule_outputs: np.ndarray  # (R, C) per-rule affine outputs
    output: np.ndarray  # (C,) firing-weighted combination


@dataclass
class TskModel:
    """A trainable TSK fuzzy classifier.

    centers: (R, D); widths: (R, D); consequents: (R, D+1, C) with the bias
    at index 0 of the middle axis. Widths are stored unconstrained; all math
    uses max(|width|, SIGMA_MIN), which keeps gradient descent unconstrained
    while avoiding division by zero.
    """

    centers: np.ndarray
    widths: np.ndarray
    consequents: np.ndarray
    variant: Defuzz = Defuzz.HTSK
    eps_log: float = EPS_LOG

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.widths = np.asarray(self.widths, dtype=np.float64)
        self.consequents = np.asarray(self.consequents, dtype=np.float64)
        self.variant = Defuzz(self.variant)
        r, d = self.centers.shape
        if self.widths.shape != (r, d):
            raise ConfigError(
                f"widths shape {self.widths.shape} does not match centers {self.centers.shape}"
            )
        if self.consequents.ndim != 3 or self.consequents.shape[:2] != (r, d + 1):
            raise ConfigError(
                f"consequents shape {self.consequents.shape} must be (R, D+1, C) = "
                f"({r}, {d + 1}, C)"
            )

    @property
    def num_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def num_classes(self) -> int:
        return self.consequents.shape[2]

    def effective_widths(self) -> np.ndarray:
        return np.maximum(np.abs(self.widths), SIGMA_MIN)

    def copy(self) -> "TskModel":
        return TskModel(
            self.centers.copy(),
            self.widths.copy(),
            self.consequents.copy(),
            self.variant,
            self.eps_log,
        )

    # ---- forward math -------------------------------------------------

    def membership(self, x: np.ndarray, r: int) -> np.ndarray:
        """Per-dimension Gaussian membership degrees of x under rule r."""
        x = np.asarray(x, dtype=np.float64)
        s = self.effective_widths()[r]
        return np.exp(-((x - self.centers[r]) ** 2) / (2.0 * s * s))

    def z_batch(self, xs: np.ndarray) -> np.ndarray:
        """Log-firing values for a batch, shape (N, R).

        Chunked over samples so the (chunk, R, D) temporary stays bounded.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        n = xs.shape[0]
        if xs.shape[1] != self.input_dim:
            raise ConfigError(
                f"input dim {xs.shape[1]} does not match model dim {self.input_dim}"
            )
        s = self.effective_widths()
        inv2s2 = 1.0 / (2.0 * s * s)  # (R, D)
        out = np.empty((n, self.num_rules))
        chunk = max(1, _CHUNK_ELEMS // max(1, self.num_rules * self.input_dim))
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            diff = xs[lo:hi, None, :] - self.centers[None, :, :]
            out[lo:hi] = -np.einsum("nrd,rd->nr", diff * diff, inv2s2)
        if self.variant is Defuzz.HTSK:
            out /= self.input_dim
        return out

    def compute_z(self, x: np.ndarray) -> np.ndarray:
        """Log-firing values of a single sample, shape (R,)."""
        return self.z_batch(np.asarray(x, dtype=np.float64)[None, :])[0]

    def firing_batch(self, xs: np.ndarray) -> np.ndarray:
        return defuzzify(self.z_batch(xs), self.variant, self.eps_log)

    def rule_outputs_batch(self, xs: np.ndarray) -> np.ndarray:
        """Per-rule affine outputs, shape (N, R, C)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        bias = self.consequents[:, 0, :]  # (R, C)
        slope = self.consequents[:, 1:, :]  # (R, D, C)
        return bias[None, :, :] + np.einsum("nd,rdc->nrc", xs, slope)

    def output_batch(self, xs: np.ndarray) -> np.ndarray:
        fbar = self.firing_batch(xs)
        return np.einsum("nr,nrc->nc", fbar, self.rule_outputs_batch(xs))

    def forward(self, x: np.ndarray) -> FiringState:
        x = np.asarray(x, dtype=np.float64)
        z = self.compute_z(x)
        fbar = defuzzify(z, self.variant, self.eps_log)
        rule_outputs = self.rule_outputs_batch(x[None, :])[0]
        return FiringState(z, fbar, rule_outputs, fbar @ rule_outputs)

    def predict_batch(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(argmax labels, raw scores); ties break to the lowest class index."""
        scores = self.output_batch(xs)
        return np.argmax(scores, axis=1), scores

    # ---- persistence ---------------------------------------------------

    def to_dict(
        self,
        norm_stats: dict | None = None,
        label_values: list[int] | None = None,
    ) -> dict:
        return {
            "format": "tsk-checkpoint-v1",
            "variant": self.variant.value,
            "num_rules": self.num_rules,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "eps_log": self.eps_log,
            "centers": self.centers.ravel().tolist(),
            "widths": self.widths.ravel().tolist(),
            "consequents": self.consequents.ravel().tolist(),
            "norm_stats": norm_stats,
            "label_values": label_values,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TskModel":
        r, dim, c = d["num_rules"], d["input_dim"], d["num_classes"]
        return cls(
            np.asarray(d["centers"], dtype=np.float64).reshape(r, dim),
            np.asarray(d["widths"], dtype=np.float64).reshape(r, dim),
            np.asarray(d["consequents"], dtype=np.float64).reshape(r, dim + 1, c),
            Defuzz(d["variant"]),
            float(d.get("eps_log", EPS_LOG)),
        )

    def save(
        self,
        path: str,
        norm_stats: dict | None = None,
        label_values: list[int] | None = None,
    ) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(norm_stats, label_values), f, separators=(",", ":"))

    @classmethod
    def load(cls, path: str) -> tuple["TskModel", dict]:
        """Returns (model, extras) where extras carries norm_stats and
        label_values if the checkpoint has them."""
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        if d.get("format") != "tsk-checkpoint-v1":
            raise ConfigError(f"{path}: not a tsk checkpoint")
        extras = {
            "norm_stats": d.get("norm_stats"),
            "label_values": d.get("label_values"),
        }
        return cls.from_dict(d), extras
