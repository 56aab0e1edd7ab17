"""Analytic gradients of the training loss and a finite-difference oracle.

`loss_and_grad` backpropagates the batch-mean loss through the chosen
defuzzification to all three parameter groups. The firing-level Jacobians:

* softmax family: d fbar_r / d z_i = fbar_r * (delta_ri - fbar_i)
* logtsk: chains through g_r = 1 / (-z_r + eps) and the quotient rule
* l1/l2: quotient rule through the norm

`finite_diff_grad` is the verification oracle: central differences of the
same loss, evaluated in extended precision (long double) so that the
difference quotient stays meaningful even where saturation makes true
gradients tiny. It exploits the model structure only to avoid recomputing
unaffected rules' quantities; every perturbed loss is still a full, honest
evaluation of the loss at the perturbed parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, NumericError
from .model import SIGMA_MIN, Defuzz, TskModel, defuzzify

_CHUNK_ELEMS = 1 << 23


class Loss(str, Enum):
    CROSS_ENTROPY = "cross-entropy"  # softmax cross-entropy over the C outputs
    MSE = "mse"  # squared error, single-output models only


@dataclass
class GradientSet:
    """Gradients shaped like the model parameters."""

    d_centers: np.ndarray  # (R, D)
    d_widths: np.ndarray  # (R, D)
    d_consequents: np.ndarray  # (R, D+1, C)

    def as_list(self) -> list[np.ndarray]:
        return [self.d_centers, self.d_widths, self.d_consequents]


def grad_l1_norms(grads: GradientSet) -> tuple[float, float, float]:
    """L1 norms per parameter group: (centers, widths, consequents)."""
    return (
        float(np.abs(grads.d_centers).sum()),
        float(np.abs(grads.d_widths).sum()),
        float(np.abs(grads.d_consequents).sum()),
    )


def _validate_loss(loss: Loss, num_classes: int) -> Loss:
    loss = Loss(loss)
    if loss is Loss.CROSS_ENTROPY and num_classes < 2:
        raise ConfigError("cross-entropy loss requires at least 2 classes")
    if loss is Loss.MSE and num_classes != 1:
        raise ConfigError("mse loss requires a single-output model")
    return loss


def _loss_and_dy(y: np.ndarray, labels: np.ndarray, loss: Loss) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient w.r.t. the model outputs y (B, C)."""
    b = y.shape[0]
    if loss is Loss.CROSS_ENTROPY:
        ymax = y.max(axis=1, keepdims=True)
        e = np.exp(y - ymax)
        sums = e.sum(axis=1, keepdims=True)
        logp = (y - ymax) - np.log(sums)
        value = float(-logp[np.arange(b), labels].mean())
        dy = e / sums
        dy[np.arange(b), labels] -= 1.0
        return value, dy / b
    err = y[:, 0] - labels.astype(np.float64)
    value = float(np.mean(err * err))
    dy = np.zeros_like(y)
    dy[:, 0] = 2.0 * err / b
    return value, dy


def _dz_from_dfbar(
    z: np.ndarray, fbar: np.ndarray, dfbar: np.ndarray, variant: Defuzz, eps_log: float
) -> np.ndarray:
    """Pull dL/dfbar (B, R) back to dL/dz for the given variant."""
    inner = (dfbar * fbar).sum(axis=1, keepdims=True)
    if variant in (Defuzz.VANILLA, Defuzz.HTSK):
        return fbar * (dfbar - inner)
    if variant is Defuzz.LOGTSK:
        g = 1.0 / (-z + eps_log)
        return (g * g / g.sum(axis=1, keepdims=True)) * (dfbar - inner)
    if variant is Defuzz.L1:
        norm = np.abs(z).sum(axis=1, keepdims=True)
        return (dfbar - np.sign(z) * inner) / norm
    norm = np.sqrt((z * z).sum(axis=1, keepdims=True))
    return (dfbar - (z / norm) * inner) / norm


def loss_value(model: TskModel, batch_x: np.ndarray, batch_y: np.ndarray, loss: Loss) -> float:
    """Batch-mean loss without gradients."""
    loss = _validate_loss(loss, model.num_classes)
    y = model.output_batch(batch_x)
    value, _ = _loss_and_dy(y, np.asarray(batch_y), loss)
    if not np.isfinite(value):
        raise NumericError("loss is not finite")
    return value


def loss_and_grad(
    model: TskModel, batch_x: np.ndarray, batch_y: np.ndarray, loss: Loss
) -> tuple[float, GradientSet]:
    """Batch-mean loss and its exact analytic gradients."""
    loss = _validate_loss(loss, model.num_classes)
    xs = np.atleast_2d(np.asarray(batch_x, dtype=np.float64))
    labels = np.asarray(batch_y)
    if xs.shape[0] < 1:
        raise ConfigError("batch must contain at least one sample")
    if labels.shape != (xs.shape[0],):
        raise ConfigError("batch labels do not match batch features")
    if loss is Loss.CROSS_ENTROPY:
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= model.num_classes:
            raise ConfigError("labels out of range for the model's classes")
    else:
        labels = labels.astype(np.float64)  # mse targets may be fractional

    z = model.z_batch(xs)
    fbar = defuzzify(z, model.variant, model.eps_log)
    rule_out = model.rule_outputs_batch(xs)  # (B, R, C)
    y = np.einsum("nr,nrc->nc", fbar, rule_out)

    value, dy = _loss_and_dy(y, labels, loss)
    if not np.isfinite(value):
        raise NumericError("loss is not finite")

    # consequents: dL/do[n,r,c] = fbar[n,r] * dy[n,c]
    gmat = fbar[:, :, None] * dy[:, None, :]  # (B, R, C)
    d_b = np.empty_like(model.consequents)
    d_b[:, 0, :] = gmat.sum(axis=0)
    d_b[:, 1:, :] = np.einsum("nrc,nd->rdc", gmat, xs)

    # antecedents via dL/dz
    dfbar = np.einsum("nc,nrc->nr", dy, rule_out)
    dz = _dz_from_dfbar(z, fbar, dfbar, model.variant, model.eps_log)

    s = model.effective_widths()
    k = 1.0 / model.input_dim if model.variant is Defuzz.HTSK else 1.0
    accum_m = np.zeros_like(model.centers)
    accum_w = np.zeros_like(model.widths)
    n = xs.shape[0]
    chunk = max(1, _CHUNK_ELEMS // max(1, model.num_rules * model.input_dim))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = xs[lo:hi, None, :] - model.centers[None, :, :]
        accum_m += np.einsum("nr,nrd->rd", dz[lo:hi], diff)
        accum_w += np.einsum("nr,nrd->rd", dz[lo:hi], diff * diff)

    d_m = accum_m * (k / (s * s))
    # widths are used as max(|w|, SIGMA_MIN): identity (with sign) outside
    # the clamp, zero inside
    ds_dw = np.sign(model.widths) * (np.abs(model.widths) >= SIGMA_MIN)
    d_w = accum_w * (k / (s * s * s)) * ds_dw

    grads = GradientSet(d_m, d_w, d_b)
    if not all(np.all(np.isfinite(g)) for g in grads.as_list()):
        raise NumericError("gradients are not finite")
    return value, grads


# ---- finite-difference oracle -------------------------------------------


class _LongDoubleLoss:
    """Loss evaluation in long double with per-rule incremental updates.

    Holds the base forward state; `loss_with_z_row` / `loss_with_y` evaluate
    the loss with one rule's log-firing row or one consequent-induced output
    shift replaced, which is all a single-parameter perturbation can change.
    """

    def __init__(self, model: TskModel, xs: np.ndarray, labels: np.ndarray, loss: Loss):
        ld = np.longdouble
        self.variant = model.variant
        self.eps_log = ld(model.eps_log)
        self.loss = loss
        self.xs = xs.astype(ld)
        self.labels = labels
        self.centers = model.centers.astype(ld)
        self.widths = model.widths.astype(ld)
        self.consequents = model.consequents.astype(ld)
        self.k = ld(1.0) / ld(model.input_dim) if model.variant is Defuzz.HTSK else ld(1.0)
        self.z = np.stack(
            [self._z_row(self.centers[r], self.widths[r]) for r in range(model.num_rules)],
            axis=1,
        )  # (B, R)
        bias = self.consequents[:, 0, :]
        slope = self.consequents[:, 1:, :]
        self.rule_out = bias[None, :, :] + np.einsum("nd,rdc->nrc", self.xs, slope)
        self.fbar = self._defuzz(self.z)
        self.y = np.einsum("nr,nrc->nc", self.fbar, self.rule_out)

    def _z_row(self, center: np.ndarray, width: np.ndarray) -> np.ndarray:
        s = np.maximum(np.abs(width), np.longdouble(SIGMA_MIN))
        diff = self.xs - center[None, :]
        return -self.k * ((diff * diff) / (2.0 * s * s)).sum(axis=1)

    def _defuzz(self, z: np.ndarray) -> np.ndarray:
        if self.variant in (Defuzz.VANILLA, Defuzz.HTSK):
            e = np.exp(z - z.max(axis=1, keepdims=True))
            return e / e.sum(axis=1, keepdims=True)
        if self.variant is Defuzz.LOGTSK:
            g = 1.0 / (-z + self.eps_log)
            return g / g.sum(axis=1, keepdims=True)
        if self.variant is Defuzz.L1:
            return z / np.abs(z).sum(axis=1, keepdims=True)
        return z / np.sqrt((z * z).sum(axis=1, keepdims=True))

    def _loss_from_y(self, y: np.ndarray) -> np.longdouble:
        b = y.shape[0]
        if self.loss is Loss.CROSS_ENTROPY:
            ymax = y.max(axis=1, keepdims=True)
            e = np.exp(y - ymax)
            logp = (y - ymax) - np.log(e.sum(axis=1, keepdims=True))
            return -logp[np.arange(b), self.labels].mean()
        err = y[:, 0] - self.labels
        return (err * err).mean()

    def loss_with_z_row(self, r: int, z_row: np.ndarray) -> np.longdouble:
        z = self.z.copy()
        z[:, r] = z_row
        fbar = self._defuzz(z)
        return self._loss_from_y(np.einsum("nr,nrc->nc", fbar, self.rule_out))

    def loss_with_y(self, y: np.ndarray) -> np.longdouble:
        return self._loss_from_y(y)


def finite_diff_grad(
    model: TskModel,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    loss: Loss,
    step: float = 1e-5,
) -> GradientSet:
    """Central-difference gradients (L(p+step) - L(p-step)) / (2 step)."""
    if step <= 0.0:
        raise ConfigError("finite-difference step must be positive")
    loss = _validate_loss(loss, model.num_classes)
    xs = np.atleast_2d(np.asarray(batch_x, dtype=np.float64))
    labels = np.asarray(batch_y)
    labels = labels.astype(np.int64 if loss is Loss.CROSS_ENTROPY else np.float64)
    state = _LongDoubleLoss(model, xs, labels, loss)
    h = np.longdouble(step)
    two_h = 2.0 * h

    r_n, d_n = model.centers.shape
    c_n = model.num_classes
    d_m = np.empty((r_n, d_n))
    d_w = np.empty((r_n, d_n))
    d_b = np.empty((r_n, d_n + 1, c_n))

    for r in range(r_n):
        center = state.centers[r].copy()
        width = state.widths[r].copy()
        for d in range(d_n):
            orig = center[d]
            center[d] = orig + h
            lp = state.loss_with_z_row(r, state._z_row(center, width))
            center[d] = orig - h
            lm = state.loss_with_z_row(r, state._z_row(center, width))
            center[d] = orig
            d_m[r, d] = float((lp - lm) / two_h)

            orig = width[d]
            width[d] = orig + h
            lp = state.loss_with_z_row(r, state._z_row(center, width))
            width[d] = orig - h
            lm = state.loss_with_z_row(r, state._z_row(center, width))
            width[d] = orig
            d_w[r, d] = float((lp - lm) / two_h)

    # A consequent perturbation shifts one output column by fbar[:, r] times
    # the parameter's input (1 for the bias, x[:, d] otherwise).
    ones = np.ones(xs.shape[0], dtype=np.longdouble)
    for r in range(r_n):
        fr = state.fbar[:, r]
        for dd in range(d_n + 1):
            xcol = ones if dd == 0 else state.xs[:, dd - 1]
            shift = fr * xcol * h
            for c in range(c_n):
                yp = state.y.copy()
                yp[:, c] += shift
                lp = state.loss_with_y(yp)
                yp[:, c] -= 2.0 * shift
                lm = state.loss_with_y(yp)
                d_b[r, dd, c] = float((lp - lm) / two_h)

    return GradientSet(d_m, d_w, d_b)


def relative_error(analytic: GradientSet, reference: GradientSet, floor: float = 1e-8) -> float:
    """Max elementwise |a - b| / max(|a|, |b|, floor) across all groups."""
    worst = 0.0
    for a, b in zip(analytic.as_list(), reference.as_list()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst
