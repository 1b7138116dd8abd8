"""Training objectives with analytic gradients: MSE and soft Dice.

Both losses are framework-free functions over numpy arrays. Gradients are
taken with respect to the prediction argument only; any squashing (sigmoid,
softmax) backpropagates inside the network graph, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInputError, NotNormalizedError, ShapeMismatchError

DICE_SMOOTH = 1e-6


@dataclass(frozen=True)
class LossValue:
    value: float
    grad: np.ndarray


def mse(pred: np.ndarray, target: np.ndarray) -> LossValue:
    """Mean squared error over all elements; grad_i = 2 (pred_i - target_i) / n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeMismatchError("mse needs at least one element")
    diff = pred - target
    n = pred.size
    return LossValue(value=float(np.mean(diff * diff)), grad=2.0 * diff / n)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NonFiniteInputError("softmax input must be finite")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def soft_dice(probs: np.ndarray, onehot: np.ndarray, smooth: float = DICE_SMOOTH) -> LossValue:
    """Soft Dice loss over N pixels and C classes.

    value = 1 - (1/C) * sum_c (2 * sum_i p*g + smooth) / (sum_i p + sum_i g + smooth)

    The smoothing constant sits in both numerator and denominator: a class
    absent from probs and onehot alike then contributes dice 1 (loss 0),
    which is the intended "nothing to segment, nothing wrong" reading of the
    otherwise-undefined 0/0 term.
    """
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.ndim != 2 or probs.shape != onehot.shape:
        raise ShapeMismatchError(f"probs {probs.shape} vs onehot {onehot.shape}")
    n, c = probs.shape
    if c < 2:
        raise ShapeMismatchError(f"soft_dice needs >= 2 classes, got {c}")
    if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-5:
        raise NotNormalizedError("probability rows must sum to 1 (post-softmax)")
    if not (np.isin(onehot, (0.0, 1.0)).all() and (onehot.sum(axis=1) == 1.0).all()):
        raise NotNormalizedError("onehot rows must be exact one-hot")

    numer = 2.0 * np.sum(probs * onehot, axis=0) + smooth   # per class
    denom = np.sum(probs, axis=0) + np.sum(onehot, axis=0) + smooth
    dice = numer / denom
    value = 1.0 - float(dice.mean())
    # quotient rule: d dice_c / d p_ic = (2 g_ic * denom_c - numer_c) / denom_c^2
    grad = -(2.0 * onehot * denom - numer) / (denom * denom) / c
    return LossValue(value=value, grad=grad)
