"""Soft segmentation losses for the class-imbalanced binary setting.

Predictions are (N,H,W,2) softmax probabilities with the foreground on
channel 0; targets are (N,H,W) binary labels. Soft true/false positive and
negative counts are pooled over the whole batch. Everything here returns a
scalar GraphNode and is differentiable, so the same code drives training and
forward-only evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import GraphNode, as_node, constant, get_default_dtype

__all__ = [
    "LossConfig",
    "alpha_weighted_cross_entropy",
    "cross_entropy",
    "dice_ce_loss",
    "focal_loss",
    "focal_tversky_loss",
    "hybrid_focal_loss",
    "soft_dice",
    "tversky_index",
    "tversky_loss",
]


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the loss family (reported optima for this task).

    tversky_alpha/beta weight soft false positives/negatives; focal_alpha
    balances foreground vs background pixels, focal_gamma down-weights easy
    pixels; ftl_gamma is the exponent on the Tversky complement; smooth is
    the ratio-loss smoothing and log-clip epsilon.
    """

    tversky_alpha: float = 0.3
    tversky_beta: float = 0.7
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    ftl_gamma: float = 0.75
    smooth: float = 1e-6

    def __post_init__(self):
        if self.tversky_alpha < 0 or self.tversky_beta < 0:
            raise ValueError("tversky weights must be >= 0")
        if self.focal_gamma < 0 or self.ftl_gamma <= 0:
            raise ValueError("focal exponents must be positive")
        if self.smooth <= 0:
            raise ValueError("smoothing must be > 0")


DEFAULT = LossConfig()


def _target(target) -> np.ndarray:
    return np.asarray(target, dtype=get_default_dtype())


def _soft_counts(pred: GraphNode, target):
    """Soft (TP, FP, FN) pooled over the batch."""
    pred = as_node(pred)
    g0 = _target(target)
    g1 = 1.0 - g0
    p0 = T.take_channel(pred, 0)
    p1 = T.take_channel(pred, 1)
    tp = T.sum_all(T.mul(p0, constant(g0)))
    fp = T.sum_all(T.mul(p0, constant(g1)))
    fn = T.sum_all(T.mul(p1, constant(g0)))
    return tp, fp, fn


def soft_dice(pred, target, config: LossConfig = DEFAULT) -> GraphNode:
    """Soft Dice similarity 2TP/(2TP + FP + FN), smoothed; 1 on a perfect match."""
    tp, fp, fn = _soft_counts(pred, target)
    s = config.smooth
    return (2.0 * tp + s) / (2.0 * tp + fp + fn + s)


def tversky_index(pred, target, alpha: float = None, beta: float = None,
                  config: LossConfig = DEFAULT) -> GraphNode:
    """Soft TP/(TP + a*FP + b*FN); a = b = 1/2 recovers the soft Dice.

    Smoothing uses half the configured epsilon so that the half/half case
    equals soft_dice exactly (both expressions are then power-of-two
    rescalings of each other, which IEEE arithmetic preserves bitwise).
    """
    alpha = config.tversky_alpha if alpha is None else alpha
    beta = config.tversky_beta if beta is None else beta
    tp, fp, fn = _soft_counts(pred, target)
    half = 0.5 * config.smooth
    return (tp + half) / (tp + alpha * fp + beta * fn + half)


def tversky_loss(pred, target, alpha: float = None, beta: float = None,
                 config: LossConfig = DEFAULT) -> GraphNode:
    return 1.0 - tversky_index(pred, target, alpha, beta, config)


def focal_tversky_loss(pred, target, gamma: float = None,
                       config: LossConfig = DEFAULT) -> GraphNode:
    """(1 - TI)**gamma; gamma = 1 recovers the Tversky loss."""
    gamma = config.ftl_gamma if gamma is None else gamma
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return T.power(tversky_loss(pred, target, config=config), gamma)


def cross_entropy(pred, target, config: LossConfig = DEFAULT) -> GraphNode:
    """Mean binary cross entropy on the foreground channel, log-clipped."""
    pred = as_node(pred)
    g = _target(target)
    p = T.clip(T.take_channel(pred, 0), config.smooth, 1.0 - config.smooth)
    ll = T.add(T.mul(constant(g), T.log(p)),
               T.mul(constant(1.0 - g), T.log(1.0 - p)))
    return T.neg(T.mean(ll))


def _pt_and_weights(pred, target, alpha, config):
    """True-class probability p_t and the alpha class-balance weights."""
    pred = as_node(pred)
    g = _target(target)
    p0 = T.take_channel(pred, 0)
    pt = T.add(T.mul(constant(g), p0), T.mul(constant(1.0 - g), 1.0 - p0))
    pt = T.clip(pt, config.smooth, 1.0 - config.smooth)
    weights = np.where(g > 0.5, alpha, 1.0 - alpha).astype(g.dtype)
    return pt, constant(weights)


def alpha_weighted_cross_entropy(pred, target, alpha: float = None,
                                 config: LossConfig = DEFAULT) -> GraphNode:
    """Class-balanced CE: mean of alpha_t * (-log p_t)."""
    alpha = config.focal_alpha if alpha is None else alpha
    pt, weights = _pt_and_weights(pred, target, alpha, config)
    return T.mean(T.mul(weights, T.neg(T.log(pt))))


def focal_loss(pred, target, alpha: float = None, gamma: float = None,
               config: LossConfig = DEFAULT) -> GraphNode:
    """Mean of alpha_t * (1 - p_t)**gamma * (-log p_t).

    gamma = 0 reduces exactly to the alpha-weighted cross entropy.
    """
    alpha = config.focal_alpha if alpha is None else alpha
    gamma = config.focal_gamma if gamma is None else gamma
    pt, weights = _pt_and_weights(pred, target, alpha, config)
    modulator = T.power(1.0 - pt, gamma)
    return T.mean(T.mul(T.mul(weights, modulator), T.neg(T.log(pt))))


def dice_ce_loss(pred, target, config: LossConfig = DEFAULT) -> GraphNode:
    """(1 - soft Dice) + cross entropy; the plain-segmentation baseline."""
    return T.add(1.0 - soft_dice(pred, target, config),
                 cross_entropy(pred, target, config))


def hybrid_focal_loss(pred, target, config: LossConfig = DEFAULT) -> GraphNode:
    """Focal Tversky loss + focal loss."""
    return T.add(focal_tversky_loss(pred, target, config=config),
                 focal_loss(pred, target, config=config))
