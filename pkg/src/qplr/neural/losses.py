"""Targets and cross-entropy losses."""
from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from .layers import softmax

LOG_FLOOR = 1e-12


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ContractViolation(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def smooth_labels(labels, num_classes: int, epsilon: float) -> np.ndarray:
    """``1 - eps`` on the true class, ``eps / (K - 1)`` on every other class.

    Accepts one class index (returns shape ``(K,)``) or an array of them.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ContractViolation(f"epsilon must be in [0, 1), got {epsilon}")
    scalar = np.ndim(labels) == 0
    hot = one_hot(labels, num_classes)
    out = np.where(hot == 1.0, 1.0 - epsilon, epsilon / (num_classes - 1))
    return out[0] if scalar else out


def _check_targets(target: np.ndarray) -> None:
    sums = target.sum(axis=-1)
    if np.any(target < 0) or np.any(np.abs(sums - 1.0) > 1e-6):
        raise ContractViolation("targets must be probability vectors summing to 1")


def soft_cross_entropy(pred, target) -> float:
    """``-sum_k target_k log pred_k``, averaged over the batch when 2-D."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractViolation(f"prediction shape {pred.shape} != target shape {target.shape}")
    _check_targets(target)
    per_sample = -(target * np.log(np.maximum(pred, LOG_FLOOR))).sum(axis=-1)
    return float(np.mean(per_sample))


def softmax_cross_entropy(logits: np.ndarray, target: np.ndarray, weights=None):
    """Soft-target CE on logits; returns ``(loss, grad_logits)``.

    ``weights`` (per-sample, e.g. a 0/1 mask) rescales each sample's term; the
    loss is their weighted mean.
    """
    probs = softmax(logits)
    target = np.asarray(target, dtype=np.float64)
    per_sample = -(target * np.log(np.maximum(probs, LOG_FLOOR))).sum(axis=-1)
    w = np.ones(len(probs)) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ContractViolation("no samples carry weight in this batch")
    grad = (probs * target.sum(axis=-1, keepdims=True) - target) * (w / total)[:, None]
    return float((per_sample * w).sum() / total), grad


def entropy(p, axis=-1) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return -(p * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=axis)
