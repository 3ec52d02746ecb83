"""Loss functions. Each returns ``(loss, gradient w.r.t. its first argument)``."""
from __future__ import annotations

import numpy as np

from .layers import sigmoid, softmax

EPS = 1e-7


def binary_crossentropy(p, p_star):
    """Mean binary cross-entropy of probabilities ``p`` against 0/1 targets."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(p_star, dtype=np.float64)
    n = max(p.size, 1)
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) / n
    grad = (pc - y) / (pc * (1.0 - pc)) / n
    grad = np.where((p > EPS) & (p < 1.0 - EPS), grad, 0.0)
    return float(loss), grad


def sigmoid_binary_crossentropy(logits, p_star):
    """Binary cross-entropy of ``sigmoid(logits)``; gradient is w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(p_star, dtype=np.float64)
    n = max(z.size, 1)
    # log(1 + exp(-|z|)) form is stable for large |z|
    loss = np.sum(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))) / n
    grad = (sigmoid(z) - y) / n
    return float(loss), grad


def categorical_crossentropy(p, p_star):
    """Mean over rows of ``-sum(p_star * log p)``."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(p_star, dtype=np.float64)
    n = max(p.shape[0], 1) if p.ndim > 1 else 1
    pc = np.clip(p, EPS, 1.0)
    loss = -np.sum(y * np.log(pc)) / n
    grad = np.where(p > EPS, -y / pc, 0.0) / n
    return float(loss), grad


def softmax_crossentropy(logits, p_star, weights=None):
    """Categorical cross-entropy of ``softmax(logits)``; gradient ``(p - p_star)/N`` w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(p_star, dtype=np.float64)
    n = max(z.shape[0], 1)
    p = softmax(z)
    logp = z - z.max(axis=-1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=-1, keepdims=True))
    loss = -np.sum(y * np.maximum(logp, np.log(EPS))) / n
    grad = (p - y) / n
    return float(loss), grad


def smooth_l1(t, t_star):
    """Summed smooth L1: ``0.5 d^2`` for ``|d| < 1``, else ``|d| - 0.5``."""
    d = np.asarray(t, dtype=np.float64) - np.asarray(t_star, dtype=np.float64)
    ad = np.abs(d)
    small = ad < 1.0
    loss = np.sum(np.where(small, 0.5 * d * d, ad - 0.5))
    grad = np.where(small, d, np.sign(d))
    return float(loss), grad
