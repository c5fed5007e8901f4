"""Optimization: global-norm gradient clipping and Adam.

Adam keeps first/second moment estimates per parameter with bias
correction; weight decay is decoupled (applied directly to the weights,
not through the gradient), so decay 0 recovers plain Adam.
"""

from __future__ import annotations

import numpy as np

__all__ = ["clip_global_norm", "Adam"]


def clip_global_norm(grads: dict, max_norm: float) -> tuple:
    """Scale all gradients by min(1, max_norm / global_norm).

    Returns (clipped gradients, global norm before clipping).
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm <= 0 or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}, norm


class Adam:
    """Adam with bias correction and optional decoupled weight decay."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        """One update; returns a new params dict (inputs untouched)."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out = {}
        for name in params:
            p = params[name]
            g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=p.dtype)
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(p)
                v = np.zeros_like(p)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name] = m
            self.v[name] = v
            m_hat = m / np.asarray(bc1, dtype=p.dtype)
            v_hat = v / np.asarray(bc2, dtype=p.dtype)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * p
            out[name] = (p - update.astype(p.dtype)).astype(p.dtype)
        return out
