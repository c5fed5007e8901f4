"""Training loop, loss, and dataset evaluation.

The loss is per-cell (or per-instance) cross-entropy; for board tasks a
mask restricts it to the cells that are not given. One optimizer step per
batch: forward under a tape, backward sweep, global-norm clipping, Adam.
All shuffling and phase-noise draws come from named streams of the train
seed, and batches reduce in canonical order, so two runs with the same
config and seed are bit-identical.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward_pass, value_of
from .errors import ConfigError, ShapeError
from .network import ModelConfig, forward, init_state
from .optim import Adam, clip_global_norm
from .parallel import ordered_map
from .rng import stream
from . import network as _network
from . import tasks as _tasks

__all__ = ["cross_entropy", "train", "evaluate", "batched_outputs",
           "TrainResult"]


def cross_entropy(output, labels: np.ndarray, mask=None):
    """Mean negative log-likelihood over the last axis.

    output: (..., K) logits; labels: integer array matching the leading
    shape; mask: optional weights over the leading shape (cells with mask
    0 contribute nothing; the mean divides by the mask total).
    """
    out_shape = value_of(output).shape
    k = out_shape[-1]
    labels = np.asarray(labels)
    if labels.shape != out_shape[:-1]:
        raise ShapeError(f"labels {labels.shape} do not match logits {out_shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ShapeError(f"labels must lie in [0, {k})")
    lsm = ad.log_softmax(output, axis=-1)
    onehot = np.eye(k, dtype=value_of(output).dtype)[labels]
    picked = ad.reduce_sum(ad.mul(lsm, onehot), axis=-1)
    if mask is None:
        return ad.mul(ad.reduce_mean(picked), -1.0)
    mask = np.asarray(mask, dtype=value_of(output).dtype)
    if mask.shape != labels.shape:
        raise ShapeError(f"mask {mask.shape} does not match labels {labels.shape}")
    total = float(mask.sum())
    if total <= 0:
        raise ShapeError("loss mask selects no cells")
    return ad.mul(ad.reduce_sum(ad.mul(picked, mask)), -1.0 / total)


def _exact_fraction(output_value: np.ndarray, labels: np.ndarray, mask) -> float:
    """Fraction of instances whose supervised cells are all correct."""
    pred = output_value.argmax(axis=-1)
    hit = pred == labels
    if mask is not None:
        hit = hit | (np.asarray(mask) == 0)
    flat = hit.reshape(hit.shape[0], -1)
    return float(flat.all(axis=1).mean())


def _epoch_lr(base: float, schedule: str, epoch: int, epochs: int) -> float:
    if schedule == "constant":
        return base
    if schedule == "cosine":
        return base * 0.5 * (1.0 + np.cos(np.pi * epoch / max(1, epochs)))
    raise ConfigError(f"unknown schedule '{schedule}'")


class TrainResult:
    """Final parameters plus one metrics row per epoch."""

    def __init__(self, params: dict, history: list):
        self.params = params
        self.history = history

    def metrics_jsonl(self) -> str:
        return "".join(json.dumps(row) + "\n" for row in self.history)


def train(params: dict, config: ModelConfig, x: np.ndarray, y: np.ndarray,
          mask=None, *, epochs: int, lr: float, batch: int, seed: int,
          schedule: str = "constant", weight_decay: float = 0.0,
          clip_norm: float = 10.0, target_accuracy: float | None = None,
          track_energy: bool = True, log=None) -> TrainResult:
    """Optimize params on encoded arrays; returns new params and history.

    Early stop: when target_accuracy is set and the epoch's exact-instance
    training accuracy reaches it, training ends after that epoch.
    """
    n = x.shape[0]
    if n == 0 or batch < 1 or epochs < 0:
        raise ConfigError("empty dataset, non-positive batch, or negative epochs")
    opt = Adam(lr=lr, weight_decay=weight_decay)
    params = dict(params)
    history = []
    track_energy = track_energy and config.interaction == "trig"

    for epoch in range(epochs):
        opt.lr = _epoch_lr(lr, schedule, epoch, epochs)
        perm = stream(f"train/shuffle/{epoch}", seed).permutation(n)
        losses, exacts, energies, counts = [], [], [], []
        for bi, lo in enumerate(range(0, n, batch)):
            idx = perm[lo:lo + batch]
            xb, yb = x[idx], y[idx]
            mb = None if mask is None else mask[idx]
            theta0 = init_state(config, len(idx), seed,
                                purpose=f"train/theta/{epoch}/{bi}")
            tape = Tape()
            leaves = {k: tape.leaf(v, name=k) for k, v in params.items()}
            result = forward(leaves, config, xb, theta0=theta0)
            loss = cross_entropy(result.output, yb, mb)
            grad_ids = backward_pass(tape, loss)
            grads = {k: grad_ids.get(t.nid) for k, t in leaves.items()}
            grads = {k: (np.zeros_like(params[k]) if g is None else g)
                     for k, g in grads.items()}
            grads, _ = clip_global_norm(grads, clip_norm)
            params = opt.step(params, grads)

            losses.append(float(value_of(loss)) * len(idx))
            exacts.append(_exact_fraction(value_of(result.output), yb, mb) * len(idx))
            counts.append(len(idx))
            if track_energy:
                coup = _network._layer_coupling(params, config, config.layers - 1)
                batch_e = _network.batch_state_energy(
                    value_of(result.theta_final), coup, config.interaction)
                energies.extend(batch_e or [])
        total = float(sum(counts))
        row = {
            "epoch": epoch,
            "loss": float(sum(losses) / total),
            "accuracy": float(sum(exacts) / total),
            "energy_mean": (float(np.mean(energies)) if energies else None),
            "lr": opt.lr,
        }
        history.append(row)
        if log is not None:
            log(row)
        if target_accuracy is not None and row["accuracy"] >= target_accuracy:
            break
    return TrainResult(params, history)


def batched_outputs(params: dict, config: ModelConfig, x: np.ndarray, *,
                    seed: int = 0, batch: int = 256, workers: int = 1,
                    want_theta: bool = False):
    """Head outputs over a batch of inputs, chunked and order-preserving.

    Initial phases come from one named stream per instance index, and the
    chunk boundaries depend only on `batch`, so the result is bit-identical
    for any worker count. (Chunk size itself can move low-order bits: BLAS
    picks different kernels for different matrix shapes.) want_theta
    additionally returns the final phase field.
    """
    n = x.shape[0]
    chunks = [(lo, min(lo + batch, n)) for lo in range(0, n, batch)]

    def run(span):
        lo, hi = span
        theta0 = np.concatenate([
            init_state(config, 1, seed, purpose=f"eval/theta/{i}")
            for i in range(lo, hi)
        ])
        result = forward(params, config, x[lo:hi], theta0=theta0)
        return value_of(result.output), value_of(result.theta_final)

    parts = ordered_map(run, chunks, workers)
    outputs = np.concatenate([p[0] for p in parts])
    if want_theta:
        return outputs, np.concatenate([p[1] for p in parts])
    return outputs


def evaluate(params: dict, config: ModelConfig, kind: str, instances: list,
             *, seed: int = 0, batch: int = 256, workers: int = 1) -> tuple:
    """Accuracy of the task-specific metric over a dataset.

    Returns (accuracy, per-instance flags). Each instance gets its own
    named phase-noise stream, so results do not depend on batching or on
    the worker count.
    """
    x, _, _ = _tasks.encode_batch(kind, instances)
    outputs = batched_outputs(params, config, x, seed=seed, batch=batch,
                              workers=workers)
    preds = _tasks.predictions_from_output(kind, instances, outputs)
    return _tasks.score_predictions(kind, instances, preds)
