"""Estimator facade over the functional core.

PhaseGridClassifier labels whole images; PhaseGridSolver labels every
grid cell. Both follow the usual estimator conventions: constructor
arguments are stored verbatim, fitting populates trailing-underscore
attributes, get_params/set_params/clone work as expected.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, ShapeError
from .network import ModelConfig, init_params
from .training import batched_outputs, train
from .validation import (as_cell_labels, as_cell_mask, as_image_batch,
                         as_label_array)
from .voting import VoteConfig, vote_on_input

__all__ = ["PhaseGridClassifier", "PhaseGridSolver"]


class _OscillatorEstimator(BaseEstimator):
    """Shared fit/inference plumbing; subclasses define the head."""

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def _build_config(self, input_size, input_channels, head, head_out):
        return ModelConfig(
            layers=self.layers,
            steps=self.steps,
            channels=self.channels,
            input_size=input_size,
            input_channels=input_channels,
            head=head,
            head_out=head_out,
            patch_size=self.patch_size,
            group_size=self.group_size,
            gamma=self.gamma,
            interaction=self.interaction,
            mlp_hidden=self.mlp_hidden,
            coupling=self.coupling,
            stencil_size=self.stencil_size,
            sigma_init=self.sigma_init,
        )

    def _fit_arrays(self, config, x, y, mask):
        seed = self._seed()
        params = init_params(config, seed)
        result = train(
            params, config, x, y, mask,
            epochs=self.epochs, lr=self.lr, batch=self.batch, seed=seed,
            schedule=self.schedule, weight_decay=self.weight_decay,
            clip_norm=self.clip_norm, target_accuracy=self.target_accuracy,
            track_energy=False,
        )
        self.config_ = config
        self.params_ = result.params
        self.history_ = result.history
        self.n_iter_ = len(result.history)
        self.seed_ = seed
        self.n_features_in_ = int(np.prod(x.shape[1:]))
        return self

    def _checked_batch(self, x_like) -> np.ndarray:
        check_is_fitted(self)
        x, size, chans = as_image_batch(x_like)
        cfg = self.config_
        if tuple(size) != tuple(cfg.input_size) or chans != cfg.input_channels:
            raise ShapeError(
                f"fitted on {cfg.input_size} x {cfg.input_channels} inputs, "
                f"got {tuple(size)} x {chans}"
            )
        return x

    def _outputs(self, x_like) -> np.ndarray:
        x = self._checked_batch(x_like)
        return batched_outputs(self.params_, self.config_, x,
                               seed=self.seed_, workers=self.workers)

    def transform(self, X) -> np.ndarray:
        """Final phase field per input, flattened to (n, h * w * C)."""
        x = self._checked_batch(X)
        _, theta = batched_outputs(self.params_, self.config_, x,
                                   seed=self.seed_, workers=self.workers,
                                   want_theta=True)
        return theta.reshape(theta.shape[0], -1)

    def fit_transform(self, X, y, **fit_kwargs) -> np.ndarray:
        return self.fit(X, y, **fit_kwargs).transform(X)


class PhaseGridClassifier(ClassifierMixin, _OscillatorEstimator):
    """Whole-image classifier driven by oscillator dynamics.

    Phases settle over `steps` update rounds per layer; the head pools
    the final phase field into one logit vector per image.
    """

    def __init__(self, layers=1, steps=8, channels=16, patch_size=2,
                 group_size=1, gamma=1.0, interaction="trig",
                 coupling="attentive", mlp_hidden=16, stencil_size=3,
                 sigma_init=1.0, epochs=10, lr=3e-3, batch=32,
                 schedule="constant", weight_decay=0.0, clip_norm=10.0,
                 target_accuracy=None, random_state=0, workers=1):
        self.layers = layers
        self.steps = steps
        self.channels = channels
        self.patch_size = patch_size
        self.group_size = group_size
        self.gamma = gamma
        self.interaction = interaction
        self.coupling = coupling
        self.mlp_hidden = mlp_hidden
        self.stencil_size = stencil_size
        self.sigma_init = sigma_init
        self.epochs = epochs
        self.lr = lr
        self.batch = batch
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.target_accuracy = target_accuracy
        self.random_state = random_state
        self.workers = workers

    def fit(self, X, y):
        x, size, chans = as_image_batch(X)
        labels = as_label_array(y, x.shape[0])
        self.classes_, y_idx = np.unique(labels, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("classification needs at least 2 classes")
        config = self._build_config(size, chans, "classifier",
                                    len(self.classes_))
        return self._fit_arrays(config, x, y_idx.astype(np.int64), None)

    def decision_function(self, X) -> np.ndarray:
        return self._outputs(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self._outputs(X)
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        outputs = self._outputs(X)  # raises before classes_ is touched
        return self.classes_[outputs.argmax(axis=-1)]


class PhaseGridSolver(_OscillatorEstimator):
    """Per-cell labeler for grid puzzles (paths, boards).

    y holds one integer label per cell; an optional fit mask restricts
    the loss to cells that are actually unknown.
    """

    def __init__(self, layers=1, steps=16, channels=32, patch_size=1,
                 group_size=1, gamma=1.0, interaction="trig",
                 coupling="attentive", mlp_hidden=16, stencil_size=3,
                 sigma_init=1.0, epochs=10, lr=3e-3, batch=32,
                 schedule="constant", weight_decay=0.0, clip_norm=10.0,
                 target_accuracy=None, random_state=0, workers=1):
        self.layers = layers
        self.steps = steps
        self.channels = channels
        self.patch_size = patch_size
        self.group_size = group_size
        self.gamma = gamma
        self.interaction = interaction
        self.coupling = coupling
        self.mlp_hidden = mlp_hidden
        self.stencil_size = stencil_size
        self.sigma_init = sigma_init
        self.epochs = epochs
        self.lr = lr
        self.batch = batch
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.target_accuracy = target_accuracy
        self.random_state = random_state
        self.workers = workers

    def fit(self, X, y, mask=None):
        x, size, chans = as_image_batch(X)
        cells = (size[0] // self.patch_size, size[1] // self.patch_size)
        labels = as_cell_labels(y, x.shape[0], cells)
        n_labels = int(labels.max()) + 1
        if n_labels < 2:
            raise ConfigError("cell labeling needs at least 2 label values")
        if mask is not None:
            mask = as_cell_mask(mask, x.shape[0], cells)
        config = self._build_config(size, chans, "per_cell", n_labels)
        self._fit_arrays(config, x, labels, mask)
        self.n_labels_ = n_labels
        return self

    def predict(self, X) -> np.ndarray:
        return self._outputs(X).argmax(axis=-1)

    def predict_vote(self, X, k: int = 8, t_eval: int | None = None,
                     base_seed: int = 0) -> np.ndarray:
        """Energy-voted predictions: K random phase initializations per
        input, keep the candidate with the lowest final energy."""
        x = self._checked_batch(X)
        vc = VoteConfig(k=k, t_eval=t_eval, base_seed=base_seed)
        preds = [
            np.asarray(vote_on_input(self.params_, self.config_, x[i], vc,
                                     workers=self.workers)["prediction"])
            for i in range(x.shape[0])
        ]
        return np.stack(preds)

    def score(self, X, y, mask=None) -> float:
        """Fraction of instances with every (masked) cell correct."""
        x = self._checked_batch(X)
        cells = tuple(self.config_.state_size())
        labels = as_cell_labels(y, x.shape[0], cells)
        pred = self._outputs(X).argmax(axis=-1)
        hit = pred == labels
        if mask is not None:
            keep = as_cell_mask(mask, x.shape[0], cells) > 0
            per = [bool(np.all(h[m])) for h, m in zip(hit, keep)]
        else:
            per = [bool(np.all(h)) for h in hit]
        return float(np.mean(per))
