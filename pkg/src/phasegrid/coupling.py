"""Coupling structures: how influence spreads between oscillators.

Three kinds share one `apply(influence, context)` interface:

* Dense: a d x d matrix acting on the flattened field.
* Stencil: a k x k cross-correlation over the spatial grid (zero padding).
* Attentive: state-dependent row-stochastic weights from scaled dot-product
  attention over all spatial positions, computed from the (sin, cos)
  embedding of the current phases and applied to projected influence values.

Also here: the non-overlapping N x N spatial grouping machinery (partition,
reassembly, patch broadcast) used for patch-level influence. All functions
accept plain ndarrays or autodiff Tensors.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .errors import ConfigError, ShapeError
from .rng import stream

__all__ = [
    "partition_groups", "reassemble_groups", "patch_broadcast",
    "DenseCoupling", "StencilCoupling", "AttentiveCoupling",
    "apply_coupling", "build_coupling",
]


def _spatial_split(shape, n):
    if len(shape) < 3:
        raise ShapeError(f"expected a (..., H, W, C) field, got shape {shape}")
    h, w = shape[-3], shape[-2]
    if n < 1 or h % n or w % n:
        raise ShapeError(f"group size {n} does not tile a {h}x{w} grid")
    return h // n, w // n


def partition_groups(field, n: int):
    """(..., H, W, C) -> (..., H/n, W/n, n, n, C) non-overlapping patches."""
    shape = value_of(field).shape
    hp, wp = _spatial_split(shape, n)
    c = shape[-1]
    lead = shape[:-3]
    k = len(lead)
    x = ad.reshape(field, lead + (hp, n, wp, n, c))
    axes = tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4)
    return ad.transpose(x, axes)


def reassemble_groups(patches):
    """Inverse of `partition_groups`, bit-exact."""
    shape = value_of(patches).shape
    if len(shape) < 5:
        raise ShapeError(f"expected (..., H/n, W/n, n, n, C) patches, got {shape}")
    hp, wp, n, n2, c = shape[-5:]
    if n != n2:
        raise ShapeError(f"patches must be square, got {n}x{n2}")
    lead = shape[:-5]
    k = len(lead)
    axes = tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4)
    x = ad.transpose(patches, axes)
    return ad.reshape(x, lead + (hp * n, wp * n, c))


def patch_broadcast(values, n: int):
    """(..., H/n, W/n, C) patch values -> (..., H, W, C), each patch value
    repeated over its n x n member positions."""
    shape = value_of(values).shape
    lead, (hp, wp, c) = shape[:-3], shape[-3:]
    x = ad.reshape(values, lead + (hp, 1, wp, 1, c))
    x = ad.broadcast_to(x, lead + (hp, n, wp, n, c))
    return ad.reshape(x, lead + (hp * n, wp * n, c))


class DenseCoupling:
    """All-to-all coupling: out_i = sum_j c_ij * influence_j on the
    flattened field."""

    kind = "dense"

    def __init__(self, matrix):
        m = value_of(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"dense coupling must be square, got {m.shape}")
        self.matrix = matrix
        self.d = m.shape[0]

    def apply(self, influence, context=None):
        shape = value_of(influence).shape
        # flatten trailing axes until they multiply to d
        prod, i = 1, len(shape)
        while prod < self.d and i > 0:
            i -= 1
            prod *= shape[i]
        if prod != self.d:
            raise ShapeError(
                f"field shape {shape} does not flatten to {self.d} oscillators"
            )
        lead = shape[:i] if i > 0 else (1,)
        flat = ad.reshape(influence, lead + (self.d,))
        out = ad.matmul(flat, ad.transpose(self.matrix, (1, 0)))
        return ad.reshape(out, shape)


class StencilCoupling:
    """Local coupling: k x k cross-correlation over the grid, zero padded."""

    kind = "stencil"

    def __init__(self, kernel):
        k = value_of(kernel)
        if k.ndim != 4 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ShapeError(
                f"stencil kernel must be (k, k, C, C) with odd k, got {k.shape}"
            )
        self.kernel = kernel

    def apply(self, influence, context=None):
        v = value_of(influence)
        if v.ndim == 3:
            out = ad.conv2d(ad.reshape(influence, (1,) + v.shape), self.kernel)
            return ad.reshape(out, value_of(out).shape[1:])
        if v.ndim == 4:
            return ad.conv2d(influence, self.kernel)
        raise ShapeError(f"stencil expects (..., H, W, C) field, got {v.shape}")


class AttentiveCoupling:
    """State-dependent coupling via single-head scaled dot-product attention.

    Queries and keys are built from the (sin, cos) embedding of the current
    phases: each C-channel half is projected by the same C x C tensor and
    the halves concatenated, giving 2C-dim features per position. Scores
    are scaled by 1/sqrt(2C) and softmaxed over all spatial positions, so
    the weight matrix is row-stochastic. Values are the projected influence.
    """

    kind = "attentive"

    def __init__(self, w_query, w_key, w_value):
        for name, w in (("query", w_query), ("key", w_key), ("value", w_value)):
            v = value_of(w)
            if v.ndim != 2 or v.shape[0] != v.shape[1]:
                raise ShapeError(f"{name} projection must be square, got {v.shape}")
        c = value_of(w_query).shape[0]
        if value_of(w_key).shape[0] != c or value_of(w_value).shape[0] != c:
            raise ShapeError("attentive projections must have matching dimension")
        self.w_query = w_query
        self.w_key = w_key
        self.w_value = w_value
        self.channels = c
        self.last_weights: np.ndarray | None = None

    def _features(self, sin_flat, cos_flat, w):
        return ad.concat([ad.matmul(sin_flat, w), ad.matmul(cos_flat, w)], -1)

    def _weights(self, context, flat_shape):
        sin_part, cos_part = context
        sin_flat = ad.reshape(sin_part, flat_shape)
        cos_flat = ad.reshape(cos_part, flat_shape)
        q = self._features(sin_flat, cos_flat, self.w_query)
        k = self._features(sin_flat, cos_flat, self.w_key)
        scores = ad.matmul(q, ad.transpose(k, _swap_last(value_of(k).ndim)))
        scores = ad.mul(scores, 1.0 / np.sqrt(2.0 * self.channels))
        return ad.softmax(scores, axis=-1)

    def apply(self, influence, context=None):
        if context is None:
            raise ShapeError("attentive coupling needs the (sin, cos) context")
        v = value_of(influence)
        squeeze = v.ndim == 3
        shape = ((1,) + v.shape) if squeeze else v.shape
        if len(shape) != 4:
            raise ShapeError(f"attentive expects (..., H, W, C) field, got {v.shape}")
        b, h, w, c = shape
        if c != self.channels:
            raise ShapeError(f"field has {c} channels, projections expect {self.channels}")
        flat = (b, h * w, c)
        ctx = tuple(
            ad.reshape(part, shape) if squeeze else part for part in context
        )
        weights = self._weights(ctx, flat)
        self.last_weights = np.array(value_of(weights))
        values = ad.matmul(ad.reshape(influence, flat), self.w_value)
        out = ad.matmul(weights, values)
        out = ad.reshape(out, shape)
        if squeeze:
            return ad.reshape(out, shape[1:])
        return out

    def attention_weights(self, context) -> np.ndarray:
        """Row-stochastic weights at the given context (no gradient)."""
        sin_part = value_of(context[0])
        cos_part = value_of(context[1])
        squeeze = sin_part.ndim == 3
        shape = ((1,) + sin_part.shape) if squeeze else sin_part.shape
        b, h, w, c = shape
        weights = self._weights(
            (sin_part.reshape(shape), cos_part.reshape(shape)), (b, h * w, c)
        )
        weights = value_of(weights)
        return weights[0] if squeeze else weights


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def apply_coupling(coupling, influence, context=None):
    """Apply a coupling to an influence field; context is the (sin, cos)
    embedding of the current phases (required for attentive)."""
    return coupling.apply(influence, context)


def build_coupling(kind: str, *, d: int | None = None, channels: int | None = None,
                   kernel_size: int = 3, init: str = "default", seed: int = 0,
                   kappa: float = 1.0, dtype=np.float64, purpose: str | None = None):
    """Construct a coupling with documented default initialization.

    dense inits: "identity", "zeros", "symmetric_normal" ((A + A^T)/2 with
    A_ij ~ N(0, 1/d)), "mean_field" (all entries kappa/d). stencil and
    attentive weights: uniform on +-1/sqrt(fan_in). purpose overrides the
    default RNG stream name "coupling/<kind>".
    """
    purpose = purpose or f"coupling/{kind}"
    if kind == "dense":
        if d is None:
            raise ConfigError("dense coupling needs d")
        if init in ("identity", "default"):
            m = np.eye(d, dtype=dtype)
        elif init == "zeros":
            m = np.zeros((d, d), dtype=dtype)
        elif init == "symmetric_normal":
            a = stream(purpose, seed).normal(0.0, np.sqrt(1.0 / d), (d, d))
            m = ((a + a.T) / 2.0).astype(dtype)
        elif init == "mean_field":
            m = np.full((d, d), kappa / d, dtype=dtype)
        else:
            raise ConfigError(f"unknown dense init '{init}'")
        return DenseCoupling(m)
    if kind == "stencil":
        if channels is None:
            raise ConfigError("stencil coupling needs channels")
        fan_in = kernel_size * kernel_size * channels
        bound = 1.0 / np.sqrt(fan_in)
        k = stream(purpose, seed).uniform(
            -bound, bound, (kernel_size, kernel_size, channels, channels)
        ).astype(dtype)
        return StencilCoupling(k)
    if kind == "attentive":
        if channels is None:
            raise ConfigError("attentive coupling needs channels")
        bound = 1.0 / np.sqrt(channels)
        rng = stream(purpose, seed)
        wq, wk, wv = (
            rng.uniform(-bound, bound, (channels, channels)).astype(dtype)
            for _ in range(3)
        )
        return AttentiveCoupling(wq, wk, wv)
    raise ConfigError(f"unknown coupling kind '{kind}'")
