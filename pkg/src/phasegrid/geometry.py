"""Phase geometry on the circle.

Phases live in the half-open interval [-pi, pi); pi itself wraps to -pi.
Everything else in the package leans on the helpers here: `wrap` is the one
place the interval convention is encoded, `embed_circle` / `recover_phase`
move between angles and their (sin, cos) embedding, and `order_parameter`
summarizes synchrony of a population.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi

__all__ = [
    "wrap",
    "CircleEmbedding",
    "embed_circle",
    "recover_phase",
    "order_parameter",
    "PhaseHistogram",
    "phase_histogram",
]


def wrap(angle):
    """Wrap angles into [-pi, pi); pi maps to -pi.

    Accepts scalars or arrays of any shape. Non-finite input is a
    DomainError rather than a silent NaN propagation.
    """
    a = np.asarray(angle, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DomainError("wrap: input contains non-finite values")
    out = np.mod(a + np.pi, TWO_PI) - np.pi
    # float rounding in mod can land exactly on pi for inputs a hair
    # below an odd multiple of pi; fold those onto -pi
    out = np.where(out >= np.pi, out - TWO_PI, out)
    # already-wrapped values pass through bit for bit (the add/mod round
    # trip above costs up to 1 ulp, which would break fixed-point checks)
    out = np.where((a >= -np.pi) & (a < np.pi), a, out)
    if a.ndim == 0:
        return float(out)
    return out


class CircleEmbedding(NamedTuple):
    """(sin, cos) pair of equal-shaped arrays embedding phases in R^2."""

    sin_part: np.ndarray
    cos_part: np.ndarray


def embed_circle(theta) -> CircleEmbedding:
    """Embed phases on the unit circle: theta -> (sin theta, cos theta)."""
    t = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise DomainError("embed_circle: input contains non-finite values")
    return CircleEmbedding(np.sin(t), np.cos(t))


def recover_phase(sin_part, cos_part):
    """Recover wrapped phases from a circle embedding via atan2.

    The embedding does not need unit norm; any (y, x) with y^2 + x^2 > 0 is
    accepted. A zero vector has no direction and raises DomainError.
    """
    y = np.asarray(sin_part, dtype=np.float64)
    x = np.asarray(cos_part, dtype=np.float64)
    if y.shape != x.shape:
        raise DomainError(
            f"recover_phase: sin part shape {y.shape} != cos part shape {x.shape}"
        )
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise DomainError("recover_phase: input contains non-finite values")
    if np.any((y == 0.0) & (x == 0.0)):
        raise DomainError("recover_phase: zero vector has undefined phase")
    return wrap(np.arctan2(y, x))


def order_parameter(theta) -> tuple[float, float]:
    """Circular mean statistics of a phase population.

    Returns (R, psi): R in [0, 1] is the magnitude of the mean unit vector
    (1 = perfect synchrony), psi in [-pi, pi) its direction. R is invariant
    under a global phase shift; psi shifts along with the population.
    """
    t = np.asarray(theta, dtype=np.float64).ravel()
    if t.size == 0:
        raise DomainError("order_parameter: empty phase set")
    if not np.all(np.isfinite(t)):
        raise DomainError("order_parameter: input contains non-finite values")
    s = np.sin(t).mean()
    c = np.cos(t).mean()
    r = float(min(np.hypot(s, c), 1.0))
    psi = wrap(float(np.arctan2(s, c)))
    return r, psi


class PhaseHistogram(NamedTuple):
    """Histogram of phases over equal-width bins partitioning [-pi, pi)."""

    bin_edges: np.ndarray  # length bins + 1, from -pi to pi
    counts: np.ndarray  # length bins, integer

    def to_json(self) -> str:
        return json.dumps(
            {
                "bin_edges": [float(e) for e in self.bin_edges],
                "counts": [int(c) for c in self.counts],
            }
        )


def phase_histogram(theta, bins: int) -> PhaseHistogram:
    """Bin wrapped phases into `bins` equal-width half-open bins.

    Every phase lands in exactly one bin; counts sum to the input size.
    """
    if bins < 1:
        raise DomainError(f"phase_histogram: bins must be >= 1, got {bins}")
    t = wrap(np.asarray(theta, dtype=np.float64).ravel())
    width = TWO_PI / bins
    idx = np.floor((t + np.pi) / width).astype(np.int64)
    # defensive clamp: t < pi guarantees idx <= bins - 1 except for float
    # edge rounding at the last bin boundary
    idx = np.clip(idx, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    edges = -np.pi + width * np.arange(bins + 1)
    edges[-1] = np.pi
    return PhaseHistogram(edges, counts)
