"""Oscillator dynamics: right-hand sides, steppers, rollouts.

The pulse-coupled form separates a sensitivity S(theta_i) on the receiving
oscillator from an influence I(theta_j) of the senders:

    dtheta_i = omega_i + S(theta_i) * [coupling applied to influence]_i

The sine-coupled form depends only on phase differences,

    dtheta_i = omega_i + gamma * sum_j K_ij sin(theta_j - theta_i),

and its generalization adds q * sin(theta_j + theta_i) inside the sum,
which breaks the global rotation symmetry for q != 0. At q = 1 the sum
collapses to the separable product 2 cos(theta_i) sum_j K_ij sin(theta_j).

The discrete update used by the trainable network applies a single step
size gamma to the whole rhs bracket (intrinsic rates included) and wraps:

    theta' = wrap(theta + gamma * rhs).

Everything here accepts plain ndarrays or autodiff Tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .coupling import apply_coupling, partition_groups, patch_broadcast
from .errors import ConfigError, ShapeError
from .geometry import order_parameter

__all__ = [
    "TrigFns", "MlpFns", "scalar_mlp",
    "kuramoto_rhs", "generalized_rhs", "winfree_rhs",
    "discrete_step", "rk4_step", "rollout", "TrajectoryRecord",
]


# ---------------------------------------------------------------------------
# interaction functions
# ---------------------------------------------------------------------------


class TrigFns:
    """Classical trigonometric interaction: S = cos, influence = sin.

    For group size n > 1 the influence of a patch is the mean of sin over
    its members (which reduces to plain sin at n = 1), broadcast back to
    every member position.
    """

    kind = "trig"

    def sensitivity(self, sin_t, cos_t):
        return cos_t

    def influence(self, sin_t, cos_t, group_size: int = 1):
        if group_size == 1:
            return sin_t
        patches = partition_groups(sin_t, group_size)
        means = ad.reduce_mean(patches, axis=(-3, -2))
        return patch_broadcast(means, group_size)


def scalar_mlp(sin_t, cos_t, w1, b1, w2, b2):
    """Per-oscillator scalar map on (sin t, cos t): 2 -> hidden -> 1, tanh."""
    shape = value_of(sin_t).shape
    x = ad.concat(
        [ad.reshape(sin_t, shape + (1,)), ad.reshape(cos_t, shape + (1,))], -1
    )
    h = ad.tanh(ad.add(ad.matmul(x, w1), b1))
    y = ad.add(ad.matmul(h, w2), b2)
    return ad.reshape(y, shape)


class MlpFns:
    """Learned interaction: S and I are small pointwise networks.

    The sensitivity is always a per-oscillator scalar 2-layer perceptron on
    (sin t, cos t). The influence is the matching pointwise perceptron when
    group_size = 1; for larger groups it is a learned affine map from the
    patch's concatenated (sin, cos) values to one C-vector per patch.
    """

    kind = "mlp"

    def __init__(self, s_params: dict, i_params: dict):
        self.s_params = s_params
        self.i_params = i_params

    def sensitivity(self, sin_t, cos_t):
        p = self.s_params
        return scalar_mlp(sin_t, cos_t, p["w1"], p["b1"], p["w2"], p["b2"])

    def influence(self, sin_t, cos_t, group_size: int = 1):
        p = self.i_params
        if group_size == 1:
            if "w1" not in p:
                raise ConfigError("pointwise influence perceptron missing for group_size 1")
            return scalar_mlp(sin_t, cos_t, p["w1"], p["b1"], p["w2"], p["b2"])
        if "w" not in p:
            raise ConfigError("patch affine influence missing for group_size > 1")
        sp = partition_groups(sin_t, group_size)
        cp = partition_groups(cos_t, group_size)
        shape = value_of(sp).shape  # (..., Hp, Wp, n, n, C)
        lead = shape[:-3]
        flat = lead + (shape[-3] * shape[-2] * shape[-1],)
        x = ad.concat([ad.reshape(sp, flat), ad.reshape(cp, flat)], -1)
        vals = ad.add(ad.matmul(x, p["w"]), p["b"])
        return patch_broadcast(vals, group_size)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _pairwise_sum(theta, k_matrix, q: float):
    """sum_j K_ij [sin(t_j - t_i) + q sin(t_j + t_i)] over the last axis."""
    t = np.asarray(theta, dtype=np.float64)
    k = np.asarray(k_matrix, dtype=np.float64)
    d = t.shape[-1]
    if k.shape != (d, d):
        raise ShapeError(f"coupling matrix {k.shape} does not match {d} oscillators")
    ti = t[..., :, None]  # receiver index i
    tj = t[..., None, :]  # sender index j
    terms = np.sin(tj - ti)
    if q != 0.0:
        terms = terms + q * np.sin(tj + ti)
    return np.einsum("ij,...ij->...i", k, terms)


def kuramoto_rhs(theta, omega, k_matrix, gamma: float):
    """Sine-coupled rhs: omega_i + gamma * sum_j K_ij sin(theta_j - theta_i).

    theta: (..., d) phases (batched over leading axes); omega: (d,) or
    broadcastable. Analysis-grade (float64 numpy).
    """
    return np.asarray(omega, dtype=np.float64) + gamma * _pairwise_sum(
        theta, k_matrix, 0.0
    )


def generalized_rhs(theta, omega, k_matrix, gamma: float, q: float):
    """Sine-coupled rhs with the symmetry-breaking q sin(theta_j + theta_i)
    term; q = 0 recovers `kuramoto_rhs` exactly."""
    return np.asarray(omega, dtype=np.float64) + gamma * _pairwise_sum(
        theta, k_matrix, q
    )


def winfree_rhs(theta, omega, fns, coupling, group_size: int = 1):
    """Pulse-coupled rhs: omega + S(theta) * coupled influence.

    No step size here: the discrete stepper applies gamma to this whole
    bracket. Works on flat (d,) systems (group_size 1, dense coupling) and
    on (..., H, W, C) fields; Tensors flow through for training.
    """
    sin_t = ad.sin(theta)
    cos_t = ad.cos(theta)
    sens = fns.sensitivity(sin_t, cos_t)
    infl = fns.influence(sin_t, cos_t, group_size)
    coupled = apply_coupling(coupling, infl, context=(sin_t, cos_t))
    return ad.add(omega, ad.mul(sens, coupled))


def discrete_step(theta, rhs_value, gamma: float):
    """One network step: wrap(theta + gamma * rhs)."""
    return ad.wrap_angle(ad.add(theta, ad.mul(rhs_value, gamma)))


def rk4_step(theta, rhs_fn, dt: float):
    """Classic fourth-order step for continuous-time analysis.

    The rhs must be 2*pi periodic (all of the ones here are), so no
    wrapping is needed inside the stage evaluations; the result is
    returned unwrapped.
    """
    t = np.asarray(theta, dtype=np.float64)
    k1 = rhs_fn(t)
    k2 = rhs_fn(t + 0.5 * dt * k1)
    k3 = rhs_fn(t + 0.5 * dt * k2)
    k4 = rhs_fn(t + dt * k3)
    return t + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Per-step snapshots of a rollout.

    `thetas[k]` is the state after step k+1; energies hold the interaction
    energy when the regime defines one (None otherwise). Extra diagnostic
    channels (omega snapshots, layer indices) are kept for inspection but
    not serialized.
    """

    thetas: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    order_r: list = field(default_factory=list)
    omegas: list = field(default_factory=list)
    layers: list = field(default_factory=list)

    def append(self, theta: np.ndarray, energy=None, omega=None, layer=None):
        self.thetas.append(np.array(theta))
        self.energies.append(None if energy is None else float(energy))
        self.order_r.append(order_parameter(theta)[0])
        if omega is not None:
            self.omegas.append(np.array(omega))
        if layer is not None:
            self.layers.append(int(layer))

    def __len__(self):
        return len(self.thetas)

    def to_jsonl(self) -> str:
        lines = []
        for i, theta in enumerate(self.thetas):
            lines.append(json.dumps({
                "step": i + 1,
                "theta": [float(x) for x in np.asarray(theta).ravel()],
                "energy": self.energies[i],
                "order_R": self.order_r[i],
            }))
        return "\n".join(lines) + ("\n" if lines else "")


def rollout(theta0, omega, fns, coupling, *, gamma: float, steps: int,
            group_size: int = 1, energy_fn=None) -> TrajectoryRecord:
    """Iterate the discrete step `steps` times, recording each state.

    energy_fn, if given, maps a phase array to a float recorded per step.
    """
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    theta = np.asarray(theta0, dtype=np.float64)
    record = TrajectoryRecord()
    for _ in range(steps):
        rhs = winfree_rhs(theta, omega, fns, coupling, group_size)
        theta = discrete_step(theta, rhs, gamma)
        record.append(theta, energy=None if energy_fn is None else energy_fn(theta))
    return record
