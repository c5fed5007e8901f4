"""The trainable oscillator network.

An input image or board is embedded once into per-oscillator intrinsic
rates Omega (patch embedding); phases start from wrapped Gaussian noise.
Each layer runs T_l discrete dynamics steps with its own interaction
functions and coupling; between layers a weight-tied 3x3 convolution maps
the circle embedding to new phases via atan2, and a small residual network
updates Omega from [Omega; sin Theta; cos Theta]. Within a layer Omega is
frozen: phases move on the fast timescale, rates on the slow one. The
readout head consumes the final layer's phases.

Parameters are a flat dict of named float32 arrays; the forward pass is
written against the polymorphic ops in `autodiff`, so passing Tensors in
the params dict records a tape for training while plain arrays run as
numpy inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .coupling import AttentiveCoupling, DenseCoupling, StencilCoupling
from .dynamics import MlpFns, TrajectoryRecord, TrigFns, discrete_step, winfree_rhs
from .energy import interaction_energy, position_coupling_energy
from .errors import ConfigError, NumericError, ShapeError
from .geometry import wrap
from .rng import stream

__all__ = [
    "ModelConfig", "init_params", "init_state", "forward", "ForwardResult",
    "state_energy", "param_count",
]

_INTERACTIONS = ("trig", "mlp")
_COUPLINGS = ("dense", "stencil", "attentive")
_HEADS = ("classifier", "per_cell")


@dataclass
class ModelConfig:
    """Architecture description; JSON round-trips via to_dict/from_dict."""

    layers: int
    steps: tuple
    channels: tuple
    input_size: tuple
    input_channels: int
    head: str
    head_out: int
    patch_size: int = 1
    group_size: int = 1
    gamma: float = 1.0
    interaction: str = "trig"
    mlp_hidden: int = 16
    coupling: str = "attentive"
    stencil_size: int = 3
    sigma_init: float = 1.0

    def __post_init__(self):
        if isinstance(self.steps, int):
            self.steps = (self.steps,) * self.layers
        self.steps = tuple(int(t) for t in self.steps)
        if isinstance(self.channels, int):
            self.channels = (self.channels,)
        self.channels = tuple(int(c) for c in self.channels)
        self.input_size = tuple(int(s) for s in self.input_size)
        self.validate()

    def validate(self):
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if len(self.steps) != self.layers or any(t < 1 for t in self.steps):
            raise ConfigError(f"steps {self.steps} must list {self.layers} positive counts")
        if len(self.channels) not in (1, 2) or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must be C or (A, B), got {self.channels}")
        if len(self.channels) == 2 and self.layers < 2:
            raise ConfigError("a channel lift needs at least 2 layers")
        if len(self.input_size) != 2 or any(s < 1 for s in self.input_size):
            raise ConfigError(f"input_size must be (H, W), got {self.input_size}")
        if self.patch_size < 1 or any(s % self.patch_size for s in self.input_size):
            raise ConfigError(
                f"patch_size {self.patch_size} does not tile input {self.input_size}"
            )
        h, w = self.state_size()
        if self.group_size < 1 or h % self.group_size or w % self.group_size:
            raise ConfigError(
                f"group_size {self.group_size} does not tile the {h}x{w} state"
            )
        if self.interaction not in _INTERACTIONS:
            raise ConfigError(f"interaction must be one of {_INTERACTIONS}")
        if self.coupling not in _COUPLINGS:
            raise ConfigError(f"coupling must be one of {_COUPLINGS}")
        if self.head not in _HEADS:
            raise ConfigError(f"head must be one of {_HEADS}")
        if self.head_out < 1:
            raise ConfigError(f"head_out must be >= 1, got {self.head_out}")
        if self.stencil_size < 1 or self.stencil_size % 2 == 0:
            raise ConfigError(f"stencil_size must be odd, got {self.stencil_size}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.sigma_init < 0:
            raise ConfigError(f"sigma_init must be >= 0, got {self.sigma_init}")
        if self.input_channels < 1 or self.mlp_hidden < 1:
            raise ConfigError("input_channels and mlp_hidden must be >= 1")

    def state_size(self) -> tuple:
        return (self.input_size[0] // self.patch_size,
                self.input_size[1] // self.patch_size)

    def channels_at(self, layer: int) -> int:
        if len(self.channels) == 1:
            return self.channels[0]
        # lift happens after layer ceil(L/2) (1-based)
        return self.channels[0] if layer < math.ceil(self.layers / 2) else self.channels[1]

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "steps": list(self.steps),
            "channels": list(self.channels) if len(self.channels) > 1 else self.channels[0],
            "input_size": list(self.input_size),
            "input_channels": self.input_channels,
            "head": self.head,
            "head_out": self.head_out,
            "patch_size": self.patch_size,
            "group_size": self.group_size,
            "gamma": self.gamma,
            "interaction": self.interaction,
            "mlp_hidden": self.mlp_hidden,
            "coupling": self.coupling,
            "stencil_size": self.stencil_size,
            "sigma_init": self.sigma_init,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        if not isinstance(doc, dict):
            raise ConfigError("model config must be a JSON object")
        allowed = {
            "layers", "steps", "channels", "input_size", "input_channels",
            "head", "head_out", "patch_size", "group_size", "gamma",
            "interaction", "mlp_hidden", "coupling", "stencil_size",
            "sigma_init",
        }
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        required = {"layers", "steps", "channels", "input_size",
                    "input_channels", "head", "head_out"}
        missing = required - set(doc)
        if missing:
            raise ConfigError(f"missing model config keys: {sorted(missing)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> dict:
    """Fresh parameter dict; every tensor gets its own named substream."""

    out: dict = {}

    def make(name, shape, fan_in=None):
        rng = stream(f"init/{name}", seed)
        if fan_in is None:
            arr = np.zeros(shape)
        else:
            arr = _uniform(rng, shape, fan_in)
        out[name] = np.asarray(arr, dtype=dtype)

    h, w = config.state_size()
    p, cin = config.patch_size, config.input_channels
    c0 = config.channels_at(0)
    make("f_init/w", (p * p * cin, c0), fan_in=p * p * cin)
    make("f_init/b", (c0,))

    for layer in range(config.layers):
        c = config.channels_at(layer)
        pref = f"layer{layer}"
        if config.interaction == "mlp":
            hid = config.mlp_hidden
            make(f"{pref}/s_mlp/w1", (2, hid), fan_in=2)
            make(f"{pref}/s_mlp/b1", (hid,))
            make(f"{pref}/s_mlp/w2", (hid, 1), fan_in=hid)
            make(f"{pref}/s_mlp/b2", (1,))
            if config.group_size == 1:
                make(f"{pref}/i_mlp/w1", (2, hid), fan_in=2)
                make(f"{pref}/i_mlp/b1", (hid,))
                make(f"{pref}/i_mlp/w2", (hid, 1), fan_in=hid)
                make(f"{pref}/i_mlp/b2", (1,))
            else:
                n = config.group_size
                make(f"{pref}/i_patch/w", (2 * n * n * c, c), fan_in=2 * n * n * c)
                make(f"{pref}/i_patch/b", (c,))
        if config.coupling == "dense":
            d = h * w * c
            make(f"{pref}/coupling/c", (d, d), fan_in=d)
        elif config.coupling == "stencil":
            k = config.stencil_size
            make(f"{pref}/coupling/k", (k, k, c, c), fan_in=k * k * c)
        else:
            make(f"{pref}/coupling/wq", (c, c), fan_in=c)
            make(f"{pref}/coupling/wk", (c, c), fan_in=c)
            make(f"{pref}/coupling/wv", (c, c), fan_in=c)

    for t in range(config.layers - 1):
        ca, cb = config.channels_at(t), config.channels_at(t + 1)
        pref = f"trans{t}"
        make(f"{pref}/theta_k", (3, 3, ca, cb), fan_in=9 * ca)
        make(f"{pref}/omega_w1", (3 * ca, cb), fan_in=3 * ca)
        make(f"{pref}/omega_b1", (cb,))
        make(f"{pref}/omega_w2", (cb, cb), fan_in=cb)
        make(f"{pref}/omega_b2", (cb,))
        if ca != cb:
            make(f"{pref}/omega_lift", (ca, cb), fan_in=ca)

    c_last = config.channels_at(config.layers - 1)
    make("head/w", (2 * c_last, config.head_out), fan_in=2 * c_last)
    make("head/b", (config.head_out,))
    return out


def param_count(params: dict) -> int:
    return int(sum(value_of(v).size for v in params.values()))


def init_state(config: ModelConfig, batch: int, seed: int, *,
               purpose: str = "theta_init", dtype=np.float32) -> np.ndarray:
    """Wrapped Gaussian initial phases, one fresh draw per forward pass."""
    h, w = config.state_size()
    shape = (batch, h, w, config.channels_at(0))
    if config.sigma_init == 0.0:
        return np.zeros(shape, dtype=dtype)
    raw = stream(purpose, seed).normal(0.0, config.sigma_init, shape)
    return wrap(raw).astype(dtype)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


class ForwardResult(NamedTuple):
    output: object          # head output, (B, K) or (B, H, W, K)
    theta_final: object     # (B, H, W, C_last)
    trajectory: object      # TrajectoryRecord | None
    attention: object       # final-state attention (P, P) ndarray | None


def _layer_fns(params, config, layer):
    if config.interaction == "trig":
        return TrigFns()
    pref = f"layer{layer}"
    s_params = {k: params[f"{pref}/s_mlp/{k}"] for k in ("w1", "b1", "w2", "b2")}
    if config.group_size == 1:
        i_params = {k: params[f"{pref}/i_mlp/{k}"] for k in ("w1", "b1", "w2", "b2")}
    else:
        i_params = {k: params[f"{pref}/i_patch/{k}"] for k in ("w", "b")}
    return MlpFns(s_params, i_params)


def _layer_coupling(params, config, layer):
    pref = f"layer{layer}/coupling"
    if config.coupling == "dense":
        return DenseCoupling(params[f"{pref}/c"])
    if config.coupling == "stencil":
        return StencilCoupling(params[f"{pref}/k"])
    return AttentiveCoupling(params[f"{pref}/wq"], params[f"{pref}/wk"],
                             params[f"{pref}/wv"])


def _check_finite(x, where: str):
    v = value_of(x)
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite activations at {where}")


def _patch_embed(x, w, b, p: int):
    bsz, hin, win, cin = x.shape
    hp, wp = hin // p, win // p
    xr = ad.reshape(x, (bsz, hp, p, wp, p, cin))
    xt = ad.transpose(xr, (0, 1, 3, 2, 4, 5))
    flat = ad.reshape(xt, (bsz, hp, wp, p * p * cin))
    return ad.add(ad.matmul(flat, w), b)


def _theta_transition(theta, kernel):
    sin_t, cos_t = ad.sin(theta), ad.cos(theta)
    num = ad.conv2d(sin_t, kernel)
    den = ad.conv2d(cos_t, kernel)
    return ad.wrap_angle(ad.atan2(num, den))


def _omega_transition(omega, theta, params, pref):
    feats = ad.concat([omega, ad.sin(theta), ad.cos(theta)], -1)
    hidden = ad.tanh(ad.add(ad.matmul(feats, params[f"{pref}/omega_w1"]),
                            params[f"{pref}/omega_b1"]))
    update = ad.add(ad.matmul(hidden, params[f"{pref}/omega_w2"]),
                    params[f"{pref}/omega_b2"])
    lift_name = f"{pref}/omega_lift"
    base = omega
    if lift_name in params:
        base = ad.matmul(omega, params[lift_name])
    return ad.add(base, update)


def state_energy(theta_value: np.ndarray, coupling, interaction: str):
    """Interaction energy of one (H, W, C) state, or None outside the
    trig regime. State-dependent and learned couplings are symmetrized."""
    if interaction != "trig":
        return None
    t = np.asarray(theta_value, dtype=np.float64)
    if isinstance(coupling, DenseCoupling):
        c = np.asarray(value_of(coupling.matrix), dtype=np.float64)
        return interaction_energy(t.ravel(), (c + c.T) / 2.0)
    if isinstance(coupling, AttentiveCoupling):
        weights = coupling.attention_weights((np.sin(t), np.cos(t)))
        return position_coupling_energy(t, weights)
    return None


def batch_state_energy(theta_values: np.ndarray, coupling, interaction: str):
    """Per-element energies for a (B, H, W, C) batch, or None outside the
    trig regime. Shares one symmetrized matrix across the dense batch."""
    if interaction != "trig":
        return None
    t = np.asarray(theta_values, dtype=np.float64)
    if isinstance(coupling, DenseCoupling):
        c = np.asarray(value_of(coupling.matrix), dtype=np.float64)
        c = (c + c.T) / 2.0
        s = np.sin(t.reshape(t.shape[0], -1))
        return [float(e) for e in -0.5 * np.einsum("bi,bi->b", s @ c, s)]
    return [state_energy(t[j], coupling, interaction) for j in range(t.shape[0])]


def forward(params: dict, config: ModelConfig, x: np.ndarray, *,
            theta0: np.ndarray, record: bool = False,
            t_override: int | None = None) -> ForwardResult:
    """Run the network on a batch.

    x: (B, H_in, W_in, C_in) float input; theta0: (B, H, W, C_0) wrapped
    initial phases. t_override replaces the step count, allowed only for
    single-layer models. record=True keeps per-step snapshots (batch of 1
    only) including per-step energy in the trig regime.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"input must be (B, H, W, C), got {x.shape}")
    if x.shape[1:3] != config.input_size or x.shape[3] != config.input_channels:
        raise ShapeError(
            f"input {x.shape[1:]} does not match configured "
            f"{config.input_size} x {config.input_channels}"
        )
    if t_override is not None and config.layers != 1:
        raise ConfigError("step-count override is only defined for single-layer models")
    if record and x.shape[0] != 1:
        raise ShapeError("trajectory recording expects a batch of 1")

    h, w = config.state_size()
    t0 = value_of(theta0)
    if t0.shape != (x.shape[0], h, w, config.channels_at(0)):
        raise ShapeError(
            f"theta0 {t0.shape} does not match state "
            f"{(x.shape[0], h, w, config.channels_at(0))}"
        )

    omega = _patch_embed(x, params["f_init/w"], params["f_init/b"],
                         config.patch_size)
    _check_finite(omega, "input embedding")
    theta = theta0
    traj = TrajectoryRecord() if record else None
    coupling = None

    for layer in range(config.layers):
        fns = _layer_fns(params, config, layer)
        coupling = _layer_coupling(params, config, layer)
        t_l = t_override if t_override is not None else config.steps[layer]
        for step in range(t_l):
            rhs = winfree_rhs(theta, omega, fns, coupling, config.group_size)
            theta = discrete_step(theta, rhs, config.gamma)
            _check_finite(theta, f"layer {layer} step {step}")
            if record:
                snap = value_of(theta)[0]
                traj.append(
                    snap,
                    energy=state_energy(snap, coupling, config.interaction),
                    omega=value_of(omega)[0],
                    layer=layer,
                )
        if layer < config.layers - 1:
            pref = f"trans{layer}"
            new_theta = _theta_transition(theta, params[f"{pref}/theta_k"])
            omega = _omega_transition(omega, theta, params, pref)
            theta = new_theta
            _check_finite(theta, f"transition {layer} phases")
            _check_finite(omega, f"transition {layer} rates")

    sin_t, cos_t = ad.sin(theta), ad.cos(theta)
    feats = ad.concat([sin_t, cos_t], -1)
    if config.head == "classifier":
        pooled = ad.reduce_mean(feats, axis=(1, 2))
        output = ad.add(ad.matmul(pooled, params["head/w"]), params["head/b"])
    else:
        output = ad.add(ad.matmul(feats, params["head/w"]), params["head/b"])
    _check_finite(output, "head output")

    attention = None
    if isinstance(coupling, AttentiveCoupling):
        tv = value_of(theta)
        attention = coupling.attention_weights((np.sin(tv[0]), np.cos(tv[0])))
    return ForwardResult(output, theta, traj, attention)
