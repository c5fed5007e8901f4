"""Inference-time energy voting.

A trained model is stochastic at inference through its phase
initialization. Voting runs K forward passes with consecutive seeds,
optionally for more steps than the model was trained with (single-layer
models only), and keeps the candidate whose final state has the lowest
interaction energy. Ties break toward the lowest seed. Candidates are
evaluated one at a time so a candidate's bits depend only on its seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import network as _network
from .errors import ConfigError
from .network import ModelConfig, forward, init_state, state_energy
from .parallel import ordered_map

__all__ = ["VoteConfig", "Candidate", "sample_candidates", "energy_vote",
           "vote_on_input"]


@dataclass
class VoteConfig:
    k: int = 8
    t_eval: int | None = None  # None: the trained step count
    base_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"vote needs k >= 1, got {self.k}")
        if self.t_eval is not None and self.t_eval < 1:
            raise ConfigError(f"t_eval must be >= 1, got {self.t_eval}")


@dataclass
class Candidate:
    seed: int
    output: np.ndarray
    theta_final: np.ndarray
    energy: float


def sample_candidates(params: dict, config: ModelConfig, x_single: np.ndarray,
                      vote: VoteConfig, workers: int = 1) -> list:
    """K candidates for one instance, seeds base_seed .. base_seed + K - 1."""
    if config.interaction != "trig":
        raise ConfigError("energy voting is defined for trig interaction only")
    if config.coupling not in ("dense", "attentive"):
        raise ConfigError("energy voting needs dense or attentive coupling")
    if vote.t_eval is not None and config.layers != 1:
        raise ConfigError("step-count override is only defined for single-layer models")
    x = np.asarray(x_single)
    if x.ndim == 3:
        x = x[None]
    coup = _network._layer_coupling(params, config, config.layers - 1)

    def run(seed: int) -> Candidate:
        theta0 = init_state(config, 1, seed)
        result = forward(params, config, x, theta0=theta0,
                         t_override=vote.t_eval)
        theta = np.asarray(result.theta_final)[0]
        energy = state_energy(theta, coup, config.interaction)
        return Candidate(seed=seed, output=np.asarray(result.output)[0],
                         theta_final=theta, energy=float(energy))

    seeds = range(vote.base_seed, vote.base_seed + vote.k)
    return ordered_map(run, seeds, workers)


def energy_vote(candidates: list) -> Candidate:
    """Lowest final energy wins; exact ties go to the lowest seed."""
    if not candidates:
        raise ConfigError("energy_vote needs at least one candidate")
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.energy < best.energy or (
                cand.energy == best.energy and cand.seed < best.seed):
            best = cand
    return best


def vote_on_input(params: dict, config: ModelConfig, x_single: np.ndarray,
                  vote: VoteConfig, workers: int = 1) -> dict:
    """Run voting on one instance; returns the selection summary."""
    candidates = sample_candidates(params, config, x_single, vote, workers)
    winner = energy_vote(candidates)
    return {
        "selected_seed": winner.seed,
        "selected_energy": winner.energy,
        "energies": [c.energy for c in candidates],
        "prediction": winner.output.argmax(axis=-1).tolist(),
    }


def vote_report_json(report: dict) -> str:
    return json.dumps(report)
