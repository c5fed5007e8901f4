"""Shared fixtures: the two trained models the acceptance suite reuses.

Training happens once per session; the resulting parameters, datasets,
accuracies and CPU timings are shared by the learning, histogram, and
checkpoint round-trip criteria.
"""

import time

import numpy as np
import pytest

from phasegrid.network import ModelConfig, init_params
from phasegrid.tasks import encode_batch, gen_maze, gen_shidoku
from phasegrid.training import evaluate, train

# Pinned recipe for the 4x4 board model. Phase noise at 0.1 matters:
# rollouts that start close to the attractors both train and generalize;
# sigma 1.0 stalls near 50% exact boards. The cosine schedule prevents
# the late-training blowups constant lr shows after ~60 epochs.
SHIDOKU = {
    "model": dict(layers=1, steps=16, channels=64, input_size=(4, 4),
                  input_channels=5, head="per_cell", head_out=4,
                  patch_size=1, gamma=0.25, interaction="trig",
                  coupling="dense", group_size=1, sigma_init=0.1),
    "n_train": 2000,
    "n_test": 200,
    "data_seed": (11, 12),
    "epochs": 80,
    "lr": 1e-3,
    "batch": 100,
    "schedule": "cosine",
    "weight_decay": 0.0,
    "clip_norm": 10.0,
    "train_seeds": (3, 4),  # first attempt, then the one allowed retry
    "target": 0.95,
}

MAZE = {
    "model": dict(layers=1, steps=12, channels=32, input_size=(9, 9),
                  input_channels=4, head="per_cell", head_out=2,
                  patch_size=1, gamma=0.25, interaction="trig",
                  coupling="dense", group_size=1, sigma_init=0.1),
    "n_train": 1500,
    "n_test": 200,
    "wall_density": 0.25,
    "data_seed": (21, 22),
    "epochs": 20,
    "lr": 1e-3,
    "batch": 50,
    "schedule": "cosine",
    "weight_decay": 0.0,
    "clip_norm": 10.0,
    "train_seeds": (3,),
    "target": 0.70,
}


def _train_and_eval(recipe, kind, train_insts, test_insts):
    """Train with retry-on-miss; returns the run summary dict."""
    config = ModelConfig(**recipe["model"])
    x, y, mask = encode_batch(kind, train_insts)
    attempts = []
    best = None
    for seed in recipe["train_seeds"]:
        t0 = time.process_time()
        params = init_params(config, seed)
        result = train(params, config, x, y, mask,
                       epochs=recipe["epochs"], lr=recipe["lr"],
                       batch=recipe["batch"], seed=seed,
                       schedule=recipe["schedule"],
                       weight_decay=recipe["weight_decay"],
                       clip_norm=recipe["clip_norm"],
                       track_energy=False)
        accuracy, flags = evaluate(result.params, config, kind, test_insts,
                                   seed=0)
        cpu_minutes = (time.process_time() - t0) / 60.0
        attempts.append({"seed": seed, "accuracy": accuracy,
                         "cpu_minutes": cpu_minutes})
        run = {"config": config, "params": result.params,
               "history": result.history, "accuracy": accuracy,
               "flags": flags, "seed": seed, "cpu_minutes": cpu_minutes}
        if best is None or accuracy > best["accuracy"]:
            best = run
        if accuracy >= recipe["target"]:
            break
    best["attempts"] = attempts
    return best


@pytest.fixture(scope="session")
def shidoku_run():
    train_seed, test_seed = SHIDOKU["data_seed"]
    train_insts = gen_shidoku(SHIDOKU["n_train"], seed=train_seed)
    test_insts = gen_shidoku(SHIDOKU["n_test"], seed=test_seed)
    run = _train_and_eval(SHIDOKU, "shidoku", train_insts, test_insts)
    run["test_instances"] = test_insts
    return run


@pytest.fixture(scope="session")
def maze_run():
    train_seed, test_seed = MAZE["data_seed"]
    kwargs = dict(height=9, width=9, wall_density=MAZE["wall_density"])
    train_insts = gen_maze(MAZE["n_train"], seed=train_seed, **kwargs)
    test_insts = gen_maze(MAZE["n_test"], seed=test_seed, **kwargs)
    run = _train_and_eval(MAZE, "maze", train_insts, test_insts)
    run["test_instances"] = test_insts
    return run
