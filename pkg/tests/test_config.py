import json

import pytest

from phasegrid.config import (RunConfig, SimulateConfig, TaskConfig,
                              TrainConfig, load_run_config, parse_run_config)
from phasegrid.errors import ConfigError

MODEL_DOC = {"layers": 1, "steps": 4, "channels": 8, "input_size": [16, 16],
             "input_channels": 1, "head": "classifier", "head_out": 4,
             "patch_size": 4, "gamma": 0.2, "interaction": "trig",
             "coupling": "dense", "group_size": 1, "sigma_init": 0.5}


def full_doc():
    return {
        "model": dict(MODEL_DOC),
        "task": {"kind": "blobs", "n_train": 8, "n_test": 4, "seed": 1},
        "train": {"epochs": 2, "lr": 1e-3, "batch": 4},
        "vote": {"k": 4},
        "simulate": {"kind": "kuramoto", "d": 6, "steps": 10},
    }


def test_parse_full_document():
    rc = parse_run_config(full_doc())
    assert rc.model.channels_at(0) == 8
    assert rc.task.kind == "blobs"
    assert rc.train.schedule == "constant"
    assert rc.vote.k == 4
    assert rc.simulate.dt == 0.1


def test_sections_are_optional():
    rc = parse_run_config({"simulate": {"kind": "winfree"}})
    assert rc.model is None and rc.task is None
    assert rc.simulate.kind == "winfree"
    with pytest.raises(ConfigError, match="missing the 'model'"):
        rc.require("model")
    assert rc.require("simulate") is rc


def test_unknown_keys_rejected_everywhere():
    doc = full_doc()
    doc["experiment"] = {}
    with pytest.raises(ConfigError, match="experiment"):
        parse_run_config(doc)
    for section, key in [("model", "dropout"), ("task", "n_val"),
                         ("train", "momentum"), ("vote", "quorum"),
                         ("simulate", "integrator")]:
        doc = full_doc()
        doc[section][key] = 1
        with pytest.raises(ConfigError, match=key):
            parse_run_config(doc)


def test_task_keys_are_kind_specific():
    # wall_density belongs to maze, not shidoku
    with pytest.raises(ConfigError, match="wall_density"):
        TaskConfig.from_dict({"kind": "shidoku", "wall_density": 0.3})
    ok = TaskConfig.from_dict({"kind": "maze", "wall_density": 0.3})
    assert ok.wall_density == 0.3


def test_task_validation():
    with pytest.raises(ConfigError, match="kind"):
        TaskConfig.from_dict({"kind": "sudoku"})
    with pytest.raises(ConfigError):
        TaskConfig.from_dict({"kind": "blobs", "n_train": -1})
    with pytest.raises(ConfigError, match="missing"):
        TaskConfig.from_dict({"n_train": 4})


def test_task_generate_splits_are_disjoint_streams():
    tc = TaskConfig(kind="blobs", n_train=6, n_test=6, seed=3)
    train = tc.generate("train")
    test = tc.generate("test")
    assert len(train) == len(test) == 6
    import numpy as np
    assert not np.array_equal(train[0]["image"], test[0]["image"])
    with pytest.raises(ConfigError):
        tc.generate("validation")


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, lr=0.0, batch=4)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, lr=1e-3, batch=0)
    with pytest.raises(ConfigError, match="schedule"):
        TrainConfig(epochs=1, lr=1e-3, batch=4, schedule="step")
    with pytest.raises(ConfigError, match="missing"):
        TrainConfig.from_dict({"epochs": 1, "lr": 1e-3})


def test_simulate_config_validation():
    with pytest.raises(ConfigError, match="kind"):
        SimulateConfig(kind="hopf")
    with pytest.raises(ConfigError):
        SimulateConfig(d=0)
    with pytest.raises(ConfigError):
        SimulateConfig(dt=0.0)
    assert SimulateConfig().kind == "kuramoto"


def test_load_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(full_doc()))
    rc = load_run_config(path)
    assert rc.task.n_train == 8


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_run_config(bad)


def test_top_level_must_be_object():
    with pytest.raises(ConfigError):
        parse_run_config([1, 2, 3])
    with pytest.raises(ConfigError):
        parse_run_config({"model": "dense"})
