"""Command-line driver.

Subcommands: simulate (classical rollouts to trajectory JSONL), train
(checkpoint + metrics JSONL), eval (accuracy report), vote (energy voting),
diag (self-contained diagnostics, one JSON report each), gen-data (dataset
JSONL). Global flags --config/--seed/--out/--workers apply to every
subcommand.

Exit codes: 0 success, 1 validation failure (bad flags or config, bad
files, a diagnostic that reports pass: false), 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import network, tasks, training, voting
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .coupling import DenseCoupling, build_coupling
from .dynamics import (TrajectoryRecord, TrigFns, discrete_step,
                       generalized_rhs, kuramoto_rhs, winfree_rhs)
from .energy import drift_circulation, interaction_energy, lyapunov_check
from .errors import (CheckpointError, ConfigError, DomainError,
                     GenerationError, PhaseGridError, ShapeError)
from .geometry import phase_histogram
from .network import ModelConfig, forward, init_params, init_state
from .parallel import ordered_map
from .rng import stream
from .training import cross_entropy
from .voting import VoteConfig

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

_VALIDATION_ERRORS = (ConfigError, ShapeError, DomainError, CheckpointError,
                      GenerationError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; the contract wants 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    return load_run_config(args.config)


def _load_model(args) -> tuple:
    """(params, ModelConfig, metadata) from --ckpt."""
    if not getattr(args, "ckpt", None):
        raise ConfigError("this subcommand needs --ckpt")
    params, meta = load_checkpoint(args.ckpt)
    try:
        model = ModelConfig.from_dict(meta["config"]["model"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint metadata lacks a model config: {exc}")
    return params, model, meta


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_run(sim, seed: int, run: int) -> TrajectoryRecord:
    d = sim.d
    omega = stream(f"simulate/omega/{run}", seed).normal(0.0, sim.omega_scale, d)
    theta = stream(f"simulate/theta0/{run}", seed).uniform(-np.pi, np.pi, d)
    coup = build_coupling("dense", d=d, init=sim.coupling_init, seed=seed,
                          kappa=sim.kappa, purpose=f"simulate/coupling/{run}")
    c = coup.matrix
    fns = TrigFns()
    record = TrajectoryRecord()
    for _ in range(sim.steps):
        if sim.kind == "kuramoto":
            rhs = kuramoto_rhs(theta, omega, c, sim.gamma)
        elif sim.kind == "generalized":
            rhs = generalized_rhs(theta, omega, c, sim.gamma, sim.q)
        else:
            rhs = winfree_rhs(theta, omega, fns, coup)
        theta = discrete_step(theta, rhs, sim.dt)
        record.append(theta, energy=interaction_energy(theta, c)
                      if sim.record_energy else None)
    return record


def cmd_simulate(args) -> int:
    sim = _load_config(args).require("simulate").simulate
    seed = args.seed if args.seed is not None else 0
    records = ordered_map(lambda r: _simulate_run(sim, seed, r),
                          range(sim.runs), workers=args.workers)
    if sim.runs == 1:
        text = records[0].to_jsonl()
    else:
        lines = []
        for r, record in enumerate(records):
            for line in record.to_jsonl().splitlines():
                lines.append(json.dumps({"run": r, **json.loads(line)}))
        text = "\n".join(lines) + ("\n" if lines else "")
    _emit(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / eval / vote / gen-data
# ---------------------------------------------------------------------------


def _check_task_fit(model: ModelConfig, kind: str, instances: list) -> None:
    shapes = tasks.task_shapes(kind, instances)
    if (tuple(model.input_size) != tuple(shapes["input_size"])
            or model.input_channels != shapes["input_channels"]
            or model.head != shapes["head"]
            or model.head_out != shapes["head_out"]):
        raise ConfigError(
            f"model expects {model.input_size} x {model.input_channels} "
            f"-> {model.head}({model.head_out}); task '{kind}' needs "
            f"{shapes['input_size']} x {shapes['input_channels']} -> "
            f"{shapes['head']}({shapes['head_out']})"
        )


def cmd_train(args) -> int:
    rc = _load_config(args).require("model", "task", "train")
    if not args.out:
        raise ConfigError("train needs --out for the checkpoint path")
    tc = rc.train
    seed = args.seed if args.seed is not None else tc.seed
    instances = rc.task.generate("train")
    if not instances:
        raise ConfigError("task.n_train must be > 0 for training")
    _check_task_fit(rc.model, rc.task.kind, instances)
    x, y, mask = tasks.encode_batch(rc.task.kind, instances)
    params = init_params(rc.model, seed)

    def log(row):
        print(json.dumps(row), file=sys.stderr)

    result = training.train(
        params, rc.model, x, y, mask,
        epochs=tc.epochs, lr=tc.lr, batch=tc.batch, seed=seed,
        schedule=tc.schedule, weight_decay=tc.weight_decay,
        clip_norm=tc.clip_norm, target_accuracy=tc.target_accuracy, log=log,
    )
    metadata = {
        "config": {
            "model": rc.model.to_dict(),
            "task": dataclasses.asdict(rc.task),
            "train": dataclasses.asdict(tc),
        },
        "seed": seed,
        "epoch": len(result.history),
    }
    save_checkpoint(result.params, metadata, args.out)
    metrics_path = str(args.out) + ".metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(result.metrics_jsonl())
    last = result.history[-1] if result.history else {}
    print(json.dumps({
        "checkpoint": str(args.out),
        "metrics": metrics_path,
        "epochs_run": len(result.history),
        "final_loss": last.get("loss"),
        "final_accuracy": last.get("accuracy"),
    }))
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = _load_config(args).require("task")
    params, model, _ = _load_model(args)
    seed = args.seed if args.seed is not None else 0
    instances = rc.task.generate("test")
    if not instances:
        raise ConfigError("task.n_test must be > 0 for evaluation")
    _check_task_fit(model, rc.task.kind, instances)
    acc, flags = training.evaluate(params, model, rc.task.kind, instances,
                                   seed=seed, workers=args.workers)
    report = {"kind": rc.task.kind, "n": len(instances),
              "correct": int(sum(flags)), "accuracy": acc}
    text = json.dumps(report) + "\n"
    print(text, end="")
    if args.out:
        _emit(text, args.out)
    return EXIT_OK


def cmd_vote(args) -> int:
    rc = _load_config(args).require("task")
    params, model, _ = _load_model(args)
    base = rc.vote if rc.vote is not None else VoteConfig()
    vc = VoteConfig(
        k=args.k if args.k is not None else base.k,
        t_eval=args.t_eval if args.t_eval is not None else base.t_eval,
        base_seed=args.seed if args.seed is not None else base.base_seed,
    )
    instances = rc.task.generate("test")
    if not 0 <= args.index < len(instances):
        raise ConfigError(
            f"--index {args.index} out of range for {len(instances)} test instances"
        )
    _check_task_fit(model, rc.task.kind, instances)
    x, _, _ = tasks.encode_batch(rc.task.kind, instances)
    report = voting.vote_on_input(params, model, x[args.index], vc,
                                  workers=args.workers)
    report = {"index": args.index, "k": vc.k, "t_eval": vc.t_eval, **report}
    text = json.dumps(report) + "\n"
    print(text, end="")
    if args.out:
        _emit(text, args.out)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    rc = _load_config(args).require("task")
    if not args.out:
        raise ConfigError("gen-data needs --out for the dataset path")
    task = rc.task
    if args.seed is not None:
        task = dataclasses.replace(task, seed=args.seed)
    instances = task.generate(args.split)
    tasks.write_jsonl(args.out, task.kind, instances)
    print(json.dumps({"kind": task.kind, "split": args.split,
                      "n": len(instances), "path": str(args.out)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# diag
# ---------------------------------------------------------------------------


def _diag_identities(args, seed: int) -> dict:
    r = stream("diag/identities", seed)
    a = r.uniform(-np.pi, np.pi, 10_000)
    b = r.uniform(-np.pi, np.pi, 10_000)
    pointwise = np.max(np.abs(
        np.sin(b - a) + np.sin(b + a) - 2.0 * np.cos(a) * np.sin(b)
    ))

    d, n, gamma = 16, 100, 0.7
    k = build_coupling("dense", d=d, init="symmetric_normal", seed=seed,
                       purpose="diag/identities/coupling").matrix
    thetas = r.uniform(-np.pi, np.pi, (n, d))
    omega = r.normal(0.0, 1.0, d)
    separable = omega + gamma * 2.0 * np.cos(thetas) * (np.sin(thetas) @ k.T)
    rhs_err = np.max(np.abs(generalized_rhs(thetas, omega, k, gamma, 1.0) - separable))
    q0_err = np.max(np.abs(generalized_rhs(thetas, omega, k, gamma, 0.0)
                           - kuramoto_rhs(thetas, omega, k, gamma)))
    alphas = r.uniform(-np.pi, np.pi, n)
    equiv_err = max(
        float(np.max(np.abs(kuramoto_rhs(t + al, omega, k, gamma)
                            - kuramoto_rhs(t, omega, k, gamma))))
        for t, al in zip(thetas, alphas)
    )
    worst = max(pointwise, rhs_err, q0_err, equiv_err)
    return {
        "q1_identity_max_err": float(pointwise),
        "separable_rhs_max_err": float(rhs_err),
        "q0_equals_kuramoto_max_err": float(q0_err),
        "equivariance_max_err": float(equiv_err),
        "pass": bool(worst < 1e-12),
    }


def _diag_grad_check(args, seed: int) -> dict:
    from .autodiff import grad_check

    rc = load_run_config(args.config) if args.config else RunConfig()
    model = rc.model if rc.model is not None else ModelConfig(
        layers=1, steps=2, channels=4, input_size=(4, 4), input_channels=1,
        head="classifier", head_out=2, patch_size=2, gamma=0.1,
        interaction="trig", coupling="dense",
    )
    x = stream("diag/gradcheck/x", seed).normal(0.0, 1.0, (1,) + model.input_size
                                                + (model.input_channels,))
    theta0 = init_state(model, 1, seed, purpose="diag/gradcheck/theta",
                        dtype=np.float64)
    h, w = model.state_size()
    if model.head == "classifier":
        labels, mask = np.zeros(1, dtype=np.int64), None
    else:
        labels = np.zeros((1, h, w), dtype=np.int64)
        mask = np.ones((1, h, w), dtype=np.float64)

    def loss_fn(p):
        out = forward(p, model, x, theta0=theta0).output
        return cross_entropy(out, labels, mask)

    report = grad_check(loss_fn, init_params(model, seed), n_coords=80,
                        seed=seed)
    doc = report.to_dict()
    doc["pass"] = bool(report.passed(1e-4))
    return doc


def _diag_lyapunov(args, seed: int) -> dict:
    c = build_coupling("dense", d=args.d, init="symmetric_normal", seed=seed,
                       purpose="diag/lyapunov/coupling").matrix
    report = lyapunov_check(c)
    doc = report.to_dict()
    doc["d"] = args.d
    doc["pass"] = bool(report.passed())
    return doc


def _diag_circulation(args, seed: int) -> dict:
    values = {}
    worst = 0.0
    for omega in (0.0, 0.5, 1.0, -2.0):
        got = drift_circulation(omega)
        err = abs(got - 2.0 * np.pi * omega)
        values[str(omega)] = got
        worst = max(worst, err)
    return {"circulation": values, "max_abs_err": float(worst),
            "pass": bool(worst < 1e-8)}


def _diag_hist(args, seed: int) -> dict:
    rc = _load_config(args).require("task")
    params, model, _ = _load_model(args)
    instances = rc.task.generate("test")
    if not 0 <= args.index < len(instances):
        raise ConfigError(
            f"--index {args.index} out of range for {len(instances)} test instances"
        )
    x, _, _ = tasks.encode_batch(rc.task.kind, instances)
    theta0 = init_state(model, 1, seed, purpose=f"eval/theta/{args.index}")
    result = forward(params, model, x[args.index:args.index + 1], theta0=theta0)
    theta = np.asarray(result.theta_final)
    hist = phase_histogram(theta, args.bins)
    counts = np.asarray(hist.counts)
    top = np.sort(counts)[::-1]
    ratio = float(top[1] / top[0]) if len(top) > 1 and top[0] > 0 else 0.0
    return {
        "bins": args.bins,
        "bin_edges": [float(e) for e in hist.bin_edges],
        "counts": [int(c) for c in counts],
        "counts_sum": int(counts.sum()),
        "oscillators": int(theta.size),
        "top_two_mode_ratio": ratio,
        "pass": bool(int(counts.sum()) == int(theta.size)),
    }


_DIAG_MODES = {
    "identities": _diag_identities,
    "grad-check": _diag_grad_check,
    "lyapunov": _diag_lyapunov,
    "circulation": _diag_circulation,
    "hist": _diag_hist,
}


def cmd_diag(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = _DIAG_MODES[args.mode](args, seed)
    text = json.dumps(report) + "\n"
    print(text, end="")
    if args.out:
        _emit(text, args.out)
    return EXIT_OK if report["pass"] else EXIT_INVALID


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON path")
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides config seeds)")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("--workers", type=int, default=1,
                        help="thread count; results do not depend on it")

    parser = _Parser(prog="phasegrid",
                     description="Oscillator network simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common],
                       help="classical rollouts to trajectory JSONL")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("train", parents=[common],
                       help="train on a task; writes checkpoint + metrics")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="accuracy of a checkpoint on the test split")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("vote", parents=[common],
                       help="energy voting over K phase initializations")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--k", type=int, default=None, help="candidate count")
    p.add_argument("--t-eval", type=int, default=None,
                   help="step-count override (single-layer models)")
    p.add_argument("--index", type=int, default=0, help="test instance index")
    p.set_defaults(handler=cmd_vote)

    p = sub.add_parser("gen-data", parents=[common],
                       help="generate a dataset JSONL")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("diag", parents=[common],
                       help="diagnostics; prints a pass/fail JSON report")
    p.add_argument("mode", choices=sorted(_DIAG_MODES))
    p.add_argument("--ckpt", default=None, help="checkpoint path (hist)")
    p.add_argument("--bins", type=int, default=64, help="histogram bins")
    p.add_argument("--index", type=int, default=0, help="test instance index")
    p.add_argument("--d", type=int, default=32, help="system size (lyapunov)")
    p.set_defaults(handler=cmd_diag)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.handler(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PhaseGridError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
