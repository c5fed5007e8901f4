"""Oscillator-network simulation, training, and diagnostics.

Phases live on the circle; images and puzzle boards map to grids of
coupled oscillators whose settled state is read out by a trained head.
The functional core (dynamics, energy, network, training) works on plain
arrays; PhaseGridClassifier / PhaseGridSolver wrap it in the familiar
fit/predict estimator shape; the `phasegrid` console script drives
simulation, training, evaluation, voting, and diagnostics.
"""

__version__ = "0.1.0"

from . import autodiff, tasks
from .checkpoint import load_checkpoint, parse_checkpoint, save_checkpoint
from .config import (RunConfig, SimulateConfig, TaskConfig, TrainConfig,
                     load_run_config, parse_run_config)
from .coupling import (AttentiveCoupling, DenseCoupling, StencilCoupling,
                       build_coupling)
from .dynamics import (MlpFns, TrajectoryRecord, TrigFns, discrete_step,
                       generalized_rhs, kuramoto_rhs, rk4_step, rollout,
                       winfree_rhs)
from .energy import (EnergyReport, LyapunovReport, drift_circulation,
                     energy_gradient, energy_rate, interaction_energy,
                     lyapunov_check)
from .errors import (CheckpointError, ConfigError, DomainError,
                     GenerationError, NumericError, PhaseGridError,
                     ShapeError)
from .estimators import PhaseGridClassifier, PhaseGridSolver
from .geometry import (PhaseHistogram, embed_circle, order_parameter,
                       phase_histogram, recover_phase, wrap)
from .network import (ModelConfig, forward, init_params, init_state,
                      param_count)
from .training import (TrainResult, batched_outputs, cross_entropy, evaluate,
                       train)
from .voting import VoteConfig, energy_vote, sample_candidates, vote_on_input

__all__ = [
    "__version__",
    "autodiff", "tasks",
    "load_checkpoint", "parse_checkpoint", "save_checkpoint",
    "RunConfig", "SimulateConfig", "TaskConfig", "TrainConfig",
    "load_run_config", "parse_run_config",
    "AttentiveCoupling", "DenseCoupling", "StencilCoupling", "build_coupling",
    "MlpFns", "TrajectoryRecord", "TrigFns", "discrete_step",
    "generalized_rhs", "kuramoto_rhs", "rk4_step", "rollout", "winfree_rhs",
    "EnergyReport", "LyapunovReport", "drift_circulation", "energy_gradient",
    "energy_rate", "interaction_energy", "lyapunov_check",
    "CheckpointError", "ConfigError", "DomainError", "GenerationError",
    "NumericError", "PhaseGridError", "ShapeError",
    "PhaseGridClassifier", "PhaseGridSolver",
    "PhaseHistogram", "embed_circle", "order_parameter", "phase_histogram",
    "recover_phase", "wrap",
    "ModelConfig", "forward", "init_params", "init_state", "param_count",
    "TrainResult", "batched_outputs", "cross_entropy", "evaluate", "train",
    "VoteConfig", "energy_vote", "sample_candidates", "vote_on_input",
]
