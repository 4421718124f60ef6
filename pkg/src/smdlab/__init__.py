"""Stochastic mirror descent lab.

A library and CLI for the SMD family over pluggable potentials:
mirror-map geometry, analytic small models, the training loop with
per-step identity verification, closest-interpolant oracles, and a
deterministic initialization-by-mirror experiment harness.
"""

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    ConfigError,
    DataError,
    DegenerateDataError,
    DomainError,
    ExperimentError,
    FormatError,
    NumericError,
    OracleError,
    SmdLabError,
)
from .potentials import Potential, entropy, qnorm
from .models import (
    AssumptionReport,
    BinaryCrossEntropy,
    Dataset,
    LinearModel,
    MLP,
    SquareLoss,
    assumption2_estimate,
    is_interpolating,
    loss_grad,
    loss_value,
    make_loss,
    residuals,
    teacher_weights,
    total_loss,
)
from .training import (
    Assumption1Report,
    IdentityReport,
    SMDConfig,
    StepSizeReport,
    Trace,
    TrainResult,
    assumption1_check,
    d_li,
    replay_with_reference,
    smd_step,
    step_size_bound_linear,
    step_size_check_general,
    train,
    tune_step_size,
    verify_identity,
)
from .oracles import (
    OracleOptions,
    OracleResult,
    closest_interpolant_linear,
    closest_interpolant_nonlinear,
    distance_to_manifold_estimate,
)
from .experiments import (
    DistanceMatrix,
    ExperimentGrid,
    GeneralizationReport,
    GridResult,
    HistogramSummary,
    MirrorSpec,
    Run,
    Theorem2Report,
    distance_matrix,
    generalization_eval,
    histogram,
    make_init,
    run_grid,
    run_single,
    theorem2_report,
)
from .data import generate_synthetic, load_idx_subset
from .checkpoints import Checkpoint, load_checkpoint, model_hash, save_checkpoint
from .config import ExperimentConfig, load_config, parse_config, render_config
