"""Byzantine-resilient federated zero-order optimization, simulated
deterministically: clients upload k scalar finite-difference coefficients
along shared-seed directions, the federator trims per direction, and both
sides rebuild the update by replaying the seeds."""

__version__ = "0.1.0"

from .adversary import AttackKind, AttackSpec
from .core import ModelState, ParamVector, axpy, project_ball
from .data import Dataset, Partition, load_idx, partition_iid, partition_noniid, synth_generate
from .federation import (
    ExperimentConfig,
    RoundLog,
    RunResult,
    comm_cost,
    run_coordwise_tm,
    run_cyber0,
    run_cyber0_local_epochs,
    run_experiment,
    run_fedavg,
)
from .losses import LogisticRegressionModel, QuadraticModel
from .robust import AggregationInput, coordwise_trimmed_mean, mean_aggregate, robust_direction_aggregate, trimmed_mean
from .seedstream import (
    DirectionMode,
    RngStream,
    SeedTuple,
    StreamKind,
    derive_seed,
    gaussian_direction,
    perturb_inplace,
    sphere_direction,
)
from .zo import ClientReport, NonFiniteLossError, ZoConfig, apply_update, zo_coefficient, zo_coefficient_mu0
