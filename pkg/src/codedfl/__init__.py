"""Straggler-resilient coded federated learning simulator.

Computes optimal per-client workloads and coding redundancy from
stochastic compute/communication models, builds distributed parity data
over kernel-embedded features, and races coded training against uncoded
baselines under a simulated wall clock.
"""

from .allocation import (
    AllocationResult,
    ConcavePiece,
    InfeasibleAllocationError,
    awgn_optimal_load,
    awgn_optimal_return,
    concavity_pieces,
    expected_return,
    integerize_loads,
    lambert_w_minus1,
    maximize_node_return,
    solve_allocation,
    total_expected_return,
)
from .coding import (
    ParityDataset,
    WeightSpec,
    aggregate_global,
    build_weight_spec,
    encode_local,
    generate_encoding_matrix,
    read_dataset_file,
    read_parity_file,
    write_dataset_file,
    write_parity_file,
)
from .datasets import (
    IdxFormatError,
    load_idx_dataset,
    make_synthetic_digits,
    stratified_head,
    write_idx_files,
)
from .delays import DelaySample, NodeProfile, cdf_delay, mean_delay, sample_delay
from .embedding import (
    EmbeddedDataset,
    FourierFeatureMap,
    RffParams,
    derive_params,
    embed,
    embed_matrix,
)
from .estimator import FederatedKernelClassifier
from .experiment import (
    ClientShard,
    ExperimentConfig,
    ExperimentResult,
    build_profiles,
    load_config,
    partition_noniid,
    run_experiment,
    run_pipeline,
    save_config,
    write_metrics,
)
from .privacy import PrivacyReport, feature_vulnerability, privacy_budget
from .training import (
    LrSchedule,
    ModelState,
    TrainingTrace,
    classification_accuracy,
    coded_federated_aggregate,
    coded_gradient,
    iteration_complexity_bound,
    local_gradient,
    run_training,
    sgd_step,
    simulate_iteration_time,
)

__version__ = "0.1.0"
