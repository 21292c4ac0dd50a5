"""Two-node entanglement-distillation simulator and analysis toolkit."""

__version__ = "0.1.0"

from .analysis import (
    RateEstimate,
    barrett_kok_rate,
    bell_fidelity_from_paulis,
    bin_by_attempts,
    ebit_rate,
    log_negativity,
    tomography_sample,
)
from .channels import (
    NodeNoiseParams,
    PhotonicNoiseParams,
    dephasing_channel,
    depolarizing_channel,
    memory_storage_decay,
)
from .config import default_spec, load_config
from .montecarlo import (
    ExperimentSpec,
    ResultSet,
    calibrate_gate_error,
    run_figure_sweep,
    run_trials,
)
from .protocol import (
    ProtocolConfig,
    TrialRecord,
    generate_raw_state,
    prepare_theta,
    run_trial,
)
from .qstate import (
    DensityMatrix,
    PureState,
    apply_gate,
    apply_kraus,
    fidelity_with_pure,
    measure_qubit,
    partial_trace,
    pauli_expectation,
    tensor,
)

__all__ = [
    "__version__",
    "RateEstimate",
    "barrett_kok_rate",
    "bell_fidelity_from_paulis",
    "bin_by_attempts",
    "ebit_rate",
    "log_negativity",
    "tomography_sample",
    "NodeNoiseParams",
    "PhotonicNoiseParams",
    "dephasing_channel",
    "depolarizing_channel",
    "memory_storage_decay",
    "default_spec",
    "load_config",
    "ExperimentSpec",
    "ResultSet",
    "calibrate_gate_error",
    "run_figure_sweep",
    "run_trials",
    "ProtocolConfig",
    "TrialRecord",
    "generate_raw_state",
    "prepare_theta",
    "run_trial",
    "DensityMatrix",
    "PureState",
    "apply_gate",
    "apply_kraus",
    "fidelity_with_pure",
    "measure_qubit",
    "partial_trace",
    "pauli_expectation",
    "tensor",
]
