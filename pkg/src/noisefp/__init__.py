"""noisefp: a simulated lab for fingerprinting noisy quantum devices.

The package simulates a family of small noisy devices running a fixed
testbed circuit, collects measurement-outcome distributions under two
acquisition protocols, and trains kernel SVM classifiers that identify
which device (and when) produced the data.
"""

from .simulator import (
    Gate,
    KrausChannel,
    NoiseModel,
    apply_channel,
    apply_gate,
    apply_readout,
    check_density_matrix,
    confusion_from_flips,
    damping_channel,
    depolarizing_channel,
    evolve,
    initial_state,
    measure_pair,
    run_gates,
    sample_counts,
)
from .testbed import (
    Circuit,
    decompose_toffoli,
    format_circuit,
    full_circuit,
    ideal_distribution,
    parse_circuit,
    step_circuit,
)
from .machines import (
    DriftSpec,
    MachineProfile,
    clone_profile,
    default_profiles,
    noise_model_for,
    params_at,
)
from .acquisition import (
    Dataset,
    Run,
    ScheduleConfig,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .features import FeatureSpec, LabeledSet, build_features, standardize
from .svm import (
    KernelSpec,
    OvrModel,
    SvmModel,
    accuracy,
    kkt_violations,
    load_model,
    predict,
    predict_ovr,
    save_model,
    select_model,
    split,
    train_binary,
    train_ovr,
)
from .experiments import (
    AccuracyTable,
    ExperimentConfig,
    emit_report,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "Gate", "KrausChannel", "NoiseModel", "apply_channel", "apply_gate",
    "apply_readout", "check_density_matrix", "confusion_from_flips",
    "damping_channel", "depolarizing_channel", "evolve", "initial_state",
    "measure_pair", "run_gates", "sample_counts",
    "Circuit", "decompose_toffoli", "format_circuit", "full_circuit",
    "ideal_distribution", "parse_circuit", "step_circuit",
    "DriftSpec", "MachineProfile", "clone_profile", "default_profiles",
    "noise_model_for", "params_at",
    "Dataset", "Run", "ScheduleConfig", "generate_dataset", "load_dataset",
    "save_dataset",
    "FeatureSpec", "LabeledSet", "build_features", "standardize",
    "KernelSpec", "OvrModel", "SvmModel", "accuracy", "kkt_violations",
    "load_model", "predict", "predict_ovr", "save_model", "select_model",
    "split", "train_binary", "train_ovr",
    "AccuracyTable", "ExperimentConfig", "emit_report", "run_experiment",
    "__version__",
]
