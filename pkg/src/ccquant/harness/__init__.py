from .data import DatasetParseError, load_csv, load_dataset, load_split, rescale_features, save_csv
from .files import load_domain, load_genome, load_network, save_domain, save_genome, save_network
from .floatnet import FloatNetwork, TrainingFailed, float_accuracy, init_float_network, train_float_reference
from .initial import initial_genome, quantize_network, switch_perturb
from .pipeline import (
    ALGORITHMS,
    ExperimentConfig,
    build_initial,
    load_config,
    optimize,
    parse_topology,
    run_experiment,
    save_config,
)

__all__ = [
    "ALGORITHMS",
    "DatasetParseError",
    "ExperimentConfig",
    "FloatNetwork",
    "TrainingFailed",
    "build_initial",
    "float_accuracy",
    "init_float_network",
    "initial_genome",
    "load_config",
    "load_csv",
    "load_dataset",
    "load_domain",
    "load_genome",
    "load_network",
    "load_split",
    "optimize",
    "parse_topology",
    "quantize_network",
    "rescale_features",
    "run_experiment",
    "save_config",
    "save_csv",
    "save_domain",
    "save_genome",
    "save_network",
    "switch_perturb",
    "train_float_reference",
]
