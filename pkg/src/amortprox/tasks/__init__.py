from .base import HOLDOUT_FRACTION, Task, TaskKind, TaskSpec, split_holdout
from .data import export_csv, standardize, uci_csv_load
from .synthetic import (
    AUTOENCODER_WIDTHS,
    ROSENBROCK_INIT,
    LinearTargetSampler,
    autoencoder_data,
    bottleneck_autoencoder_task,
    build_task,
    class_means,
    illcond_linear_task,
    illcond_matrix,
    regression_target,
    rosenbrock_task,
    synth_classification_task,
    synth_regression_task,
    uci_csv_task,
)

__all__ = [
    "AUTOENCODER_WIDTHS",
    "HOLDOUT_FRACTION",
    "ROSENBROCK_INIT",
    "LinearTargetSampler",
    "autoencoder_data",
    "Task",
    "TaskKind",
    "TaskSpec",
    "bottleneck_autoencoder_task",
    "build_task",
    "class_means",
    "export_csv",
    "illcond_linear_task",
    "illcond_matrix",
    "regression_target",
    "rosenbrock_task",
    "split_holdout",
    "standardize",
    "synth_classification_task",
    "synth_regression_task",
    "uci_csv_load",
    "uci_csv_task",
]
