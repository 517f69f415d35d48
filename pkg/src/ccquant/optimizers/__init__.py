from .baselines import run_ga, run_ls, run_random
from .common import (
    CURVE_COLUMNS,
    BudgetExceeded,
    EdaConfig,
    Evaluator,
    GaConfig,
    LsConfig,
    RandomConfig,
    RunRecord,
    read_curve,
)
from .eda import (
    CycleState,
    load_state,
    partition_by_confidence,
    run_eda,
    run_eda_cc,
    run_eda_no_cc,
    save_state,
)

__all__ = [
    "CURVE_COLUMNS",
    "BudgetExceeded",
    "CycleState",
    "EdaConfig",
    "Evaluator",
    "GaConfig",
    "LsConfig",
    "RandomConfig",
    "RunRecord",
    "load_state",
    "partition_by_confidence",
    "read_curve",
    "run_eda",
    "run_eda_cc",
    "run_eda_no_cc",
    "run_ga",
    "run_ls",
    "run_random",
    "save_state",
]
