"""formgate: gated discovery of sparse neuron aggregation formulas.

Stage 1 searches a dual-stream model (element-wise polynomial orders plus
rank-factorized feature interactions plus an optional sine term) with
hard-concrete L0 gates, yielding a canonical sparse formula structure.
Stage 2 rebuilds networks whose layers implement the discovered formula
with fresh trainable weights. A synthetic benchmark, a multi-seed stability
lab, and a dense-orbit expressivity demonstrator round out the toolkit.
"""

from .data import Dataset, load_csv, load_dataset, save_dataset, split_and_standardize
from .errors import (
    ConfigError,
    DimensionMismatchError,
    FormgateError,
    NumericalDivergenceError,
    OracleScaleError,
)
from .gates import GateBank, deterministic_gates, expected_l0, sample_gates
from .grad import GradientBundle, backward, finite_diff_check, gradcheck_suite
from .model import (
    DualStreamModel,
    ModelConfig,
    count_parameters,
    forward,
    forward_batch,
    init_model,
    interaction_dense_oracle,
)
from .checkpoint import load_model, model_from_dict, model_to_dict, save_model
from .network import (
    EvalReport,
    NetworkSpec,
    TaskNetwork,
    TaskNeuronLayer,
    init_layer,
    layer_forward,
    train_network,
)
from .orbit import (
    OrbitApproximant,
    OrbitBudgetError,
    OrbitFit,
    UnimodalMap,
    approximate_function,
    fit_points,
    iterate,
    orbit_array,
    tent_map,
    unimodalize,
)
from .search import SearchConfig, TrainReport, extract_structure, run_search
from .stability import DiversityReport, StabilityConfig, run_stability
from .structure import FormulaStructure, classify_match
from .synthetic import (
    GroundTruth,
    SyntheticSpec,
    generate,
    ground_truth_for,
    run_bench,
    synthetic_splits,
    two_stage_eval,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DiversityReport",
    "DualStreamModel",
    "EvalReport",
    "FormulaStructure",
    "GateBank",
    "GradientBundle",
    "GroundTruth",
    "ModelConfig",
    "NetworkSpec",
    "OrbitApproximant",
    "OrbitBudgetError",
    "OrbitFit",
    "SearchConfig",
    "StabilityConfig",
    "SyntheticSpec",
    "TaskNetwork",
    "TaskNeuronLayer",
    "TrainReport",
    "UnimodalMap",
    "approximate_function",
    "backward",
    "classify_match",
    "count_parameters",
    "deterministic_gates",
    "expected_l0",
    "extract_structure",
    "finite_diff_check",
    "fit_points",
    "forward",
    "forward_batch",
    "generate",
    "gradcheck_suite",
    "ground_truth_for",
    "init_layer",
    "init_model",
    "interaction_dense_oracle",
    "iterate",
    "layer_forward",
    "load_csv",
    "load_dataset",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "orbit_array",
    "run_bench",
    "run_search",
    "run_stability",
    "sample_gates",
    "save_dataset",
    "save_model",
    "split_and_standardize",
    "synthetic_splits",
    "tent_map",
    "train_network",
    "two_stage_eval",
    "unimodalize",
    "ConfigError",
    "DimensionMismatchError",
    "FormgateError",
    "NumericalDivergenceError",
    "OracleScaleError",
]
