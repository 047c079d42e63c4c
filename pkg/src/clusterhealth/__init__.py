"""Method-agnostic cluster health scoring from bucket-by-cluster cross-tabs."""

from .analysis import (
    ComparisonReport,
    ImpactReport,
    ScoreCurve,
    compare_methods,
    k_sweep,
    prepare,
    score_assignment,
    score_kmeans,
    suggest_k,
    variable_impact,
)
from .binning import BinnedVariable, BinStrategy, bin_numeric, bin_variable, encode_categorical
from .clustering import KMeansConfig, kmeans, load_assignment
from .data import Dataset, Kind, Variable, drop_variables, load_dataset
from .metric import (
    ClusterAssignment,
    CrossTabMatrix,
    ScoreReport,
    SegregationResult,
    VariableScore,
    crosstab,
    dataset_score,
    outlier_cells,
    segregated_count,
    sparse_mask_render,
    variable_score,
)

__version__ = "0.1.0"
