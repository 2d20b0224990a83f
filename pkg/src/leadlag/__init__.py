"""Lead-lag detection in multivariate time series via subsequence clustering."""

from .backtest import (
    BacktestReport,
    PnLSeries,
    StrategyConfig,
    ewma,
    performance_report,
    rescale_pnl,
    run_strategy,
    sharpe_significance,
    sweep_strategies,
)
from .cluster import ClusterAssignment, kmeans_pp, spectral
from .core import (
    DataError,
    SubsequenceUniverse,
    TimeSeriesPanel,
    excess_returns,
    extract_subsequences,
    log_returns,
    standardize_windows,
    winsorize,
)
from .experiments import derived_seed, recovery_cell, recovery_sweep
from .detection import (
    DetectConfig,
    DetectionResult,
    LagMultisets,
    LeadLagMatrix,
    VotingMatrix,
    aggregate_lag,
    ccf,
    ccf_lead_lag_matrix,
    detect,
    detect_pipeline,
    lead_lag_matrix,
    pair_lag_multisets,
    rowsum_rank,
    voting_matrix,
)
from .ingest import (
    PreprocessResult,
    RawTable,
    load_csv,
    preprocess_equity,
    preprocess_futures,
    to_panel,
)
from .similarity import (
    SimilarityGraph,
    distance_correlation,
    gaussian_kernel,
    knn_graph,
    pearson,
    similarity_matrix,
)
from .simulate import (
    FactorDesign,
    GroundTruth,
    adjusted_rand_index,
    error_matrix,
    generate_panel,
    ground_truth,
    lag_mse,
    preset_design,
    true_labels,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "ClusterAssignment",
    "DataError",
    "DetectConfig",
    "DetectionResult",
    "FactorDesign",
    "GroundTruth",
    "LagMultisets",
    "LeadLagMatrix",
    "PnLSeries",
    "PreprocessResult",
    "RawTable",
    "SimilarityGraph",
    "StrategyConfig",
    "SubsequenceUniverse",
    "TimeSeriesPanel",
    "VotingMatrix",
    "adjusted_rand_index",
    "aggregate_lag",
    "ccf",
    "ccf_lead_lag_matrix",
    "derived_seed",
    "detect",
    "detect_pipeline",
    "distance_correlation",
    "error_matrix",
    "ewma",
    "excess_returns",
    "extract_subsequences",
    "gaussian_kernel",
    "generate_panel",
    "ground_truth",
    "kmeans_pp",
    "knn_graph",
    "lag_mse",
    "lead_lag_matrix",
    "load_csv",
    "log_returns",
    "pair_lag_multisets",
    "pearson",
    "performance_report",
    "preprocess_equity",
    "preprocess_futures",
    "preset_design",
    "recovery_cell",
    "recovery_sweep",
    "rescale_pnl",
    "rowsum_rank",
    "run_strategy",
    "sharpe_significance",
    "similarity_matrix",
    "spectral",
    "standardize_windows",
    "sweep_strategies",
    "to_panel",
    "true_labels",
    "voting_matrix",
    "winsorize",
]
