"""Nonparametric Granger-causality testing with random features and permutations."""

__version__ = "0.1.0"

from ._validation import DataError, RankDeficiencyError
from .baselines import RatioTest, RatioTestResult, gns_test, ratio_tests, ru_test
from .data import (
    FoldPlan,
    PreparedPanel,
    Realization,
    TimeSeriesPanel,
    fold_plan,
    fold_sizes,
    ingest_csv,
    ingest_directories,
    prepare,
)
from .dimension import DimensionScanResult, select_feature_dim
from .estimator import (
    NPGC,
    PermutationSet,
    PermutationTestResult,
    generate_permutations,
    npgc_test,
    oos_residuals,
    permutation_variances,
    quantile_estimate,
    variance_estimate,
)
from .featurize import FeaturizerBank, RandomFeatureTransformer, featurize, generate_bank

__all__ = [
    "DataError", "RankDeficiencyError",
    "Realization", "TimeSeriesPanel", "PreparedPanel", "FoldPlan",
    "ingest_csv", "ingest_directories", "prepare", "fold_plan", "fold_sizes",
    "FeaturizerBank", "RandomFeatureTransformer", "featurize", "generate_bank",
    "PermutationSet", "PermutationTestResult", "generate_permutations", "oos_residuals",
    "variance_estimate", "quantile_estimate", "permutation_variances", "npgc_test", "NPGC",
    "DimensionScanResult", "select_feature_dim",
    "RatioTest", "RatioTestResult", "ratio_tests", "ru_test", "gns_test",
]
