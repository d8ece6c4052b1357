"""Multi-output prediction by problem transformation.

Independent models (IM), stacking (STA) and component-wise multi-output
boosting (CMOB), which learns sparse, interpretable dependencies between
targets from their cross-validated predictions.
"""

from .compboost import (BaseLearnerSpace, BoostModel, BoostParams, GroupIntercept, Linear,
                        LossKind, aggregated_coefficients, boost_fit, boost_predict, importance)
from .data import (Dataset, FoldAssignment, Standardizer, TargetColumn, TargetKind,
                   fetch_openml, fit_standardizer, kfold_split, load_csv, load_openml, parse_arff)
from .evaluation import (BenchmarkConfig, BenchmarkResult, MetricSpec, hamming_loss, mmce, mmse,
                         run_benchmark, standardized_mse, weighted_loss)
from .learners import ForestModel, ForestParams, fit_forest, predict_forest
from .multioutput import (MultiOutputModel, Variant, cv_predicted_targets, predict_multioutput,
                          train_cmob, train_im, train_sta)
from .report import dependency_matrix, render_heatmap_svg, render_results_table

__version__ = "0.1.0"
