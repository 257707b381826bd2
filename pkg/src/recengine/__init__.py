"""Recommendation engine toolkit: rating data handling, splits, neighborhood,
factorization, graph and sparse models, ensembles, evaluation, RFM
segmentation and hyperparameter search."""

from .core import (GlobalMeanModel, Interaction, RatingDataset, RecommendationList, SparseRatingMatrix,
                   build_matrix, global_mean, top_k)
from .ensemble import (BaggingEnsemble, BoostingEnsemble, EnsembleSpec, StackingEnsemble, WeightedEnsemble,
                       WeightedHybrid, bagging_fit, boosting_fit, hybrid_weighted, stacking_fit, weighted_combine)
from .errors import RecEngineError
from .evaluation import (ConfusionCounts, EvalConfig, EvaluationReport, RankedJudgments, auc_roc, average_precision,
                         classification_metrics, coverage, evaluate, mean_average_precision, precision_at_k, rmse)
from .factor import (FMModel, MFModel, TensorData, TensorModel, TrainConfig, fm_fit, fm_predict, mf_fit, mf_predict,
                     tf_fit, tf_predict)
from .graph import (InteractionGraph, LinearModel, SlimModel, WalkConfig, build_graph, compute_S, linear_fit,
                    linear_predict, rw_similarity, slim_fit, slim_predict)
from .ingest import dataset_stats, parse_items, parse_ratings, parse_transactions
from .persist import load_model, save_model
from .preprocess import apply_normalizer, fit_normalizer, invert_normalizer, one_hot_encode
from .segmentation import SEGMENTS, assign_segment, compute_rfm, kmeans_segment, score_quintiles
from .similarity import KNNModel, build_user_profile, cbf_predict, cosine_similarity, knn_fit, knn_predict
from .split import SplitResult, carve_validation, kfold, stratified_split, time_split, train_test_split
from .tuning import HyperGrid, TuneResult, grid_search, random_search

__version__ = "0.1.0"
