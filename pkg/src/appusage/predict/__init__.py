"""CGPA prediction from usage features."""
from .models import ElasticNet, Knn, Lasso, LinearModel, MeanBaseline, NotConverged, Voting, coordinate_descent
from .pipeline import (
    CGPA_RANGE,
    DEFAULT_GRIDS,
    LAMBDA_GRID,
    CVResult,
    EmptySelection,
    EstimatorSpec,
    FoldScore,
    PipelineConfig,
    PipelineResult,
    PredictionReport,
    Scaler,
    SelectionSpec,
    build_voting,
    evaluate,
    fold_indices,
    grid_search_cv,
    make_estimator,
    run_pipeline,
    select_features,
    split_train_test,
    standardize_apply,
    standardize_fit,
)
