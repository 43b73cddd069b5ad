"""Student/teacher training, corruption-grid evaluation and reporting."""
from .experiment import (METHOD_KINDS, CellResult, ComparisonResult, EvalReport, ExperimentConfig, MethodSpec,
                         StudentHyperparams, build_targets, evaluate_grid, metrics_csv, prepare_data, report,
                         run_comparison, train_student)
