# Evaluation harness: synthetic corpora, attack channels, error-rate metrics
from .metrics import ErrorRates, calibrate_threshold, compute_acer, sweep_thresholds
from .runner import EvaluationReport, evaluate

__all__ = ["ErrorRates", "calibrate_threshold", "compute_acer", "sweep_thresholds", "EvaluationReport", "evaluate"]
