from .config import LossWeights, ModelConfig, TrainConfig, Variant
from .evaluate import EvalReport, RidgeProbe, evaluate, mean_abs_cross_cosine, probe_accuracy
from .model import Model
from .run import ABLATION_COLUMNS, RunResult, ablate, run_experiment, write_ablation, write_report
from .train import LOG_COLUMNS, combined_loss, train

__all__ = [
    "ABLATION_COLUMNS", "EvalReport", "LOG_COLUMNS", "LossWeights", "Model", "ModelConfig", "RidgeProbe",
    "RunResult", "TrainConfig", "Variant", "ablate", "combined_loss", "evaluate", "mean_abs_cross_cosine",
    "probe_accuracy", "run_experiment", "train", "write_ablation", "write_report",
]
