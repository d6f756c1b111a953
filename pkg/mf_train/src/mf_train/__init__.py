"""Multi-fidelity operator-learning harness over thermkit datasets.

Consumes the simulator strictly through its published interfaces — the
``thermkit`` command line, the binary dataset format with its manifest, and
JSON metric reports — and trains a small embed/backbone/recover field model
with a two-stage fidelity schedule, diffusion-corpus pretraining, and
few-shot cross-package transfer.
"""

from .errors import ConfigError, DataError, MfTrainError, TrainingError
from .metrics import Report, evaluate
from .model import ModelSpec, OperatorModel
from .records import Dataset, NormStats, Sample, read_tensor, write_tensor
from .train import (AdaptResult, PretrainResult, TrainConfig, adapt, build_xy,
                    evaluate_model, few_shot, load_checkpoint, predict,
                    pretrain, run_stage, save_checkpoint)

__all__ = [
    "AdaptResult", "ConfigError", "DataError", "Dataset", "MfTrainError",
    "ModelSpec", "NormStats", "OperatorModel", "PretrainResult", "Report",
    "Sample", "TrainConfig", "TrainingError", "adapt", "build_xy",
    "evaluate", "evaluate_model", "few_shot", "load_checkpoint", "predict",
    "pretrain", "read_tensor", "run_stage", "save_checkpoint",
    "write_tensor",
]
