"""Training stages: pretraining, two-stage adaptation, few-shot transfer.

All stages minimize mean-squared error on standardized fields. Heads (embed
and recover) always train faster than the backbone, and the final
calibration stage on high-fidelity data runs at a reduced rate so it
corrects the low-fidelity bias without erasing what the earlier stage
learned. Runs are deterministic on CPU for a fixed config seed: data order
comes from a seeded generator and no stochastic layers are used.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .errors import ConfigError, DataError, TrainingError
from .model import ModelSpec, OperatorModel
from .records import Dataset, NormStats, Sample

TEMP_CHANNEL = "temperature"


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one stage schedule.

    Heads learn faster than the backbone (fresh task-specific layers vs a
    transferable operator core); the calibration scale multiplies both rates
    in the final high-fidelity stage.
    """

    lr_heads: float = 2e-3
    lr_backbone: float = 5e-4
    lr_calibration_scale: float = 0.3
    batch_size: int = 16
    epochs: int = 60
    weight_decay: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not (self.lr_heads > 0 and self.lr_backbone > 0):
            raise ConfigError(f"learning rates must be positive: {self}")
        if not 0.0 < self.lr_calibration_scale < 1.0:
            raise ConfigError(
                f"lr_calibration_scale must be in (0, 1): {self}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError(f"batch_size and epochs must be >= 1: {self}")

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# data assembly


def build_xy(samples: list[Sample], stats: NormStats,
             power_channels: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Standardized model arrays from records.

    Steady records give X (N, C, H, W) / Y (N, 1, H, W). Transient records
    are predicted jointly: the frame axis folds into channels, X becomes
    (N, F*C, H, W) and Y (N, F, H, W).
    """
    xs, ys = [], []
    for s in samples:
        power = np.asarray(s.power, dtype=np.float32)
        if power.ndim == 3:          # steady: (C, H, W)
            x = np.stack([stats.normalize(name, power[i])
                          for i, name in enumerate(power_channels)])
            y = stats.normalize(TEMP_CHANNEL, s.temp)[None]
        elif power.ndim == 4:        # transient: (F, C, H, W)
            f, c, h, w = power.shape
            x = np.stack([stats.normalize(power_channels[i % c],
                                          power[i // c, i % c])
                          for i in range(f * c)])
            y = stats.normalize(TEMP_CHANNEL, s.temp)
        else:
            raise DataError(f"power tensor rank {power.ndim} unsupported")
        xs.append(x)
        ys.append(y)
    return np.stack(xs), np.stack(ys)


def _loader(x: torch.Tensor, y: torch.Tensor, batch: int,
            gen: torch.Generator):
    order = torch.randperm(x.shape[0], generator=gen)
    for i in range(0, len(order), batch):
        idx = order[i:i + batch]
        yield x[idx], y[idx]


def predict(model: OperatorModel, x: np.ndarray,
            batch: int = 32) -> np.ndarray:
    model.eval()
    outs = []
    with torch.no_grad():
        xt = torch.from_numpy(np.asarray(x, dtype=np.float32))
        for i in range(0, xt.shape[0], batch):
            outs.append(model(xt[i:i + batch]).numpy())
    return np.concatenate(outs)


def mse(model: OperatorModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((predict(model, x) - y) ** 2))


# ---------------------------------------------------------------------------
# stage runner


def run_stage(model: OperatorModel, x: np.ndarray, y: np.ndarray,
              config: TrainConfig, lr_scale: float = 1.0,
              epochs: int | None = None) -> list[float]:
    """Train in place; returns the per-epoch mean training loss."""
    if x.shape[0] == 0:
        raise TrainingError("cannot train on an empty sample set")
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    xt = torch.from_numpy(np.asarray(x, dtype=np.float32))
    yt = torch.from_numpy(np.asarray(y, dtype=np.float32))
    opt = torch.optim.AdamW(
        [{"params": list(model.head_parameters()),
          "lr": config.lr_heads * lr_scale},
         {"params": list(model.backbone_parameters()),
          "lr": config.lr_backbone * lr_scale}],
        weight_decay=config.weight_decay)
    loss_fn = torch.nn.MSELoss()

    curve = []
    model.train()
    for _ in range(epochs if epochs is not None else config.epochs):
        total, count = 0.0, 0
        for xb, yb in _loader(xt, yt, config.batch_size, gen):
            opt.zero_grad()
            loss = loss_fn(model(xb), yb)
            loss.backward()
            opt.step()
            total += loss.item() * xb.shape[0]
            count += xb.shape[0]
        curve.append(total / count)
        if not np.isfinite(curve[-1]):
            raise TrainingError(
                f"training diverged (loss={curve[-1]}) with config "
                f"{json.dumps(config.to_json())}")
    return curve


# ---------------------------------------------------------------------------
# stages


@dataclass
class PretrainResult:
    model: OperatorModel
    init_loss: float
    curve: list[float]


def pretrain(model: OperatorModel, x: np.ndarray, y: np.ndarray,
             config: TrainConfig) -> PretrainResult:
    """Train the full model on the diffusion corpus; backbone is the prize."""
    init_loss = mse(model, x, y)
    curve = run_stage(model, x, y, config)
    return PretrainResult(model=model, init_loss=init_loss, curve=curve)


@dataclass
class AdaptResult:
    model: OperatorModel
    curves: dict[str, list[float]]
    val_mse: dict[str, float] = field(default_factory=dict)


def adapt(model: OperatorModel, lf: tuple[np.ndarray, np.ndarray] | None,
          hf: tuple[np.ndarray, np.ndarray],
          config: TrainConfig,
          val: tuple[np.ndarray, np.ndarray] | None = None) -> AdaptResult:
    """Two-stage fidelity schedule on one task.

    Stage 1 trains at full rates on the low-fidelity set (or, when absent,
    on the high-fidelity set, degenerating to plain supervised training);
    stage 2 always calibrates on high-fidelity data at reduced rates. The
    epoch budget of each stage is `config.epochs`, so schedules with and
    without low-fidelity data are matched in optimization steps per sample
    seen and differ only in what stage 1 trains on. When a validation pair
    is given, its MSE is recorded after each stage.
    """
    if hf is None or hf[0].shape[0] == 0:
        raise TrainingError(
            "adaptation requires high-fidelity data for the calibration "
            "stage; got an empty set")
    curves, val_mse = {}, {}
    stage1 = lf if lf is not None and lf[0].shape[0] > 0 else hf
    curves["stage1"] = run_stage(model, stage1[0], stage1[1], config)
    if val is not None:
        val_mse["stage1"] = mse(model, val[0], val[1])
    curves["stage2"] = run_stage(model, hf[0], hf[1], config,
                                 lr_scale=config.lr_calibration_scale)
    if val is not None:
        val_mse["stage2"] = mse(model, val[0], val[1])
    return AdaptResult(model=model, curves=curves, val_mse=val_mse)


def few_shot(source: OperatorModel, pool: tuple[np.ndarray, np.ndarray],
             n_values: list[int], config: TrainConfig,
             epochs: int | None = None,
             lr_scale: float | None = None) -> dict[int, OperatorModel]:
    """Fine-tune copies of a source-task model on n target samples each.

    Subsets are nested (a seeded shuffle of the pool, truncated to n), so a
    larger n strictly adds information. By default fine-tuning runs at the
    calibration rates; pass ``lr_scale`` (e.g. 1.0) to override when the
    target case differs enough that the model needs re-fitting rather than
    correction.
    """
    x, y = pool
    if max(n_values) > x.shape[0]:
        raise TrainingError(
            f"n={max(n_values)} exceeds the target training pool "
            f"({x.shape[0]} samples)")
    if lr_scale is None:
        lr_scale = config.lr_calibration_scale
    order = np.random.default_rng(config.seed).permutation(x.shape[0])
    out = {}
    for n in n_values:
        model = copy.deepcopy(source)
        sub = order[:n]
        run_stage(model, x[sub], y[sub], config, lr_scale=lr_scale,
                  epochs=epochs)
        out[n] = model
    return out


def evaluate_model(model: OperatorModel, samples: list[Sample],
                   stats: NormStats,
                   power_channels: list[str]) -> metrics.Report:
    """Predict a split and score it in kelvin against the record targets."""
    if not samples:
        raise DataError("cannot evaluate an empty split")
    x, _ = build_xy(samples, stats, power_channels)
    pred_norm = predict(model, x)
    preds, truths = [], []
    for i, s in enumerate(samples):
        p = stats.denormalize(TEMP_CHANNEL, pred_norm[i])
        preds.append(p[0] if np.asarray(s.temp).ndim == 2 else p)
        truths.append(np.asarray(s.temp, dtype=np.float64))
    return metrics.evaluate(preds, truths)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, model: OperatorModel,
                    stats: NormStats | None, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "spec": model.spec.to_json(),
        "state": model.state_dict(),
        "norm_stats": stats.to_json() if stats else None,
        "meta": meta or {},
    }, path)


def load_checkpoint(path: str | Path
                    ) -> tuple[OperatorModel, NormStats | None, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no checkpoint at {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    model = OperatorModel(ModelSpec.from_json(blob["spec"]))
    model.load_state_dict(blob["state"])
    stats = (NormStats(channels={
        k: (float(v["mean"]), float(v["std"]))
        for k, v in blob["norm_stats"].items()})
        if blob.get("norm_stats") else None)
    return model, stats, blob.get("meta", {})


def check_stats_match(stats: NormStats, ds: Dataset) -> None:
    """Refuse to evaluate with statistics that are not the dataset's own."""
    manifest_stats = ds.norm_stats()
    if stats.channels != manifest_stats.channels:
        raise DataError(
            "normalization statistics mismatch: the checkpoint was not "
            f"standardized with the manifest of {ds.root}")
