"""Error metrics for predicted temperature fields.

All metrics reduce over every voxel/frame of every sample. Percentage
metrics divide by the absolute truth temperature in Kelvin (which must be
strictly positive): MAPE is the mean percentage error; PAPE is the mean over
samples of each sample's peak percentage error, so it is a per-field peak
statistic rather than a corpus-wide max. Consequences: rmse/mean_abs/max_abs
are shift-invariant, mape/pape are not; pape >= mape always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricsError


@dataclass(frozen=True)
class SampleMetrics:
    """Metrics of one predicted field against its truth."""

    index: int
    rmse: float
    mape_pct: float
    pape_pct: float
    mean_abs: float
    max_abs: float
    n_values: int

    def to_json(self) -> dict:
        return {
            "index": self.index, "rmse_k": self.rmse,
            "mape_pct": self.mape_pct, "pape_pct": self.pape_pct,
            "mean_abs_k": self.mean_abs, "max_abs_k": self.max_abs,
            "n_values": self.n_values,
        }


@dataclass(frozen=True)
class MetricReport:
    """Aggregate error metrics over a set of samples."""

    rmse: float                  # K
    mape_pct: float              # %
    pape_pct: float              # %
    mean_abs: float              # K
    max_abs: float               # K
    n_samples: int
    per_sample: tuple[SampleMetrics, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "rmse_k": self.rmse,
            "mape_pct": self.mape_pct,
            "pape_pct": self.pape_pct,
            "mean_abs_k": self.mean_abs,
            "max_abs_k": self.max_abs,
            "n_samples": self.n_samples,
            "per_sample": [s.to_json() for s in self.per_sample],
        }

    @staticmethod
    def from_json(obj: dict) -> "MetricReport":
        per = tuple(
            SampleMetrics(
                index=int(s["index"]), rmse=float(s["rmse_k"]),
                mape_pct=float(s["mape_pct"]), pape_pct=float(s["pape_pct"]),
                mean_abs=float(s["mean_abs_k"]),
                max_abs=float(s["max_abs_k"]), n_values=int(s["n_values"]),
            )
            for s in obj.get("per_sample", ())
        )
        return MetricReport(
            rmse=float(obj["rmse_k"]), mape_pct=float(obj["mape_pct"]),
            pape_pct=float(obj["pape_pct"]), mean_abs=float(obj["mean_abs_k"]),
            max_abs=float(obj["max_abs_k"]), n_samples=int(obj["n_samples"]),
            per_sample=per,
        )


def _as_sample_list(fields) -> list[np.ndarray]:
    if isinstance(fields, np.ndarray):
        return [fields]
    return [np.asarray(f) for f in fields]


def evaluate(pred, truth) -> MetricReport:
    """Compare predicted fields to truth fields.

    pred/truth are matching sequences of arrays (one entry per sample; any
    shape, compared elementwise) or single arrays treated as one sample.
    Truths are absolute Kelvin and must be strictly positive.
    """
    preds = _as_sample_list(pred)
    truths = _as_sample_list(truth)
    if len(preds) != len(truths):
        raise MetricsError(
            f"sample count mismatch: {len(preds)} predictions vs "
            f"{len(truths)} truths"
        )
    if not preds:
        raise MetricsError("cannot evaluate an empty sample set")

    per_sample = []
    sq_sum = 0.0
    abs_sum = 0.0
    pct_sum = 0.0
    n_total = 0
    max_abs = 0.0
    for i, (p, t) in enumerate(zip(preds, truths)):
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if p.shape != t.shape:
            raise MetricsError(
                f"sample {i}: shape mismatch {p.shape} vs {t.shape}"
            )
        if not np.all(t > 0):
            raise MetricsError(
                f"sample {i}: truth contains nonpositive Kelvin values"
            )
        err = np.abs(p - t)
        pct = 100.0 * err / t
        n = err.size
        per_sample.append(SampleMetrics(
            index=i,
            rmse=float(np.sqrt(np.mean(err ** 2))),
            mape_pct=float(pct.mean()),
            pape_pct=float(pct.max()),
            mean_abs=float(err.mean()),
            max_abs=float(err.max()),
            n_values=n,
        ))
        sq_sum += float(np.sum(err ** 2))
        abs_sum += float(err.sum())
        pct_sum += float(pct.sum())
        n_total += n
        max_abs = max(max_abs, float(err.max()))

    return MetricReport(
        rmse=math.sqrt(sq_sum / n_total),
        mape_pct=pct_sum / n_total,
        pape_pct=float(np.mean([s.pape_pct for s in per_sample])),
        mean_abs=abs_sum / n_total,
        max_abs=max_abs,
        n_samples=len(preds),
        per_sample=tuple(per_sample),
    )


@dataclass(frozen=True)
class ImprovementRatio:
    """baseline/ours ratios for mean and max error (1.0 = parity; larger is
    better for "ours"). infinite flags a zero in our errors."""

    delta_mean: float
    delta_max: float
    infinite: bool = False

    def to_json(self) -> dict:
        return {"delta_mean": self.delta_mean, "delta_max": self.delta_max,
                "infinite": self.infinite}


def improvement_ratio(report: MetricReport,
                      baseline: MetricReport) -> ImprovementRatio:
    """Relative improvement of `report` over `baseline` in mean/max error."""
    if not (baseline.mean_abs > 0 and baseline.max_abs > 0):
        raise MetricsError(
            "baseline errors must be positive to define improvement ratios"
        )
    infinite = report.mean_abs == 0 or report.max_abs == 0
    delta_mean = (math.inf if report.mean_abs == 0
                  else baseline.mean_abs / report.mean_abs)
    delta_max = (math.inf if report.max_abs == 0
                 else baseline.max_abs / report.max_abs)
    return ImprovementRatio(delta_mean=delta_mean, delta_max=delta_max,
                            infinite=infinite)
