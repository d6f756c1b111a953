"""Error metrics emitting reports key-compatible with ``thermkit metrics``.

Definitions follow the documented report contract: percentage errors are
relative to the truth field (strictly positive kelvins), `mape_pct` averages
over every value, `pape_pct` averages each sample's peak percentage error,
and aggregation weights value-level metrics by element count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SampleMetrics:
    index: int
    rmse: float
    mape_pct: float
    pape_pct: float
    mean_abs: float
    max_abs: float
    n_values: int

    def to_json(self) -> dict:
        return {"index": self.index, "rmse_k": self.rmse,
                "mape_pct": self.mape_pct, "pape_pct": self.pape_pct,
                "mean_abs_k": self.mean_abs, "max_abs_k": self.max_abs,
                "n_values": self.n_values}


@dataclass(frozen=True)
class Report:
    rmse: float
    mape_pct: float
    pape_pct: float
    mean_abs: float
    max_abs: float
    n_samples: int
    per_sample: tuple[SampleMetrics, ...] = field(default=())

    def to_json(self) -> dict:
        return {"rmse_k": self.rmse, "mape_pct": self.mape_pct,
                "pape_pct": self.pape_pct, "mean_abs_k": self.mean_abs,
                "max_abs_k": self.max_abs, "n_samples": self.n_samples,
                "per_sample": [s.to_json() for s in self.per_sample]}


def evaluate(preds, truths) -> Report:
    """Aggregate metrics over parallel lists of predicted/true fields (K)."""
    if len(preds) != len(truths):
        raise DataError(
            f"{len(preds)} predictions vs {len(truths)} truth fields")
    if not len(preds):
        raise DataError("cannot evaluate an empty sample list")

    rows = []
    for i, (p, t) in enumerate(zip(preds, truths)):
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if p.shape != t.shape:
            raise DataError(
                f"sample {i}: prediction shape {p.shape} != truth {t.shape}")
        if not np.all(t > 0):
            raise DataError(f"sample {i}: truth must be strictly positive K")
        err = np.abs(p - t)
        pct = 100.0 * err / t
        rows.append(SampleMetrics(
            index=i,
            rmse=float(np.sqrt(np.mean((p - t) ** 2))),
            mape_pct=float(pct.mean()),
            pape_pct=float(pct.max()),
            mean_abs=float(err.mean()),
            max_abs=float(err.max()),
            n_values=int(err.size),
        ))

    n = np.array([r.n_values for r in rows], dtype=np.float64)
    total = n.sum()
    sq = np.array([r.rmse ** 2 for r in rows])
    return Report(
        rmse=float(np.sqrt((sq * n).sum() / total)),
        mape_pct=float((np.array([r.mape_pct for r in rows]) * n).sum() / total),
        pape_pct=float(np.mean([r.pape_pct for r in rows])),
        mean_abs=float((np.array([r.mean_abs for r in rows]) * n).sum() / total),
        max_abs=float(max(r.max_abs for r in rows)),
        n_samples=len(rows),
        per_sample=tuple(rows),
    )
