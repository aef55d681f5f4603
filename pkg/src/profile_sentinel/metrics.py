"""Classification and calibration metrics.

The positive class is FAKE throughout. Under that convention the false
accept rate (a fake accepted as legitimate) is fn/(tp+fn), and the false
reject rate (a legitimate profile rejected as fake) is fp/(fp+tn).
Undefined rates (empty denominators) are explicit None markers, never 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MetricError(Exception):
    """Fatal metric-computation problem (misaligned or empty inputs)."""


@dataclass(frozen=True)
class Prediction:
    """One scored profile: probability of being fake, hard label at 0.5."""

    profile_id: str
    p_fake: float

    @property
    def label(self) -> int:
        return int(self.p_fake >= 0.5)


def predictions_from_proba(ids: Sequence[str], p_fake: np.ndarray) -> list[Prediction]:
    if len(ids) != len(p_fake):
        raise MetricError("ids and probabilities are misaligned")
    return [Prediction(pid, float(p)) for pid, p in zip(ids, p_fake)]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    subset: str
    n: int
    f1: float | None
    far: float | None
    frr: float | None
    brier: float | None


@dataclass(frozen=True)
class CalibrationBin:
    index: int
    lo: float
    hi: float
    mean_p: float
    emp_freq: float
    count: int


@dataclass(frozen=True)
class CalibrationCurve:
    bins: tuple[CalibrationBin, ...]
    n_bins: int

    @property
    def n(self) -> int:
        return sum(b.count for b in self.bins)


def confusion(
    preds: Sequence[Prediction],
    truth: Sequence[int],
    threshold: float = 0.5,
) -> ConfusionCounts:
    """Exact counts at a threshold; p_fake >= threshold counts as fake."""
    if len(preds) != len(truth):
        raise MetricError(f"{len(preds)} predictions vs {len(truth)} labels")
    p = np.array([pr.p_fake for pr in preds])
    y = np.asarray(truth, dtype=int)
    called_fake = p >= threshold
    tp = int(np.sum(called_fake & (y == 1)))
    fp = int(np.sum(called_fake & (y == 0)))
    fn = int(np.sum(~called_fake & (y == 1)))
    tn = int(np.sum(~called_fake & (y == 0)))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics(counts: ConfusionCounts, subset: str = "", brier: float | None = None) -> MetricReport:
    """F1/FAR/FRR from confusion counts, with None for empty denominators."""
    f1_den = 2 * counts.tp + counts.fp + counts.fn
    f1 = 2 * counts.tp / f1_den if f1_den > 0 else None
    far = counts.fn / (counts.tp + counts.fn) if (counts.tp + counts.fn) > 0 else None
    frr = counts.fp / (counts.fp + counts.tn) if (counts.fp + counts.tn) > 0 else None
    return MetricReport(subset=subset, n=counts.n, f1=f1, far=far, frr=frr, brier=brier)


def brier(preds: Sequence[Prediction], truth: Sequence[int]) -> float:
    """Mean squared error between p_fake and the 0/1 truth."""
    if len(preds) == 0:
        raise MetricError("brier score of an empty set")
    if len(preds) != len(truth):
        raise MetricError(f"{len(preds)} predictions vs {len(truth)} labels")
    p = np.array([pr.p_fake for pr in preds])
    y = np.asarray(truth, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


def evaluate(preds: Sequence[Prediction], truth: Sequence[int], subset: str = "") -> MetricReport:
    """Confusion + rates + Brier in one report."""
    return metrics(confusion(preds, truth), subset=subset, brier=brier(preds, truth))


def reliability(preds: Sequence[Prediction], truth: Sequence[int], bins: int = 10) -> CalibrationCurve:
    """Equal-width reliability bins on [0, 1].

    Bin rule: [lo, hi) for every bin except the final one, which is closed,
    so p = 1.0 lands in the last bin. Empty bins are omitted; indices are
    preserved.
    """
    if bins < 2:
        raise MetricError("reliability needs at least 2 bins")
    if len(preds) == 0:
        raise MetricError("reliability of an empty set")
    if len(preds) != len(truth):
        raise MetricError(f"{len(preds)} predictions vs {len(truth)} labels")
    p = np.array([pr.p_fake for pr in preds])
    y = np.asarray(truth, dtype=np.float64)
    idx = np.minimum(np.floor(p * bins).astype(int), bins - 1)
    out = []
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        out.append(
            CalibrationBin(
                index=b,
                lo=b / bins,
                hi=(b + 1) / bins,
                mean_p=float(p[mask].mean()),
                emp_freq=float(y[mask].mean()),
                count=count,
            )
        )
    return CalibrationCurve(bins=tuple(out), n_bins=bins)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation coefficient; None when either side has zero variance."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise MetricError("pearson needs two aligned 1-D sequences of length >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    if denom == 0.0:
        return None
    return float(np.clip(np.sum(xc * yc) / denom, -1.0, 1.0))
