"""Classification metrics, ROC area, stratified splitting and run aggregation.

Positive class is malignant (label 1). Metric formulas follow the usual
confusion-matrix definitions; ``auc_paper`` is the threshold-bound balanced
accuracy ``(SEN + SPE) / 2`` and ``roc_auc`` the ranking-based area.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

BENIGN, MALIGNANT = 0, 1
LABEL_NAMES = {"benign": BENIGN, "malignant": MALIGNANT}
# Column order of the published result tables, plus the ranking AUC.
METRIC_COLUMNS = ("ACC", "AUC", "MCC", "SEN", "SPE", "PPV", "NPV", "roc_auc")
_FIELD_FOR_COLUMN = {"ACC": "acc", "AUC": "auc_paper", "MCC": "mcc", "SEN": "sen",
                     "SPE": "spe", "PPV": "ppv", "NPV": "npv", "roc_auc": "roc_auc"}


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp


@dataclass
class MetricsReport:
    sen: float
    spe: float
    ppv: float
    npv: float
    acc: float
    auc_paper: float
    mcc: float
    roc_auc: float = math.nan
    degenerate: tuple[str, ...] = field(default=())

    def as_row(self, percent: bool = True) -> dict[str, float]:
        scale = 100.0 if percent else 1.0
        return {c: getattr(self, _FIELD_FOR_COLUMN[c]) * scale for c in METRIC_COLUMNS}


def _encode(labels) -> np.ndarray:
    out = []
    for v in labels:
        if isinstance(v, str):
            if v not in LABEL_NAMES:
                raise ValueError(f"unknown label {v!r}")
            out.append(LABEL_NAMES[v])
        else:
            if int(v) not in (0, 1):
                raise ValueError(f"labels must be 0/1, got {v!r}")
            out.append(int(v))
    return np.asarray(out, dtype=np.int64)


def confusion(labels, preds) -> ConfusionCounts:
    labels, preds = _encode(labels), _encode(preds)
    if len(labels) != len(preds):
        raise ValueError(f"length mismatch: {len(labels)} labels, {len(preds)} predictions")
    if len(labels) == 0:
        raise ValueError("confusion needs at least one sample")
    tp = int(np.sum((labels == 1) & (preds == 1)))
    fn = int(np.sum((labels == 1) & (preds == 0)))
    tn = int(np.sum((labels == 0) & (preds == 0)))
    fp = int(np.sum((labels == 0) & (preds == 1)))
    return ConfusionCounts(tp=tp, fn=fn, tn=tn, fp=fp)


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics_from_confusion(c: ConfusionCounts) -> MetricsReport:
    """The seven threshold metrics; empty denominators give 0 and are flagged."""
    flags: list[str] = []
    sen = _ratio(c.tp, c.tp + c.fn, "sen", flags)
    spe = _ratio(c.tn, c.fp + c.tn, "spe", flags)
    ppv = _ratio(c.tp, c.tp + c.fp, "ppv", flags)
    npv = _ratio(c.tn, c.tn + c.fn, "npv", flags)
    acc = _ratio(c.tp + c.tn, c.total, "acc", flags)
    auc = 0.5 * (sen + spe)
    den = (c.tp + c.fn) * (c.tp + c.fp) * (c.tn + c.fn) * (c.tn + c.fp)
    if den == 0:
        flags.append("mcc")
        mcc = 0.0
    else:
        mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(den)
    return MetricsReport(sen=sen, spe=spe, ppv=ppv, npv=npv, acc=acc, auc_paper=auc, mcc=mcc,
                         degenerate=tuple(flags))


def roc_auc(labels, scores) -> float:
    """Probability a random positive outscores a random negative (ties count half)."""
    labels = _encode(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if len(labels) != len(scores):
        raise ValueError("labels and scores differ in length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC area needs both classes")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(labels, probs) -> MetricsReport:
    """Metrics from class-probability rows; prediction is the argmax."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _encode(labels)
    preds = probs.argmax(axis=1)
    report = metrics_from_confusion(confusion(labels, preds))
    try:
        report.roc_auc = roc_auc(labels, probs[:, 1])
    except UndefinedMetricError:
        report.roc_auc = math.nan
    return report


def stratified_split(labels, train_fraction: float = 0.8, seed: int = 0):
    """Per-class shuffle; ``floor(fraction * n_class)`` of each class goes to train.

    Returns sorted index arrays ``(train, test)``.
    """
    labels = np.asarray(labels)
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (BENIGN, MALIGNANT):
        idx = np.flatnonzero(labels == cls)
        if len(idx) == 0:
            raise ValueError(f"class {cls} has no samples")
        idx = rng.permutation(idx)
        k = int(math.floor(train_fraction * len(idx)))
        train.extend(idx[:k].tolist())
        test.extend(idx[k:].tolist())
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def aggregate_runs(reports) -> dict[str, tuple[float, float]]:
    """Per-column (mean, sample std) in percent; std is 0 for a single run."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for col in METRIC_COLUMNS:
        vals = np.array([getattr(r, _FIELD_FOR_COLUMN[col]) * 100.0 for r in reports])
        finite = vals[~np.isnan(vals)]
        if len(finite) == 0:
            out[col] = (math.nan, math.nan)
            continue
        mean = float(finite.mean())
        std = float(finite.std(ddof=1)) if len(finite) > 1 else 0.0
        out[col] = (mean, std)
    return out


def report_to_dict(report: MetricsReport) -> dict:
    return asdict(report)
