"""Evaluation metrics: regression (MAE, MxAE, C-index), 4-class ordinal
classification (accuracy, support-weighted precision/recall/F1, quadratic-
weighted Cohen's kappa), and Dice overlap.

Kappa is quadratically weighted, which is what lets it exceed accuracy on an
ordinal scale; the unweighted variant is computed alongside for logging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError


@dataclass
class RegressionReport:
    mae: float      # percent
    mxae: float     # percent
    c_index: Optional[float]  # None when no pair of targets differs

    def to_dict(self) -> dict:
        return {"mae_percent": self.mae, "mxae_percent": self.mxae, "c_index": self.c_index}


@dataclass
class ClassificationReport:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    kappa_weighted: float
    kappa_unweighted: float
    confusion: list = field(default_factory=list)  # 4x4 counts, rows = truth

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision_weighted": self.precision_weighted,
            "recall_weighted": self.recall_weighted,
            "f1_weighted": self.f1_weighted,
            "kappa_weighted": self.kappa_weighted,
            "kappa_unweighted": self.kappa_unweighted,
            "confusion": self.confusion,
        }


@dataclass
class SegmentationReport:
    dice_mean: float
    dice_per_sample: list
    threshold: float

    def to_dict(self) -> dict:
        return {
            "dice_mean": self.dice_mean,
            "dice_per_sample": self.dice_per_sample,
            "threshold": self.threshold,
        }


def _paired(preds, targets):
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size == 0:
        raise DomainError("empty input")
    if p.size != t.size:
        raise ShapeError(f"length mismatch: {p.size} vs {t.size}")
    return p, t


def mae(preds, targets) -> float:
    """Mean absolute error, in percentage points."""
    p, t = _paired(preds, targets)
    return float(np.abs(p - t).mean() * 100.0)


def mxae(preds, targets) -> float:
    """Maximum absolute error, in percentage points."""
    p, t = _paired(preds, targets)
    return float(np.abs(p - t).max() * 100.0)


def c_index(preds, targets) -> float:
    """Concordance over pairs with distinct targets; prediction ties count 0.5."""
    p, t = _paired(preds, targets)
    if p.size < 2:
        raise DomainError("c_index needs at least 2 elements")
    iu = np.triu_indices(p.size, k=1)
    dt = np.sign(t[:, None] - t[None, :])[iu]
    dp = np.sign(p[:, None] - p[None, :])[iu]
    comparable = dt != 0
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise DomainError("c_index undefined: all targets equal")
    concordant = int(((dp == dt) & comparable).sum())
    tied = int(((dp == 0) & comparable).sum())
    return (concordant + 0.5 * tied) / n_comparable


def confusion_matrix(pred_classes, true_classes, n_classes: int = 4) -> np.ndarray:
    p = np.asarray(pred_classes, dtype=np.int64).ravel()
    t = np.asarray(true_classes, dtype=np.int64).ravel()
    if p.size == 0:
        raise DomainError("empty input")
    if p.size != t.size:
        raise ShapeError(f"length mismatch: {p.size} vs {t.size}")
    if (p < 0).any() or (p >= n_classes).any() or (t < 0).any() or (t >= n_classes).any():
        raise DomainError(f"labels must lie in 0..{n_classes - 1}")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    return m


def quadratic_weighted_kappa(confusion: np.ndarray) -> float:
    """1 - (sum w*O) / (sum w*E), w_ij = (i-j)^2, E from the marginals."""
    o = np.asarray(confusion, dtype=np.float64)
    n = o.sum()
    idx = np.arange(o.shape[0], dtype=np.float64)
    w = (idx[:, None] - idx[None, :]) ** 2
    e = np.outer(o.sum(axis=1), o.sum(axis=0)) / n
    den = (w * e).sum()
    if den == 0.0:
        return 1.0  # both marginals concentrated in one class: perfect agreement
    return float(1.0 - (w * o).sum() / den)


def unweighted_kappa(confusion: np.ndarray) -> float:
    o = np.asarray(confusion, dtype=np.float64)
    n = o.sum()
    po = np.trace(o) / n
    pe = (o.sum(axis=1) * o.sum(axis=0)).sum() / (n * n)
    if pe == 1.0:
        return 1.0
    return float((po - pe) / (1.0 - pe))


def classification_report(pred_class4, true_class4) -> ClassificationReport:
    """4-class report with support-weighted averaging and 0-conventions."""
    m = confusion_matrix(pred_class4, true_class4, n_classes=4)
    n = m.sum()
    tp = np.diag(m).astype(np.float64)
    support = m.sum(axis=1).astype(np.float64)   # true-class counts
    predicted = m.sum(axis=0).astype(np.float64)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / pr, 0.0)

    weights = support / n
    # support weighting makes (support_c/N)(TP_c/support_c) telescope to
    # TP_c/N; summing the integer numerators first keeps the recall==accuracy
    # identity exact instead of accumulating two rounding steps per class
    recall_weighted = float(tp[support > 0].sum() / n)
    return ClassificationReport(
        accuracy=float(tp.sum() / n),
        precision_weighted=float((weights * precision).sum()),
        recall_weighted=recall_weighted,
        f1_weighted=float((weights * f1).sum()),
        kappa_weighted=quadratic_weighted_kappa(m),
        kappa_unweighted=unweighted_kappa(m),
        confusion=m.tolist(),
    )


def dice(pred_mask: np.ndarray, truth: np.ndarray, threshold: float = 0.5) -> float:
    """2|A∩B| / (|A|+|B|) after thresholding both arguments; 1.0 if both empty."""
    pred_mask = np.asarray(pred_mask)
    truth = np.asarray(truth)
    if pred_mask.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {pred_mask.shape} vs {truth.shape}")
    a = pred_mask >= threshold
    b = truth >= threshold
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom
