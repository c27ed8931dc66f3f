"""Classification/regression metrics, model ensembling, severity analysis.

Severity buckets follow the common MMSE convention: Normal 24-30, Mild 19-23,
Moderate 10-18, Severe 0-9. Continuous predictions are rounded half-up before
bucketing. The regression report carries two r-squared flavors, the
coefficient of determination and the squared Pearson correlation, labeled
separately since either may be meant by an "r^2" figure.
"""

from __future__ import annotations

import math
import statistics
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import MMSE_MAX

__all__ = [
    "ClassScores",
    "Metrics",
    "RegressionMetrics",
    "SeverityClass",
    "SeverityReport",
    "classification_metrics",
    "regression_metrics",
    "ensemble",
    "severity_class",
    "severity_agreement",
    "severity_report",
    "metrics_csv",
]


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    non_ad: ClassScores
    ad: ClassScores
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "non_ad": vars(self.non_ad).copy(),
            "ad": vars(self.ad).copy(),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


@dataclass(frozen=True)
class RegressionMetrics:
    rmse: float
    r2: float          # coefficient of determination, 1 - SS_res / SS_tot
    r2_pearson: float  # squared Pearson correlation

    def to_json(self) -> dict:
        return {"rmse": self.rmse, "r2": self.r2, "r2_pearson": self.r2_pearson}


def _prf(tp: int, fp: int, fn: int) -> ClassScores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return ClassScores(precision, recall, f1)


def classification_metrics(preds: Sequence[bool], truths: Sequence[bool]) -> Metrics:
    """Confusion-matrix scores per class plus accuracy and macro averages.

    Undefined ratios (no predicted or no true members of a class) are 0."""
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions for {len(truths)} truths")
    if not preds:
        raise ValueError("no predictions to score")
    tp = sum(1 for p, t in zip(preds, truths) if p and t)
    tn = sum(1 for p, t in zip(preds, truths) if not p and not t)
    fp = sum(1 for p, t in zip(preds, truths) if p and not t)
    fn = sum(1 for p, t in zip(preds, truths) if not p and t)
    ad = _prf(tp, fp, fn)
    non_ad = _prf(tn, fn, fp)  # the negative class swaps error roles
    return Metrics(
        accuracy=(tp + tn) / len(preds),
        non_ad=non_ad,
        ad=ad,
        macro_precision=(ad.precision + non_ad.precision) / 2,
        macro_recall=(ad.recall + non_ad.recall) / 2,
        macro_f1=(ad.f1 + non_ad.f1) / 2,
    )


def regression_metrics(preds: Sequence[float], truths: Sequence[float]) -> RegressionMetrics:
    """RMSE plus both r-squared readings. Constant truths make both r-squared
    values undefined; they come back NaN with a warning."""
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions for {len(truths)} truths")
    if len(preds) < 2:
        raise ValueError("regression metrics need at least two samples")
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    rmse = float(np.sqrt(np.mean((p - t) ** 2)))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        warnings.warn("constant ground truths: r-squared is undefined", stacklevel=2)
        return RegressionMetrics(rmse=rmse, r2=math.nan, r2_pearson=math.nan)
    r2 = 1.0 - float(np.sum((p - t) ** 2)) / ss_tot
    ss_p = float(np.sum((p - p.mean()) ** 2))
    if ss_p == 0.0:
        r2_pearson = 0.0  # constant predictions carry no correlation
    else:
        cov = float(np.sum((p - p.mean()) * (t - t.mean())))
        r2_pearson = cov * cov / (ss_p * ss_tot)
    return RegressionMetrics(rmse=rmse, r2=r2, r2_pearson=r2_pearson)


def ensemble(member_outputs: Sequence[tuple[bool, float]]) -> tuple[bool, float]:
    """Majority vote for the class (ties go AD-positive) and the median MMSE
    (even counts average the middle two)."""
    if not member_outputs:
        raise ValueError("ensemble needs at least one member output")
    votes = [bool(c) for c, _ in member_outputs]
    ayes = sum(votes)
    label = ayes * 2 >= len(votes)  # tie resolves to the positive class
    mmse = float(statistics.median(m for _, m in member_outputs))
    return label, mmse


class SeverityClass(Enum):
    NORMAL = "normal"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


# (class, lowest integer MMSE, highest integer MMSE); partition of [0, 30]
SEVERITY_RANGES: tuple[tuple[SeverityClass, int, int], ...] = (
    (SeverityClass.SEVERE, 0, 9),
    (SeverityClass.MODERATE, 10, 18),
    (SeverityClass.MILD, 19, 23),
    (SeverityClass.NORMAL, 24, 30),
)


def severity_class(mmse: float) -> SeverityClass:
    """Bucket an MMSE value; continuous inputs are rounded half-up first."""
    if not 0.0 <= mmse <= MMSE_MAX:
        raise ValueError(f"MMSE {mmse} outside [0, {MMSE_MAX}]")
    rounded = math.floor(mmse + 0.5)
    for cls, lo, hi in SEVERITY_RANGES:
        if lo <= rounded <= hi:
            return cls
    raise AssertionError(f"unbucketed MMSE {rounded}")  # ranges partition [0, 30]


def severity_agreement(preds: Sequence[float], truths: Sequence[float]) -> float:
    """Fraction of pairs whose prediction and truth land in the same bucket."""
    if len(preds) == 0 or len(preds) != len(truths):
        raise ValueError("need equal non-empty prediction/truth lists")
    same = sum(
        1 for p, t in zip(preds, truths) if severity_class(p) is severity_class(t)
    )
    return same / len(preds)


@dataclass
class SeverityReport:
    points: list[tuple[float, float]]  # (truth, prediction)
    agreement: float
    svg: str


# continuous boundaries consistent with round-half-up bucketing
_BUCKET_EDGES = (0.0, 9.5, 18.5, 23.5, 30.0)
_BUCKET_FILLS = ("#d73027", "#fdae61", "#fee08b", "#91cf60")


def severity_report(preds: Sequence[float], truths: Sequence[float],
                    path=None) -> SeverityReport:
    """Scatter of predictions over truths with shaded severity regions, the
    identity line and the bucket-agreement rate; optionally written as SVG."""
    agreement = severity_agreement(preds, truths)  # validates the inputs
    svg = _severity_svg(preds, truths, agreement)
    if path is not None:
        Path(path).write_text(svg, encoding="utf-8")
    return SeverityReport(
        points=[(float(t), float(p)) for p, t in zip(preds, truths)],
        agreement=agreement,
        svg=svg,
    )


def _severity_svg(preds, truths, agreement: float) -> str:
    margin, side = 50.0, 480.0

    def sx(v: float) -> float:
        return margin + v / MMSE_MAX * side

    def sy(v: float) -> float:
        return margin + side - v / MMSE_MAX * side

    w = h = margin * 2 + side
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect x="{margin}" y="{margin}" width="{side}" height="{side}" '
        'fill="white" stroke="black"/>',
    ]
    for (lo, hi), fill in zip(zip(_BUCKET_EDGES, _BUCKET_EDGES[1:]), _BUCKET_FILLS):
        parts.append(
            f'<rect x="{sx(lo):.2f}" y="{sy(hi):.2f}" width="{sx(hi) - sx(lo):.2f}" '
            f'height="{sy(lo) - sy(hi):.2f}" fill="{fill}" fill-opacity="0.35"/>'
        )
    parts.append(
        f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(MMSE_MAX):.2f}" '
        f'y2="{sy(MMSE_MAX):.2f}" stroke="gray" stroke-dasharray="4 3"/>'
    )
    for cls, lo, hi in SEVERITY_RANGES:
        mid = (lo + hi) / 2
        parts.append(
            f'<text x="{sx(mid):.2f}" y="{h - 12:.2f}" font-size="12" '
            f'text-anchor="middle">{cls.value}</text>'
        )
    for p, t in zip(preds, truths):
        parts.append(
            f'<circle cx="{sx(float(t)):.2f}" cy="{sy(float(p)):.2f}" r="4" '
            'fill="#1a1a8c" fill-opacity="0.7"/>'
        )
    parts.append(
        f'<text x="{margin}" y="{margin - 14:.2f}" font-size="14">'
        f'severity agreement {agreement * 100:.2f}% (n={len(preds)})</text>'
    )
    parts.append(
        f'<text x="{margin + side / 2:.2f}" y="{h - 30:.2f}" font-size="13" '
        'text-anchor="middle">true MMSE</text>'
    )
    parts.append(
        f'<text x="14" y="{margin + side / 2:.2f}" font-size="13" '
        f'text-anchor="middle" transform="rotate(-90 14 {margin + side / 2:.2f})">'
        'predicted MMSE</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def metrics_csv(metrics: Metrics | None, reg: RegressionMetrics | None = None) -> str:
    """Per-class precision/recall/F1 rows plus overall accuracy/RMSE/r^2."""

    def fmt(v: float | None) -> str:
        if v is None:
            return ""
        return "nan" if math.isnan(v) else f"{v:.4f}"

    lines = ["class,precision,recall,f1,accuracy,rmse,r2,r2_pearson"]
    if metrics is not None:
        for name, cs in (("non-AD", metrics.non_ad), ("AD", metrics.ad)):
            lines.append(
                f"{name},{fmt(cs.precision)},{fmt(cs.recall)},{fmt(cs.f1)},,,,"
            )
        lines.append(
            f"macro,{fmt(metrics.macro_precision)},{fmt(metrics.macro_recall)},"
            f"{fmt(metrics.macro_f1)},,,,"
        )
    acc = fmt(metrics.accuracy) if metrics is not None else ""
    rmse = fmt(reg.rmse) if reg is not None else ""
    r2 = fmt(reg.r2) if reg is not None else ""
    r2p = fmt(reg.r2_pearson) if reg is not None else ""
    lines.append(f"overall,,,,{acc},{rmse},{r2},{r2p}")
    return "\n".join(lines) + "\n"
