"""Univariate feature screening with the one-way ANOVA F-test.

Each feature column is scored independently: rows are grouped by class label,
an F statistic is formed from the between/within group variance ratio, and the
p-value comes from the F survival function evaluated through the regularized
incomplete beta function. Columns with p <= alpha are kept (ties at alpha
kept). No multiple-comparison correction is applied.

The incomplete beta is computed here with a modified Lentz continued
fraction so the package needs no statistics library at runtime.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import DataError, FeatureMatrix

__all__ = ["SelectionResult", "anova_f", "select_features", "betainc_reg", "f_sf"]

_BETA_EPS = 1e-12
_BETA_MAX_ITER = 500
_FPMIN = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction in the series
    # I_x(a,b) = front * cf / a; converges fast for x < (a+1)/(a+b+2)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def f_sf(f: float, df_between: int, df_within: int) -> float:
    """Survival function P(F >= f) of the F(df_between, df_within) distribution."""
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = df_within / (df_within + df_between * f)
    return betainc_reg(df_within / 2.0, df_between / 2.0, x)


def anova_f(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """One-way ANOVA over k groups: (F, p).

    Conventions: all values identical -> (0, 1); within-group variance zero
    with between-group variance nonzero -> (+inf, 0).
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(arrays)
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(a.size == 0 for a in arrays):
        raise ValueError("every group needs at least one value")
    n = sum(a.size for a in arrays)
    if n <= k:
        raise ValueError(f"total sample count {n} must exceed group count {k}")

    grand = sum(a.sum() for a in arrays) / n
    ssb = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrays)
    df_between = k - 1
    df_within = n - k

    if ssw == 0.0:
        if ssb == 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f = (ssb / df_between) / (ssw / df_within)
    return f, f_sf(f, df_between, df_within)


@dataclass
class SelectionResult:
    """Kept-column indices plus per-column scores at a given threshold."""

    kept_indices: list[int]
    f_values: np.ndarray
    p_values: np.ndarray
    alpha: float

    def __post_init__(self):
        self.f_values = np.asarray(self.f_values, dtype=np.float64)
        self.p_values = np.asarray(self.p_values, dtype=np.float64)
        if self.p_values.size and not ((self.p_values >= 0) & (self.p_values <= 1)).all():
            raise ValueError("p-values must lie in [0, 1]")
        if self.kept_indices != sorted(set(self.kept_indices)):
            raise ValueError("kept_indices must be sorted and unique")

    def mask(self) -> np.ndarray:
        m = np.zeros(self.p_values.shape[0], dtype=bool)
        m[self.kept_indices] = True
        return m

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "kept_indices": list(self.kept_indices),
            "f_values": [None if math.isinf(v) else v for v in self.f_values.tolist()],
            "p_values": self.p_values.tolist(),
            "mask": self.mask().astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionResult":
        f_values = np.array(
            [math.inf if v is None else float(v) for v in obj["f_values"]]
        )
        return cls(
            kept_indices=[int(i) for i in obj["kept_indices"]],
            f_values=f_values,
            p_values=np.asarray(obj["p_values"], dtype=np.float64),
            alpha=float(obj["alpha"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SelectionResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def select_features(m: FeatureMatrix, labels: Sequence, alpha: float) -> SelectionResult:
    """Score every column of `m` against `labels`; keep those with p <= alpha.

    Fit this on training rows only; apply the resulting mask elsewhere.
    """
    if len(labels) != m.rows.shape[0]:
        raise DataError(f"{len(labels)} labels for {m.rows.shape[0]} rows")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DataError("feature selection needs at least two classes")
    label_arr = np.asarray(labels)
    group_rows = [m.rows[label_arr == c] for c in classes]

    f_values = np.empty(m.rows.shape[1])
    p_values = np.empty(m.rows.shape[1])
    for j in range(m.rows.shape[1]):
        f_values[j], p_values[j] = anova_f([g[:, j] for g in group_rows])
    kept = [j for j in range(m.rows.shape[1]) if p_values[j] <= alpha]
    return SelectionResult(kept_indices=kept, f_values=f_values, p_values=p_values, alpha=alpha)
