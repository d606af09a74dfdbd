"""Per-country series transformations: linear trend, differences, sign strings.

The trend regressor is the 1-based year index, not the calendar year; the
slope is identical either way and the intercept follows the index convention.
Significance uses classical homoskedastic OLS standard errors.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .errors import ValidationError
from .panel import TemperaturePanel


@dataclass(frozen=True)
class TrendFit:
    """OLS fit of temperature on a linear time index.

    `slope` is the annual warming rate (degrees C per year). `t_stat` equals
    slope / slope_se whenever slope_se > 0; a noiseless series gets
    slope_se = 0 with p_value 0 (nonzero slope) or 1 (flat).
    """

    intercept: float
    slope: float
    slope_se: float
    t_stat: float
    p_value: float
    significant: bool


def student_t_sf2(t_stat: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized incomplete beta."""
    if df <= 0:
        raise ValidationError(f"degrees of freedom must be positive, got {df}")
    if not np.isfinite(t_stat):
        return 0.0
    x = df / (df + t_stat * t_stat)
    return float(special.betainc(df / 2.0, 0.5, x))


def fit_linear_trend(series: np.ndarray, alpha: float = 0.05) -> TrendFit:
    """Fit temperature = intercept + slope * t + noise with t = 1..T.

    Parameters
    ----------
    series : array of length T >= 3
        Annual temperatures for one country.
    alpha : float
        Two-sided significance level used to set the `significant` flag.

    Returns
    -------
    TrendFit with classical OLS slope standard error and a two-sided p-value
    from Student's t on T - 2 degrees of freedom.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValidationError("series must be one-dimensional")
    n = y.shape[0]
    if n < 3:
        raise ValidationError(f"trend fit needs at least 3 observations, got {n}")
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")

    t = np.arange(1, n + 1, dtype=float)
    t_centered = t - t.mean()
    sxx = float(t_centered @ t_centered)
    slope = float(t_centered @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * t.mean())

    residuals = y - intercept - slope * t
    ssr = float(residuals @ residuals)
    df = n - 2
    s2 = ssr / df
    slope_se = float(np.sqrt(s2 / sxx))

    if slope_se > 0.0:
        t_stat = slope / slope_se
        p_value = student_t_sf2(t_stat, df)
    else:
        # Noiseless line: infinite evidence unless the slope itself is zero.
        t_stat = float(np.inf) * np.sign(slope) if slope != 0.0 else 0.0
        p_value = 0.0 if slope != 0.0 else 1.0
    return TrendFit(intercept=intercept, slope=slope, slope_se=slope_se,
                    t_stat=float(t_stat), p_value=p_value,
                    significant=p_value < alpha)


def slope_significance(fit: TrendFit, alpha: float) -> bool:
    """True iff the slope differs from zero at two-sided level `alpha`."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    return fit.p_value < alpha


def fit_panel_trends(panel: TemperaturePanel, alpha: float = 0.05) -> dict[str, TrendFit]:
    """Fit a linear trend for every country; keys follow the panel ordering."""
    return {cid: fit_linear_trend(panel.values[i], alpha=alpha)
            for i, cid in enumerate(panel.ids)}


def first_differences(series: np.ndarray) -> np.ndarray:
    """Year-over-year changes: values[t] = series[t+1] - series[t], length T - 1."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValidationError("series must be one-dimensional")
    if y.shape[0] < 2:
        raise ValidationError("first differences need at least 2 observations")
    return y[1:] - y[:-1]


def panel_differences(panel: TemperaturePanel) -> np.ndarray:
    """N x (T-1) matrix of first differences, rows in panel country order."""
    if panel.n_years < 2:
        raise ValidationError("panel differences need at least 2 years")
    return panel.values[:, 1:] - panel.values[:, :-1]


def sign_sequence(diffs: np.ndarray) -> np.ndarray:
    """Binary string of change signs: 1 for a strict increase, 0 otherwise.

    Exact zero changes count as "no increase" (bit 0).
    """
    d = np.asarray(diffs, dtype=float)
    return (d > 0.0).astype(np.uint8)


def write_trend_table(trends: dict[str, TrendFit], path: str | Path) -> None:
    """CSV export: country,intercept,slope,se,t,p,significant."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country", "intercept", "slope", "se", "t", "p", "significant"])
        for cid, fit in trends.items():
            writer.writerow([cid, repr(fit.intercept), repr(fit.slope), repr(fit.slope_se),
                             repr(fit.t_stat), repr(fit.p_value), int(fit.significant)])
