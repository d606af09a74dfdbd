"""Space-time autoregression on first-differenced temperature panels.

Each country i gets its own OLS equation on the differenced series x = dy:

    x_{i,t} = c_i + phi_i x_{i,t-1} + psi_i sum_j w_ij x_{j,t-1} + e_{i,t}

estimated equation by equation. Countries whose weight row is zero drop the
spatial term and reduce to a univariate AR(1) on differences. Fitted levels
add the predicted difference to the previous observed level; forecasts iterate
the difference equation deterministically and integrate from the last
observed level.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .panel import TemperaturePanel
from .trends import panel_differences
from .weights import WeightMatrix


@dataclass(frozen=True)
class EquationFit:
    """Per-country coefficients; psi is None when the weight row is zero."""

    country: str
    c: float
    phi: float
    psi: float | None
    sigma2: float
    dropped: tuple[str, ...] = ()  # regressors removed to cure rank deficiency

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise ValidationError(f"negative residual variance for {self.country}")


@dataclass(frozen=True)
class StarModel:
    equations: dict[str, EquationFit]
    weights: WeightMatrix
    train_span: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "equations", dict(self.equations))
        if set(self.equations) != set(self.weights.labels):
            raise ValidationError("equations do not match weight matrix labels")

    def coefficient_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(c, phi, psi) in weight-label order, absent psi encoded as 0."""
        order = self.weights.labels
        c = np.array([self.equations[i].c for i in order])
        phi = np.array([self.equations[i].phi for i in order])
        psi = np.array([0.0 if self.equations[i].psi is None else self.equations[i].psi
                        for i in order])
        return c, phi, psi

    def nonstationary_countries(self) -> tuple[str, ...]:
        """Countries whose difference equation has |phi| + |psi| >= 1."""
        flagged = []
        for cid, eq in sorted(self.equations.items()):
            total = abs(eq.phi) + (0.0 if eq.psi is None else abs(eq.psi))
            if total >= 1.0:
                flagged.append(cid)
        return tuple(flagged)


@dataclass(frozen=True)
class FittedPanel:
    """One-step in-sample predictions: levels and the differences behind them.

    Levels span the panel years except the first two (one lost to
    differencing, one to the autoregressive lag).
    """

    countries: tuple[str, ...]
    years: tuple[int, ...]
    levels: np.ndarray
    diffs: np.ndarray

    def __post_init__(self) -> None:
        shape = (len(self.countries), len(self.years))
        if self.levels.shape != shape or self.diffs.shape != shape:
            raise ValidationError("fitted panel arrays do not match countries x years")


@dataclass(frozen=True)
class ForecastPanel:
    """Iterated forecasts: levels are origin level + cumulative forecast diffs."""

    countries: tuple[str, ...]
    years: tuple[int, ...]
    levels: np.ndarray
    diffs: np.ndarray
    origin_year: int
    origin_levels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        shape = (len(self.countries), len(self.years))
        if self.levels.shape != shape or self.diffs.shape != shape:
            raise ValidationError("forecast panel arrays do not match countries x years")
        if self.years and self.years[0] != self.origin_year + 1:
            raise ValidationError("forecast years must start right after the origin")


def _spatial_lags(weights: WeightMatrix, diffs: np.ndarray) -> np.ndarray:
    return weights.values @ diffs


def fit_star(panel: TemperaturePanel, weights: WeightMatrix) -> StarModel:
    """Estimate the per-country difference equations by OLS.

    Usable rows run over t = 3..T of the level panel (T - 2 equations rows):
    differencing consumes the first year and the lag the second. A singular
    design (e.g. a constant spatial lag) drops the offending regressor, spatial
    term first, and records what was removed.
    """
    if tuple(weights.labels) != tuple(panel.ids):
        raise ValidationError("weight matrix labels must match panel id order")
    if panel.n_years < 4:
        raise ValidationError(f"need at least 4 years to fit, got {panel.n_years}")

    diffs = panel_differences(panel)      # N x (T-1), columns are years[1:]
    spatial = _spatial_lags(weights, diffs)
    response = diffs[:, 1:]               # x_t  for t = 3..T
    own_lag = diffs[:, :-1]               # x_{t-1}
    spatial_lag = spatial[:, :-1]         # sum_j w_ij x_{j,t-1}
    zero_row = weights.values.sum(axis=1) == 0.0

    equations: dict[str, EquationFit] = {}
    for i, cid in enumerate(panel.ids):
        y = response[i]
        columns: list[tuple[str, np.ndarray]] = [("const", np.ones_like(y)),
                                                 ("temporal", own_lag[i])]
        if not zero_row[i]:
            columns.append(("spatial", spatial_lag[i]))
        names, coefs, dropped = _ols_with_fallback(cid, columns, y)
        lookup = dict(zip(names, coefs))
        resid = y - _predict(columns, names, lookup)
        dof = len(y) - len(names)
        sigma2 = float(resid @ resid) / dof if dof > 0 else float(resid @ resid) / len(y)
        psi = lookup.get("spatial") if not zero_row[i] and "spatial" in lookup else None
        equations[cid] = EquationFit(country=cid,
                                     c=float(lookup.get("const", 0.0)),
                                     phi=float(lookup.get("temporal", 0.0)),
                                     psi=None if psi is None else float(psi),
                                     sigma2=sigma2,
                                     dropped=tuple(dropped))
    return StarModel(equations=equations, weights=weights,
                     train_span=(panel.years[0], panel.years[-1]))


def _ols_with_fallback(cid: str, columns: list[tuple[str, np.ndarray]],
                       y: np.ndarray) -> tuple[list[str], np.ndarray, list[str]]:
    """Least squares, dropping the spatial then the temporal regressor on
    rank deficiency rather than returning an arbitrary minimum-norm solution."""
    drop_order = ("spatial", "temporal")
    kept = list(columns)
    dropped: list[str] = []
    while True:
        design = np.column_stack([col for _, col in kept])
        if np.linalg.matrix_rank(design) == design.shape[1]:
            coefs, *_ = np.linalg.lstsq(design, y, rcond=None)
            if not np.all(np.isfinite(coefs)):
                raise NumericalError(f"non-finite coefficients for {cid}")
            return [name for name, _ in kept], coefs, dropped
        candidates = [name for name in drop_order if any(n == name for n, _ in kept)]
        if not candidates:
            raise NumericalError(f"design matrix for {cid} is degenerate beyond repair")
        victim = candidates[0]
        kept = [(n, col) for n, col in kept if n != victim]
        dropped.append(victim)


def _predict(columns: list[tuple[str, np.ndarray]], names: list[str],
             lookup: dict[str, float]) -> np.ndarray:
    total = np.zeros_like(columns[0][1])
    for name, col in columns:
        if name in names:
            total = total + lookup[name] * col
    return total


def fitted_levels(model: StarModel, panel: TemperaturePanel) -> FittedPanel:
    """One-step in-sample fits: y_hat_{i,t} = y_{i,t-1} + x_hat_{i,t}, t = 3..T."""
    if tuple(model.weights.labels) != tuple(panel.ids):
        raise ValidationError("model weight labels must match panel id order")
    diffs = panel_differences(panel)
    spatial = _spatial_lags(model.weights, diffs)
    c, phi, psi = model.coefficient_arrays()
    pred_diffs = c[:, None] + phi[:, None] * diffs[:, :-1] + psi[:, None] * spatial[:, :-1]
    prev_levels = panel.values[:, 1:-1]
    return FittedPanel(countries=panel.ids,
                       years=tuple(panel.years[2:]),
                       levels=prev_levels + pred_diffs,
                       diffs=pred_diffs)


def forecast(model: StarModel, panel: TemperaturePanel, horizon: int) -> ForecastPanel:
    """Iterate the difference equations h = 1..horizon steps past the panel end.

    Forecast differences feed back into both the temporal and the spatial lag;
    levels integrate the differences from the last observed level.
    """
    if horizon < 1:
        raise ValidationError(f"forecast horizon must be at least 1, got {horizon}")
    if tuple(model.weights.labels) != tuple(panel.ids):
        raise ValidationError("model weight labels must match panel id order")
    c, phi, psi = model.coefficient_arrays()
    weights = model.weights.values
    current = panel_differences(panel)[:, -1]
    steps = []
    for _ in range(horizon):
        current = c + phi * current + psi * (weights @ current)
        steps.append(current)
    diffs = np.column_stack(steps)
    levels = panel.values[:, -1][:, None] + np.cumsum(diffs, axis=1)
    origin = panel.years[-1]
    return ForecastPanel(countries=panel.ids,
                         years=tuple(origin + h for h in range(1, horizon + 1)),
                         levels=levels,
                         diffs=diffs,
                         origin_year=origin,
                         origin_levels=panel.values[:, -1].copy())


def write_coefficients_csv(model: StarModel, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country", "c", "phi", "psi", "sigma2", "dropped"])
        for cid in model.weights.labels:
            eq = model.equations[cid]
            writer.writerow([cid, repr(eq.c), repr(eq.phi),
                             "" if eq.psi is None else repr(eq.psi),
                             repr(eq.sigma2), ";".join(eq.dropped)])


def write_level_csv(countries: tuple[str, ...], years: tuple[int, ...],
                    levels: np.ndarray, path: str | Path) -> None:
    """Long-format CSV of a fitted or forecast level panel."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country", "year", "temperature"])
        for i, cid in enumerate(countries):
            for j, year in enumerate(years):
                writer.writerow([cid, year, repr(float(levels[i, j]))])
