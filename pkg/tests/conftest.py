"""Shared fixtures: deterministic toy panels and the optional real dataset.

Real-data fixtures are gated on environment variables and skip cleanly when
the files are absent:

  STARCLUST_DATA       panel CSV (long or wide format)
  STARCLUST_ADJACENCY  country adjacency CSV (country_a,country_b)
  STARCLUST_ZONES      zone metadata CSV (country,zone)
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from starclust import (AdjacencyList, TemperaturePanel, attach_zones,
                       load_adjacency, load_panel)

DATA_ENV = "STARCLUST_DATA"
ADJACENCY_ENV = "STARCLUST_ADJACENCY"
ZONES_ENV = "STARCLUST_ZONES"


def _env_path(name: str) -> Path | None:
    value = os.environ.get(name)
    if not value:
        return None
    path = Path(value)
    return path if path.is_file() else None


def dataset_available() -> bool:
    return _env_path(DATA_ENV) is not None


requires_dataset = pytest.mark.skipif(
    not dataset_available(),
    reason=f"real panel not configured (set {DATA_ENV} to the CSV path)",
)


@pytest.fixture(scope="session")
def real_panel() -> TemperaturePanel:
    path = _env_path(DATA_ENV)
    if path is None:
        pytest.skip(f"real panel not configured (set {DATA_ENV})")
    panel = load_panel(path)
    zones = _env_path(ZONES_ENV)
    if zones is not None:
        panel = attach_zones(panel, zones)
    return panel


@pytest.fixture(scope="session")
def real_adjacency(real_panel: TemperaturePanel) -> AdjacencyList:
    path = _env_path(ADJACENCY_ENV)
    if path is None:
        pytest.skip(f"adjacency not configured (set {ADJACENCY_ENV})")
    return load_adjacency(path, real_panel)


def make_panel(values: np.ndarray, first_year: int = 1990,
               ids: list[str] | None = None,
               zones: list[str] | None = None) -> TemperaturePanel:
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    if ids is None:
        ids = [f"C{i:02d}" for i in range(n)]
    from starclust import CountryMeta
    countries = tuple(CountryMeta(id=cid, zone=None if zones is None else zones[i])
                      for i, cid in enumerate(ids))
    return TemperaturePanel(countries=countries,
                            years=tuple(range(first_year, first_year + t)),
                            values=values)


def dyadic(rng: np.random.Generator, shape, low: float = -90.0,
           high: float = 60.0) -> np.ndarray:
    """Exact dyadic rationals (multiples of 2^-10) inside [low, high]."""
    grid = rng.integers(int(low * 1024), int(high * 1024) + 1, size=shape)
    return grid / 1024.0


@pytest.fixture
def toy_panel() -> TemperaturePanel:
    """6 countries x 12 years, deterministic dyadic values."""
    rng = np.random.default_rng(42)
    base = dyadic(rng, (6, 12), low=5.0, high=25.0)
    trend = np.linspace(0, 2, 12) * np.arange(1, 7)[:, None] / 6
    return make_panel(np.round(base + trend, 6))


@pytest.fixture
def grouped_panel() -> TemperaturePanel:
    """9 countries in 3 sharply separated dynamic groups, 41 years.

    Group g has slope (0.12, 0.05, 0.0)[g] plus a group-specific oscillation
    dominating the sign pattern, so all three schemes recover the same
    3-cluster structure.
    """
    rng = np.random.default_rng(3)
    n, t = 9, 41
    slopes = [0.12, 0.05, 0.0]
    patterns = [
        np.tile([1.0, 1.0, -1.0, -1.0], 11)[:t],
        np.tile([1.0, -1.0], 21)[:t],
        np.tile([1.0, -1.0, -1.0, 1.0, 1.0, -1.0], 7)[:t],
    ]
    values = np.empty((n, t))
    for i in range(n):
        g = i // 3
        noise = rng.normal(0, 0.004, t)
        values[i] = 12.0 + 2 * i + slopes[g] * np.arange(t) + 0.8 * patterns[g] + noise
    return make_panel(values, first_year=1950)


@pytest.fixture
def ring_weights():
    """Row-normalized ring contiguity for n units: two neighbours at 0.5."""
    def build(n: int, labels: tuple[str, ...], kind: str = "NN"):
        from starclust import WeightMatrix
        values = np.zeros((n, n))
        for i in range(n):
            values[i, (i - 1) % n] = 0.5
            values[i, (i + 1) % n] = 0.5
        return WeightMatrix(kind=kind, labels=labels, values=values)
    return build
