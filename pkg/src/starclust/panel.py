"""Country-by-year temperature panel: loading, validation, splitting, adjacency.

The panel is a dense N x T matrix of annual mean temperatures (degrees C)
plus per-country metadata. Validation is strict: gaps, duplicates, and
non-numeric cells are hard errors, never imputed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

# Closed set of geographical zones used for cross-tabulations.
ZONES = frozenset({
    "Europe", "Asia", "Eurasia", "Africa",
    "North America", "Central America", "South America", "Oceania",
})

_LONG_HEADER = ("country", "year", "temperature")
_META_COLUMNS = ("name", "zone", "area")


@dataclass(frozen=True)
class CountryMeta:
    """Identity and metadata for one spatial unit."""

    id: str
    name: str | None = None
    zone: str | None = None
    area: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("country id must be a non-empty string")
        if self.zone is not None and self.zone not in ZONES:
            raise ValidationError(
                f"unknown zone {self.zone!r} for country {self.id!r}; "
                f"expected one of {sorted(ZONES)}"
            )
        if self.area is not None and self.area < 0:
            raise ValidationError(f"negative land area for country {self.id!r}")

    @property
    def display_name(self) -> str:
        return self.name if self.name is not None else self.id


@dataclass(frozen=True)
class TemperaturePanel:
    """Validated N x T panel of temperatures with a stable country ordering.

    Immutable after construction; the same country order is shared by every
    downstream matrix (distances, weights, model equations).
    """

    countries: tuple[CountryMeta, ...]
    years: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        n, t = len(self.countries), len(self.years)
        if n == 0 or t == 0:
            raise ValidationError("panel must have at least one country and one year")
        if values.shape != (n, t):
            raise ValidationError(
                f"values shape {values.shape} does not match {n} countries x {t} years"
            )
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(
                f"non-finite temperature for country {self.countries[i].id!r}, "
                f"year {self.years[j]}"
            )
        for prev, cur in zip(self.years, self.years[1:]):
            if cur != prev + 1:
                raise ValidationError(
                    f"years must be consecutive and increasing; got {prev} then {cur}"
                )
        ids = [c.id for c in self.countries]
        if len(set(ids)) != n:
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate country ids: {dupes}")
        values.setflags(write=False)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.countries)

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def row(self, country_id: str) -> np.ndarray:
        return self.values[self.index_of(country_id)]

    def index_of(self, country_id: str) -> int:
        try:
            return self.ids.index(country_id)
        except ValueError:
            raise ValidationError(f"unknown country id {country_id!r}") from None

    def year_index(self, year: int) -> int:
        if year not in self.years:
            raise ValidationError(f"year {year} outside panel range {self.years[0]}..{self.years[-1]}")
        return self.years.index(year)

    def zones(self) -> dict[str, str | None]:
        return {c.id: c.zone for c in self.countries}


@dataclass(frozen=True)
class AdjacencyList:
    """Symmetric, irreflexive neighbor sets keyed by country id."""

    neighbors: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        fixed = {k: frozenset(v) for k, v in self.neighbors.items()}
        object.__setattr__(self, "neighbors", fixed)
        for i, nbrs in fixed.items():
            if i in nbrs:
                raise ValidationError(f"self-edge for country {i!r}")
            for j in nbrs:
                if i not in fixed.get(j, frozenset()):
                    raise ValidationError(f"adjacency not symmetric: {i!r} -> {j!r}")

    def of(self, country_id: str) -> frozenset[str]:
        return self.neighbors.get(country_id, frozenset())


def _parse_temperature(text: str, country: str, year: int | str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"non-numeric temperature {text!r} for country {country!r}, year {year}"
        ) from None
    if not np.isfinite(value):
        raise ValidationError(
            f"non-finite temperature {text!r} for country {country!r}, year {year}"
        )
    return value


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValidationError(f"empty file: {path}")
    header = [cell.strip() for cell in rows[0]]
    return header, rows[1:]


def detect_format(header: list[str]) -> str:
    """Classify a CSV header as 'long' or 'wide'."""
    lowered = [h.lower() for h in header]
    if all(col in lowered for col in _LONG_HEADER):
        return "long"
    year_like = [h for h in lowered if h.lstrip("-").isdigit()]
    if lowered and lowered[0] == "country" and year_like:
        return "wide"
    raise ValidationError(
        "cannot detect panel format: expected long header "
        "(country,year,temperature) or wide header (country,<year>,<year>,...)"
    )


def load_panel(path: str | Path, fmt: str = "auto") -> TemperaturePanel:
    """Load and validate a temperature panel from CSV.

    Accepts the long layout (`country,year,temperature` plus optional
    `name`, `zone`, `area` columns) or the wide layout (one row per country
    with year columns). `fmt` is 'auto', 'long', or 'wide'.
    """
    header, rows = _read_rows(path)
    if fmt == "auto":
        fmt = detect_format(header)
    if fmt == "long":
        return _load_long(header, rows)
    if fmt == "wide":
        return _load_wide(header, rows)
    raise ValidationError(f"unknown panel format {fmt!r}")


def _load_long(header: list[str], rows: list[list[str]]) -> TemperaturePanel:
    lowered = [h.lower() for h in header]
    col = {name: lowered.index(name) for name in _LONG_HEADER if name in lowered}
    missing = [name for name in _LONG_HEADER if name not in col]
    if missing:
        raise ValidationError(f"long panel header missing columns: {missing}")
    meta_col = {name: lowered.index(name) for name in _META_COLUMNS if name in lowered}

    cells: dict[tuple[str, int], float] = {}
    meta: dict[str, dict[str, str]] = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) < len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        country = row[col["country"]].strip()
        year_text = row[col["year"]].strip()
        try:
            year = int(year_text)
        except ValueError:
            raise ValidationError(
                f"line {lineno}: non-integer year {year_text!r} for country {country!r}"
            ) from None
        value = _parse_temperature(row[col["temperature"]].strip(), country, year)
        if (country, year) in cells:
            raise ValidationError(f"duplicate entry for country {country!r}, year {year}")
        cells[(country, year)] = value
        entry = meta.setdefault(country, {})
        for name, idx in meta_col.items():
            text = row[idx].strip()
            if not text:
                continue
            if name in entry and entry[name] != text:
                raise ValidationError(
                    f"conflicting {name} for country {country!r}: "
                    f"{entry[name]!r} vs {text!r}"
                )
            entry[name] = text

    ids = sorted({country for country, _ in cells})
    years = sorted({year for _, year in cells})
    full_years = list(range(years[0], years[-1] + 1))
    gaps = [(country, year) for country in ids for year in full_years
            if (country, year) not in cells]
    if gaps:
        shown = ", ".join(f"{c}/{y}" for c, y in gaps[:10])
        more = "" if len(gaps) <= 10 else f" (+{len(gaps) - 10} more)"
        raise ValidationError(f"missing observations: {shown}{more}")

    values = np.array([[cells[(c, y)] for y in full_years] for c in ids], dtype=float)
    countries = tuple(_meta_from_strings(c, meta.get(c, {})) for c in ids)
    return TemperaturePanel(countries=countries, years=tuple(full_years), values=values)


def _meta_from_strings(country_id: str, entry: dict[str, str]) -> CountryMeta:
    area: float | None = None
    if "area" in entry:
        try:
            area = float(entry["area"])
        except ValueError:
            raise ValidationError(
                f"non-numeric area {entry['area']!r} for country {country_id!r}"
            ) from None
    return CountryMeta(id=country_id, name=entry.get("name"),
                       zone=entry.get("zone"), area=area)


def _load_wide(header: list[str], rows: list[list[str]]) -> TemperaturePanel:
    lowered = [h.lower() for h in header]
    year_cols = [(i, int(h)) for i, h in enumerate(lowered) if h.lstrip("-").isdigit()]
    if not year_cols:
        raise ValidationError("wide panel has no year columns")
    meta_col = {name: lowered.index(name) for name in _META_COLUMNS if name in lowered}
    id_col = lowered.index("country")

    years = [y for _, y in year_cols]
    if years != sorted(years):
        order = np.argsort(years)
        year_cols = [year_cols[i] for i in order]
        years = [y for _, y in year_cols]
    for prev, cur in zip(years, years[1:]):
        if cur != prev + 1:
            raise ValidationError(f"wide panel year columns not consecutive: {prev} then {cur}")

    seen: dict[str, int] = {}
    records: list[tuple[CountryMeta, list[float]]] = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) < len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        country = row[id_col].strip()
        if country in seen:
            raise ValidationError(f"duplicate country row for {country!r}")
        seen[country] = lineno
        series = []
        for idx, year in year_cols:
            text = row[idx].strip()
            if not text:
                raise ValidationError(f"missing observation for country {country!r}, year {year}")
            series.append(_parse_temperature(text, country, year))
        entry = {name: row[idx].strip() for name, idx in meta_col.items() if row[idx].strip()}
        records.append((_meta_from_strings(country, entry), series))

    records.sort(key=lambda rec: rec[0].id)
    countries = tuple(rec[0] for rec in records)
    values = np.array([rec[1] for rec in records], dtype=float)
    return TemperaturePanel(countries=countries, years=tuple(years), values=values)


def write_panel(panel: TemperaturePanel, path: str | Path, fmt: str = "long") -> None:
    """Write a panel to CSV with full precision (round-trips bit-exactly)."""
    path = Path(path)
    has_meta = {
        "name": any(c.name is not None for c in panel.countries),
        "zone": any(c.zone is not None for c in panel.countries),
        "area": any(c.area is not None for c in panel.countries),
    }
    meta_names = [m for m in _META_COLUMNS if has_meta[m]]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fmt == "long":
            writer.writerow(list(_LONG_HEADER) + meta_names)
            for i, country in enumerate(panel.countries):
                meta = {"name": country.name, "zone": country.zone,
                        "area": None if country.area is None else repr(country.area)}
                extra = [meta[m] if meta[m] is not None else "" for m in meta_names]
                for j, year in enumerate(panel.years):
                    writer.writerow([country.id, year, repr(float(panel.values[i, j]))] + extra)
        elif fmt == "wide":
            writer.writerow(["country"] + meta_names + [str(y) for y in panel.years])
            for i, country in enumerate(panel.countries):
                meta = {"name": country.name, "zone": country.zone,
                        "area": None if country.area is None else repr(country.area)}
                extra = [meta[m] if meta[m] is not None else "" for m in meta_names]
                row = [country.id] + extra + [repr(float(v)) for v in panel.values[i]]
                writer.writerow(row)
        else:
            raise ValidationError(f"unknown panel format {fmt!r}")


def attach_zones(panel: TemperaturePanel, path: str | Path) -> TemperaturePanel:
    """Return a copy of the panel with zones (and optional name/area) merged in.

    The file is a CSV with header `country,zone` plus optional `name`, `area`.
    """
    header, rows = _read_rows(path)
    lowered = [h.lower() for h in header]
    if "country" not in lowered or "zone" not in lowered:
        raise ValidationError("zone file header must contain `country` and `zone`")
    cols = {name: lowered.index(name) for name in ("country", "zone", "name", "area")
            if name in lowered}
    table: dict[str, dict[str, str]] = {}
    for row in rows:
        country = row[cols["country"]].strip()
        table[country] = {name: row[idx].strip() for name, idx in cols.items()
                          if name != "country" and row[idx].strip()}
    countries = []
    for c in panel.countries:
        entry = table.get(c.id)
        if entry is None:
            countries.append(c)
            continue
        merged = {"name": entry.get("name", c.name), "zone": entry.get("zone", c.zone)}
        area = entry.get("area")
        countries.append(CountryMeta(
            id=c.id, name=merged["name"], zone=merged["zone"],
            area=float(area) if area is not None else c.area))
    return TemperaturePanel(countries=tuple(countries), years=panel.years,
                            values=panel.values.copy())


def load_adjacency(path: str | Path, panel: TemperaturePanel) -> AdjacencyList:
    """Load an undirected edge list CSV (`country_a,country_b`) for the panel.

    Countries absent from the file get empty neighbor sets; unknown ids and
    self-edges are hard errors.
    """
    header, rows = _read_rows(path)
    lowered = [h.lower() for h in header]
    if lowered[:2] != ["country_a", "country_b"]:
        raise ValidationError("adjacency header must be `country_a,country_b`")
    known = set(panel.ids)
    neighbors: dict[str, set[str]] = {i: set() for i in panel.ids}
    for lineno, row in enumerate(rows, start=2):
        if len(row) < 2:
            raise ValidationError(f"line {lineno}: adjacency row needs two country ids")
        a, b = row[0].strip(), row[1].strip()
        for cid in (a, b):
            if cid not in known:
                raise ValidationError(f"line {lineno}: unknown country id {cid!r} in adjacency")
        if a == b:
            raise ValidationError(f"line {lineno}: self-edge for country {a!r}")
        neighbors[a].add(b)
        neighbors[b].add(a)
    return AdjacencyList(neighbors={k: frozenset(v) for k, v in neighbors.items()})


def split_panel(panel: TemperaturePanel, last_train_year: int) -> tuple[TemperaturePanel, TemperaturePanel]:
    """Split by year into train (start..last_train_year) and test (the rest).

    `last_train_year` must lie strictly inside the panel's year range so both
    halves are non-empty and train keeps at least two years.
    """
    first, last = panel.years[0], panel.years[-1]
    if not (first < last_train_year < last):
        raise ValidationError(
            f"last_train_year {last_train_year} must be strictly inside {first}..{last}"
        )
    cut = panel.year_index(last_train_year) + 1
    train = TemperaturePanel(countries=panel.countries, years=panel.years[:cut],
                             values=panel.values[:, :cut].copy())
    test = TemperaturePanel(countries=panel.countries, years=panel.years[cut:],
                            values=panel.values[:, cut:].copy())
    return train, test
