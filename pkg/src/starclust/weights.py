"""Row-normalized spatial weight matrices.

Seven kinds are defined: contiguity weights (NN), distance-based weights over
the full panel (dA, dB, dC), and distance-based weights restricted to pairs in
the same cluster (cA, cB, cC). Rows either sum to one or are identically zero;
a zero row marks a unit with no usable neighbours (isolated, idiosyncratic,
excluded, or alone in its cluster).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterAssignment
from .distances import DistanceMatrix
from .errors import ValidationError
from .panel import AdjacencyList, TemperaturePanel

KINDS = ("NN", "cA", "cB", "cC", "dA", "dB", "dC")


@dataclass(frozen=True)
class WeightMatrix:
    kind: str
    labels: tuple[str, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown weight kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "labels", tuple(self.labels))
        values = np.asarray(self.values, dtype=float)
        n = len(self.labels)
        if values.shape != (n, n):
            raise ValidationError(f"weight matrix shape {values.shape} does not match {n} labels")
        if not np.all(np.isfinite(values)):
            raise ValidationError("weight matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValidationError("weight matrix contains negative entries")
        if np.any(np.diagonal(values) != 0):
            raise ValidationError("weight matrix diagonal must be zero")
        sums = values.sum(axis=1)
        bad = ~((np.abs(sums - 1.0) <= 1e-12) | (sums == 0.0))
        if np.any(bad):
            where = [self.labels[i] for i in np.nonzero(bad)[0][:5]]
            raise ValidationError(f"rows neither stochastic nor zero: {where}")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return len(self.labels)

    def row_of(self, country_id: str) -> np.ndarray:
        return self.values[self.labels.index(country_id)]

    def zero_rows(self) -> tuple[str, ...]:
        sums = self.values.sum(axis=1)
        return tuple(lab for lab, s in zip(self.labels, sums) if s == 0.0)


def contiguity_weights(adj: AdjacencyList, panel: TemperaturePanel) -> WeightMatrix:
    """1/m to each of a country's m adjacent neighbours, zero row if none."""
    ids = panel.ids
    index = {cid: i for i, cid in enumerate(ids)}
    values = np.zeros((len(ids), len(ids)))
    isolated = []
    for cid in ids:
        neighbors = sorted(adj.of(cid))
        if not neighbors:
            isolated.append(cid)
            continue
        share = 1.0 / len(neighbors)
        for other in neighbors:
            if other not in index:
                raise ValidationError(f"adjacency references id {other!r} absent from panel")
            values[index[cid], index[other]] = share
    return WeightMatrix(kind="NN", labels=ids, values=values,
                        meta={"source": "contiguity", "isolated": isolated})


def _similarity(dist: DistanceMatrix, panel: TemperaturePanel,
                rescale: bool, rho: float) -> tuple[np.ndarray, dict]:
    """Unnormalized similarities (N - d_ij)/N embedded in full panel order.

    N is the panel country count. Ids missing from the distance matrix get
    zero rows and columns. Distances above N are an error unless rescaling is
    enabled, which maps the maximum distance to N * rho.
    """
    n = panel.n_countries
    d = dist.values.astype(float)
    dmax = float(d.max()) if d.size else 0.0
    scale_applied = False
    if rescale and dmax > 0:
        d = d * (n * rho / dmax)
        scale_applied = True
    elif dmax > n:
        raise ValidationError(
            f"distance {dmax} exceeds panel size {n}; enable rescaling (rescale=True) "
            f"to map the maximum distance to N*rho"
        )
    sim = (n - d) / n
    np.fill_diagonal(sim, 0.0)

    full = np.zeros((n, n))
    pos = {cid: i for i, cid in enumerate(panel.ids)}
    rows = [pos[lab] for lab in dist.labels if lab in pos]
    if len(rows) != dist.size:
        unknown = sorted(set(dist.labels) - set(panel.ids))
        raise ValidationError(f"distance labels absent from panel: {unknown[:5]}")
    idx = np.array(rows)
    full[np.ix_(idx, idx)] = sim
    meta = {"metric": dist.metric, "rescaled": scale_applied,
            "rho": rho if scale_applied else None, "max_distance": dmax}
    return full, meta


def _normalize_rows(sim: np.ndarray) -> np.ndarray:
    sums = sim.sum(axis=1, keepdims=True)
    out = np.divide(sim, sums, out=np.zeros_like(sim), where=sums > 0)
    return out


def distance_weights(dist: DistanceMatrix, panel: TemperaturePanel, kind: str,
                     rescale: bool = False, rho: float = 0.95) -> WeightMatrix:
    """Full-panel distance-based weights: (N - d_ij)/N, then row normalization."""
    sim, meta = _similarity(dist, panel, rescale, rho)
    meta["restricted"] = False
    return WeightMatrix(kind=kind, labels=panel.ids,
                        values=_normalize_rows(sim), meta=meta)


def cluster_restricted_weights(dist: DistanceMatrix, assign: ClusterAssignment,
                               panel: TemperaturePanel, kind: str,
                               rescale: bool = False, rho: float = 0.95) -> WeightMatrix:
    """Distance-based weights keeping only same-cluster pairs.

    Idiosyncratic, excluded, and singleton-cluster units get zero rows.
    """
    missing = sorted(set(assign.labels) - set(dist.labels))
    if missing:
        raise ValidationError(f"no distances available for clustered ids: {missing[:5]}")
    sim, meta = _similarity(dist, panel, rescale, rho)
    cluster_of = np.full(panel.n_countries, -1)
    for i, cid in enumerate(panel.ids):
        cluster_of[i] = assign.labels.get(cid, -1)
    same = (cluster_of[:, None] == cluster_of[None, :]) & (cluster_of[:, None] >= 0)
    sim = np.where(same, sim, 0.0)
    meta["restricted"] = True
    meta["scheme"] = assign.scheme
    return WeightMatrix(kind=kind, labels=panel.ids,
                        values=_normalize_rows(sim), meta=meta)


def write_weight_csv(weights: WeightMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country"] + list(weights.labels))
        for lab, row in zip(weights.labels, weights.values):
            writer.writerow([lab] + [repr(float(v)) for v in row])


def write_weight_meta(weights: WeightMatrix, path: str | Path) -> None:
    payload = {"kind": weights.kind, "n": weights.size,
               "zero_rows": list(weights.zero_rows())}
    payload.update({k: v for k, v in sorted(weights.meta.items())
                    if isinstance(v, (str, int, float, bool, list, type(None)))})
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")
