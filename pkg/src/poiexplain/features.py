"""The 32 explanatory variables of a training interaction matrix.

All per-user families are aggregated with :func:`aggregate` into
mean / median / std / skewness / kurtosis, in that order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import InteractionMatrix, VenueCatalog

EARTH_RADIUS_KM = 6371.0
SECONDS_PER_DAY = 86400.0

_AGG_PREFIXES = ("A", "Med", "St", "Sk", "Ku")
EV_NAMES: tuple[str, ...] = (
    ("SpaceSize", "Shape", "Density", "Cp_u", "Cp_i", "Gini_I", "Gini_U")
    + tuple(p + "PB" for p in _AGG_PREFIXES)
    + tuple(p + "LT" for p in _AGG_PREFIXES)
    + tuple(p + "RG" for p in _AGG_PREFIXES)
    + tuple(p + "DCC" for p in _AGG_PREFIXES)
    + tuple(p + "DA" for p in _AGG_PREFIXES)
)


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    median: float
    std: float
    skewness: float
    kurtosis: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.mean, self.median, self.std, self.skewness, self.kurtosis)


def aggregate(sample: Sequence[float]) -> AggregateStats:
    """Population moments of ``sample``; kurtosis is non-excess.

    A zero-variance sample gets skewness and kurtosis 0 so downstream design
    matrices stay finite.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("aggregate of an empty sample")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d * d))
    # relative tolerance: rounding noise in d must not read as spread
    if m2 <= (1e-12 * max(1.0, abs(mean))) ** 2:
        return AggregateStats(mean, float(np.median(x)), 0.0, 0.0, 0.0)
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return AggregateStats(mean, float(np.median(x)), m2 ** 0.5, m3 / m2 ** 1.5, m4 / m2 ** 2)


# ---------------------------------------------------------------------------
# structure and distribution


def structure_evs(matrix: InteractionMatrix) -> tuple[float, float, float, float, float]:
    """SpaceSize, Shape, Density, Cp_u, Cp_i, with |C| the number of unique visits."""
    nu, ni, nc = matrix.n_users, matrix.n_items, matrix.n_visits
    if nu < 1 or ni < 1:
        raise ValueError("structure_evs needs at least one user and one item")
    return float(nu * ni), nu / ni, nc / (nu * ni), nc / nu, nc / ni


def gini(counts: Sequence[float]) -> float:
    """``1 - 2 * sum_j (n + 1 - j) / (n + 1) * c_j / total`` over ascending counts."""
    c = np.sort(np.asarray(counts, dtype=float))
    total = c.sum()
    if c.size == 0 or total <= 0:
        raise ValueError("gini needs a non-empty count vector with positive sum")
    n = c.size
    weights = (n + 1 - np.arange(1, n + 1)) / (n + 1)
    return float(1.0 - 2.0 * np.sum(weights * c / total))


def item_popularity(matrix: InteractionMatrix) -> np.ndarray:
    """Distinct visitors per item."""
    return matrix.item_degrees()


def _per_user_mean(matrix: InteractionMatrix, item_values: np.ndarray) -> np.ndarray:
    m = matrix.unique_visits
    sums = np.add.reduceat(item_values[m.indices], m.indptr[:-1]) if m.nnz else np.zeros(matrix.n_users)
    return sums / np.diff(m.indptr)


def popularity_bias_evs(matrix: InteractionMatrix) -> AggregateStats:
    """Per user, the mean share of users who visited each of the user's items."""
    phi = item_popularity(matrix) / matrix.n_users
    return aggregate(_per_user_mean(matrix, phi))


def long_tail_items(matrix: InteractionMatrix, head_share: float = 0.8) -> np.ndarray:
    """Boolean mask of long-tail items.

    Items sorted by distinct visitors (descending, ties by id) form the short
    head up to the smallest prefix holding ``head_share`` of all visits.
    """
    pop = item_popularity(matrix)
    order = np.lexsort((np.arange(len(pop)), -pop))
    cum = np.cumsum(pop[order])
    head_frac = np.round(head_share * 1_000_000).astype(np.int64)
    # integer comparison so 8 of 10 equal items hit 80% exactly
    n_head = int(np.argmax(cum * 1_000_000 >= head_frac * cum[-1])) + 1
    tail = np.ones(len(pop), dtype=bool)
    tail[order[:n_head]] = False
    return tail


def long_tail_evs(matrix: InteractionMatrix) -> AggregateStats:
    tail = long_tail_items(matrix).astype(float)
    return aggregate(_per_user_mean(matrix, tail))


# ---------------------------------------------------------------------------
# geography and activity


def haversine(p1, p2) -> float | np.ndarray:
    """Great-circle distance in km between (lat, lon) points in degrees; broadcasts."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    lat1, lon1 = np.radians(p1[..., 0]), np.radians(p1[..., 1])
    lat2, lon2 = np.radians(p2[..., 0]), np.radians(p2[..., 1])
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def user_centroids(matrix: InteractionMatrix, coords: np.ndarray) -> np.ndarray:
    """Arithmetic mean of lat and lon over each user's unique visited venues."""
    m = matrix.unique_visits
    deg = np.diff(m.indptr)[:, None]
    pts = coords[m.indices]
    return np.add.reduceat(pts, m.indptr[:-1], axis=0) / deg


def radius_of_gyration(matrix: InteractionMatrix, coords: np.ndarray) -> np.ndarray:
    """Per user ``sqrt(mean haversine(venue, centroid))`` -- square root of the mean distance."""
    m = matrix.unique_visits
    cent = user_centroids(matrix, coords)
    rows = np.repeat(np.arange(matrix.n_users), np.diff(m.indptr))
    d = haversine(coords[m.indices], cent[rows])
    return np.sqrt(np.add.reduceat(d, m.indptr[:-1]) / np.diff(m.indptr))


def distance_to_center(matrix: InteractionMatrix, coords: np.ndarray, center: tuple[float, float]) -> np.ndarray:
    m = matrix.unique_visits
    d = haversine(coords[m.indices], np.asarray(center, dtype=float)[None, :])
    return np.sqrt(np.add.reduceat(d, m.indptr[:-1]) / np.diff(m.indptr))


def duration_active(matrix: InteractionMatrix) -> np.ndarray:
    """Days between each user's first and last raw check-in, repeats included."""
    first = np.full(matrix.n_users, np.iinfo(np.int64).max)
    last = np.full(matrix.n_users, np.iinfo(np.int64).min)
    np.minimum.at(first, matrix.raw_user, matrix.raw_ts)
    np.maximum.at(last, matrix.raw_user, matrix.raw_ts)
    span = np.where(last >= first, last - first, 0)
    return span / SECONDS_PER_DAY


def radius_of_gyration_evs(matrix: InteractionMatrix, catalog: VenueCatalog) -> AggregateStats:
    return aggregate(radius_of_gyration(matrix, catalog.coords(matrix.items)))


def distance_to_center_evs(matrix: InteractionMatrix, catalog: VenueCatalog,
                           center: tuple[float, float]) -> AggregateStats:
    return aggregate(distance_to_center(matrix, catalog.coords(matrix.items), center))


def duration_active_evs(matrix: InteractionMatrix) -> AggregateStats:
    return aggregate(duration_active(matrix))


def compute_all(matrix: InteractionMatrix, catalog: VenueCatalog, center: tuple[float, float]) -> dict[str, float]:
    """All 32 explanatory variables keyed by :data:`EV_NAMES`."""
    if matrix.n_users < 1 or matrix.n_items < 1 or matrix.empty:
        raise ValueError("cannot featurize a degenerate matrix")
    uc = np.diff(matrix.unique_visits.indptr)
    values = list(structure_evs(matrix))
    values += [gini(item_popularity(matrix)), gini(uc)]
    coords = catalog.coords(matrix.items)
    for stats in (popularity_bias_evs(matrix), long_tail_evs(matrix),
                  aggregate(radius_of_gyration(matrix, coords)),
                  aggregate(distance_to_center(matrix, coords, center)),
                  duration_active_evs(matrix)):
        values += stats.as_tuple()
    out = dict(zip(EV_NAMES, (float(v) for v in values)))
    bad = [k for k, v in out.items() if not np.isfinite(v)]
    if bad:
        raise ValueError(f"non-finite explanatory variables: {bad}")
    return out
