"""Synthetic check-in data for smoke tests and desk-scale runs."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .config import DEFAULT_BBOX
from .data import CANONICAL_COLUMNS

_logger = logging.getLogger(__name__)

CATEGORIES = ("Coffee Shop", "Bar", "Park", "Museum", "Restaurant", "Gym", "Train Station", "Bookstore")

# home city label -> (lat, lon); the target city itself is drawn from the bbox
AWAY_CITIES = {
    "Boston, US": (42.3601, -71.0589),
    "Chicago, US": (41.8781, -87.6298),
    "Los Angeles, US": (34.0522, -118.2437),
    "London, GB": (51.5074, -0.1278),
    "Paris, FR": (48.8566, 2.3522),
    "Tokyo, JP": (35.6762, 139.6503),
}

_START = int(datetime(2012, 4, 1, tzinfo=timezone.utc).timestamp())
_END = int(datetime(2013, 9, 30, tzinfo=timezone.utc).timestamp())
_DAY = 86400


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic city.

    ``n_checkins`` counts check-ins inside the target city; visitors get extra
    check-ins in their home city so that plurality home detection recovers it.
    """

    n_users: int = 500
    n_venues: int = 300
    n_checkins: int = 20000
    n_clusters: int = 8
    popularity_skew: float = 1.0
    seasonality: float = 0.3
    locality: float = 4.0
    local_share: float = 0.45
    us_share: float = 0.3
    mean_span_days: float = 150.0
    target_city: str = "New York, US"

    def validate(self) -> None:
        if self.n_users < 1 or self.n_venues < 1:
            raise ValueError("need at least one user and one venue")
        if not 1 <= self.n_clusters <= self.n_venues:
            raise ValueError(f"n_clusters must lie in [1, n_venues], got {self.n_clusters}")
        if self.n_checkins < self.n_users:
            raise ValueError("need at least one check-in per user")
        if self.popularity_skew < 0:
            raise ValueError("popularity_skew must be >= 0")
        if not 0 <= self.seasonality < 1:
            raise ValueError("seasonality must lie in [0, 1)")
        if self.locality < 1:
            raise ValueError("locality must be >= 1")
        if not (0 <= self.local_share <= 1 and 0 <= self.us_share <= 1 - self.local_share):
            raise ValueError("origin shares must be non-negative and sum to at most 1")


def _venues(p: SynthParams, rng: np.random.Generator, bbox: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pad_lat = 0.1 * (bbox["lat_max"] - bbox["lat_min"])
    pad_lon = 0.1 * (bbox["lon_max"] - bbox["lon_min"])
    centers = np.column_stack([
        rng.uniform(bbox["lat_min"] + pad_lat, bbox["lat_max"] - pad_lat, p.n_clusters),
        rng.uniform(bbox["lon_min"] + pad_lon, bbox["lon_max"] - pad_lon, p.n_clusters),
    ])
    cluster = np.concatenate([np.arange(p.n_clusters), rng.integers(0, p.n_clusters, p.n_venues - p.n_clusters)])
    coords = centers[cluster] + rng.normal(0.0, [0.012, 0.015], (p.n_venues, 2))
    coords[:, 0] = np.clip(coords[:, 0], bbox["lat_min"], bbox["lat_max"])
    coords[:, 1] = np.clip(coords[:, 1], bbox["lon_min"], bbox["lon_max"])
    return coords, cluster, rng.integers(0, len(CATEGORIES), p.n_venues)


def _timestamps(rng: np.random.Generator, start: int, span: int, n: int, seasonality: float) -> np.ndarray:
    # rejection sampling: summer months are (1 + s) / (1 - s) times as likely
    out = np.empty(0, dtype=np.int64)
    while len(out) < n:
        draw = rng.integers(start, start + span + 1, 2 * n + 8)
        months = pd.to_datetime(draw, unit="s", utc=True).month.to_numpy()
        weight = np.where((months >= 5) & (months <= 10), 1.0 + seasonality, 1.0 - seasonality) / (1.0 + seasonality)
        out = np.concatenate([out, draw[rng.random(len(draw)) < weight]])
    return out[:n]


def generate(params: SynthParams | None = None, seed: int = 0, bbox: dict | None = None) -> pd.DataFrame:
    """Canonical check-in frame of a synthetic city plus visitors' home-city activity.

    Venues sit in spatial clusters; popularity follows ``rank ** -skew``; each
    user prefers venues of one cluster by a factor ``locality`` and is active
    over a random span.  Deterministic in ``seed``.
    """
    p = params or SynthParams()
    p.validate()
    bbox = bbox or DEFAULT_BBOX
    rng = np.random.default_rng(seed)

    coords, cluster, cat = _venues(p, rng, bbox)
    weight = np.arange(1, p.n_venues + 1, dtype=float) ** -p.popularity_skew
    weight = weight[rng.permutation(p.n_venues)]

    away = list(AWAY_CITIES)
    us_away = [c for c in away if c.endswith(", US")]
    other_away = [c for c in away if not c.endswith(", US")]
    u = rng.random(p.n_users)
    homes = np.where(u < p.local_share, p.target_city,
                     np.where(u < p.local_share + p.us_share,
                              rng.choice(us_away, p.n_users), rng.choice(other_away, p.n_users)))

    # heavy-tailed activity with at least one check-in each
    activity = rng.lognormal(0.0, 0.8, p.n_users)
    extra = rng.multinomial(p.n_checkins - p.n_users, activity / activity.sum())
    per_user = extra + 1

    rows = []
    for idx in range(p.n_users):
        user = f"u{idx:05d}"
        n = int(per_user[idx])
        span = int(min(rng.exponential(p.mean_span_days) + 1.0, (_END - _START) / _DAY) * _DAY)
        start = int(rng.integers(_START, _END - span + 1))
        pref = weight * np.where(cluster == rng.integers(0, p.n_clusters), p.locality, 1.0)
        venues = rng.choice(p.n_venues, size=n, p=pref / pref.sum())
        times = _timestamps(rng, start, span, n, p.seasonality)
        for v, t in zip(venues, times):
            rows.append((user, f"v{v:05d}", int(t), coords[v, 0], coords[v, 1], CATEGORIES[cat[v]], p.target_city))
        home = str(homes[idx])
        if home != p.target_city:
            lat0, lon0 = AWAY_CITIES[home]
            m = n + 1 + int(rng.integers(0, 5))
            slots = rng.integers(0, 20, m)
            times = rng.integers(_START, _END, m)
            slug = home.split(",")[0].lower().replace(" ", "")
            for s, t in zip(slots, times):
                rows.append((user, f"{slug}{s:03d}", int(t), lat0 + 0.001 * s, lon0 + 0.001 * s,
                             CATEGORIES[s % len(CATEGORIES)], home))
    frame = pd.DataFrame(rows, columns=CANONICAL_COLUMNS)
    frame = frame.sort_values(["user_id", "timestamp", "venue_id"], kind="mergesort").reset_index(drop=True)
    _logger.info("synthetic city: %d users, %d venues, %d check-ins (%d in target city)", p.n_users, p.n_venues,
                 len(frame), p.n_checkins)
    return frame
