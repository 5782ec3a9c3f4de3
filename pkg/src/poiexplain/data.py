"""Check-in ingestion, cleaning, home-city detection, and the interaction matrix.

Check-in streams are carried as :class:`pandas.DataFrame` objects whose columns
are the fields of :class:`CheckIn` (``timestamp`` as UTC epoch seconds).  Every
function here treats its input as read-only and returns a new frame.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

_logger = logging.getLogger(__name__)

CANONICAL_COLUMNS = ["user_id", "venue_id", "timestamp", "lat", "lon", "category", "city"]
SPLIT_COLUMNS = ["user_id", "venue_id", "timestamp", "lat", "lon"]


class DataFormatError(ValueError):
    """A malformed input row; ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class CheckIn:
    user_id: str
    venue_id: str
    timestamp: int
    lat: float
    lon: float
    category: str = ""
    city: str = ""


class Origin(str, Enum):
    NYC = "NYC"
    US = "US"
    OTHER = "OTHER"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class UserHomeLabel:
    user_id: str
    home_city: str | None
    origin_class: Origin


@dataclass(frozen=True)
class VenueCatalog:
    """Venue metadata indexed by venue id."""

    venue_ids: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    category: np.ndarray
    city: np.ndarray

    @classmethod
    def from_checkins(cls, frame: pd.DataFrame) -> VenueCatalog:
        cols = [c for c in ("lat", "lon", "category", "city") if c in frame.columns]
        first = frame.groupby("venue_id", sort=True)[cols].first()
        n = len(first)
        return cls(
            venue_ids=first.index.to_numpy(dtype=object),
            lat=first["lat"].to_numpy(dtype=float),
            lon=first["lon"].to_numpy(dtype=float),
            category=first["category"].to_numpy(dtype=object) if "category" in first else np.full(n, "", dtype=object),
            city=first["city"].to_numpy(dtype=object) if "city" in first else np.full(n, "", dtype=object),
        )

    def __len__(self) -> int:
        return len(self.venue_ids)

    def __contains__(self, venue_id: str) -> bool:
        return venue_id in self._index

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {v: i for i, v in enumerate(self.venue_ids)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def __getitem__(self, venue_id: str) -> tuple[float, float, str, str]:
        i = self._index[venue_id]
        return float(self.lat[i]), float(self.lon[i]), str(self.category[i]), str(self.city[i])

    def coords(self, venue_ids: Iterable[str]) -> np.ndarray:
        """``(n, 2)`` array of (lat, lon) in the order of ``venue_ids``."""
        idx = np.fromiter((self._index[v] for v in venue_ids), dtype=np.int64)
        return np.column_stack([self.lat[idx], self.lon[idx]])


# ---------------------------------------------------------------------------
# timestamps


def parse_timestamp(text: str) -> int:
    """ISO-8601 string to UTC epoch seconds; naive strings are taken as UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(math.floor(dt.timestamp()))


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def empty_frame(columns: Sequence[str] = CANONICAL_COLUMNS) -> pd.DataFrame:
    dtypes = {"user_id": object, "venue_id": object, "timestamp": np.int64, "lat": float,
              "lon": float, "category": object, "city": object}
    return pd.DataFrame({c: pd.Series(dtype=dtypes[c]) for c in columns})


def records(frame: pd.DataFrame) -> Iterator[CheckIn]:
    """Iterate a check-in frame as :class:`CheckIn` records."""
    cols = [c for c in CANONICAL_COLUMNS if c in frame.columns]
    for row in frame[cols].itertuples(index=False):
        yield CheckIn(*row)


def to_frame(checkins: Iterable[CheckIn]) -> pd.DataFrame:
    rows = [(c.user_id, c.venue_id, int(c.timestamp), float(c.lat), float(c.lon), c.category, c.city)
            for c in checkins]
    if not rows:
        return empty_frame()
    frame = pd.DataFrame(rows, columns=CANONICAL_COLUMNS)
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    return frame


# ---------------------------------------------------------------------------
# parsers


def _check_coords(lat: float, lon: float, line: int) -> None:
    if not (-90.0 <= lat <= 90.0) or math.isnan(lat):
        raise DataFormatError(f"latitude {lat} outside [-90, 90]", line)
    if not (-180.0 <= lon <= 180.0) or math.isnan(lon):
        raise DataFormatError(f"longitude {lon} outside [-180, 180]", line)


def parse_canonical_csv(path: str | Path, columns: Sequence[str] = CANONICAL_COLUMNS) -> pd.DataFrame:
    """Read a canonical check-in CSV, validating every row.

    ``columns`` is the required header; subsample splits use the shorter
    :data:`SPLIT_COLUMNS` layout.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("missing header", 1)
        header = [h.strip() for h in header]
        if header != list(columns):
            raise DataFormatError(f"expected header {','.join(columns)}, got {','.join(header)}", 1)
        ncol = len(columns)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise DataFormatError(f"expected {ncol} fields, got {len(row)}", line)
            rec = dict(zip(columns, row))
            try:
                ts = parse_timestamp(rec["timestamp"])
            except ValueError as exc:
                raise DataFormatError(f"bad timestamp {rec['timestamp']!r}: {exc}", line) from None
            try:
                lat, lon = float(rec["lat"]), float(rec["lon"])
            except ValueError:
                raise DataFormatError(f"bad coordinate {rec['lat']!r}, {rec['lon']!r}", line) from None
            _check_coords(lat, lon, line)
            if not rec["user_id"] or not rec["venue_id"]:
                raise DataFormatError("empty user_id or venue_id", line)
            rows.append((rec["user_id"], rec["venue_id"], ts, lat, lon) + tuple(rec[c] for c in columns[5:]))
    if not rows:
        return empty_frame(columns)
    frame = pd.DataFrame(rows, columns=list(columns))
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    return frame


def write_canonical_csv(frame: pd.DataFrame, path: str | Path, columns: Sequence[str] = CANONICAL_COLUMNS) -> None:
    out = frame[list(columns)].copy()
    out["timestamp"] = [format_timestamp(t) for t in out["timestamp"]]
    out.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def in_bbox(lat: np.ndarray, lon: np.ndarray, bbox: dict) -> np.ndarray:
    return ((lat >= bbox["lat_min"]) & (lat <= bbox["lat_max"])
            & (lon >= bbox["lon_min"]) & (lon <= bbox["lon_max"]))


def _city_labels(pois: pd.DataFrame, cities_path: str | Path | None) -> np.ndarray:
    """Label venues "<City>, <CC>" by nearest city in the cities file, else by country code."""
    if cities_path is None:
        return pois["country"].to_numpy(dtype=object)
    from scipy.spatial import cKDTree

    cities = pd.read_csv(cities_path, sep="\t", header=None, quoting=csv.QUOTE_NONE,
                         usecols=[0, 1, 2, 3], names=["name", "lat", "lon", "country"])
    labels = pois["country"].to_numpy(dtype=object).copy()
    for cc, group in pois.groupby("country"):
        cand = cities[cities["country"] == cc]
        if cand.empty:
            continue
        tree = cKDTree(_unit_vectors(cand["lat"].to_numpy(), cand["lon"].to_numpy()))
        _, nearest = tree.query(_unit_vectors(group["lat"].to_numpy(), group["lon"].to_numpy()))
        names = cand["name"].to_numpy(dtype=object)[nearest]
        labels[group.index.to_numpy()] = [f"{n}, {cc}" for n in names]
    return labels


def _unit_vectors(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    la, lo = np.radians(lat), np.radians(lon)
    return np.column_stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)])


def parse_tist2015(
    checkins_path: str | Path,
    pois_path: str | Path,
    bbox: dict | None = None,
    target_city: str = "New York, US",
    cities_path: str | Path | None = None,
) -> pd.DataFrame:
    """Join the global-scale Foursquare check-in and POI dumps into canonical form.

    Check-in rows: ``user, venue, "Tue Apr 03 18:00:09 +0000 2012", offset_minutes``.
    POI rows: ``venue, lat, lon, category, country_code``.  When ``bbox`` is given
    the result is restricted to venues inside it, and those venues are labelled
    ``target_city``.  Skipped rows are counted in ``frame.attrs["warnings"]``.
    """
    pois = pd.read_csv(pois_path, sep="\t", header=None, quoting=csv.QUOTE_NONE, dtype={0: str, 4: str},
                       names=["venue_id", "lat", "lon", "category", "country"], keep_default_na=False)
    pois["lat"] = pd.to_numeric(pois["lat"], errors="coerce")
    pois["lon"] = pd.to_numeric(pois["lon"], errors="coerce")
    pois = pois.dropna(subset=["lat", "lon"]).drop_duplicates("venue_id").reset_index(drop=True)
    pois["city"] = _city_labels(pois, cities_path)
    if bbox is not None:
        inside = in_bbox(pois["lat"].to_numpy(), pois["lon"].to_numpy(), bbox)
        pois.loc[inside, "city"] = target_city

    raw = pd.read_csv(checkins_path, sep="\t", header=None, quoting=csv.QUOTE_NONE, dtype=str,
                      names=["user_id", "venue_id", "time", "offset"], keep_default_na=False)
    ts = pd.to_datetime(raw["time"], format="%a %b %d %H:%M:%S %z %Y", errors="coerce", utc=True)
    bad_time = ts.isna()
    raw = raw.loc[~bad_time].copy()
    raw["timestamp"] = (ts[~bad_time].astype("int64") // 10**9).astype(np.int64)

    merged = raw.merge(pois[["venue_id", "lat", "lon", "category", "city"]], on="venue_id", how="left")
    unknown = merged["lat"].isna()
    merged = merged.loc[~unknown]
    if bbox is not None:
        merged = merged.loc[merged["city"] == target_city]
    frame = merged[CANONICAL_COLUMNS].reset_index(drop=True)
    frame.attrs["warnings"] = {"unknown_venue": int(unknown.sum()), "bad_time": int(bad_time.sum())}
    if unknown.any() or bad_time.any():
        _logger.warning("tist2015: skipped %d rows with unknown venues, %d with bad times",
                        int(unknown.sum()), int(bad_time.sum()))
    return frame


# ---------------------------------------------------------------------------
# cleaning and labelling


def preprocess(frame: pd.DataFrame, residence_names: Sequence[str] = ("Residence", "Residences")) -> pd.DataFrame:
    """Drop residence venues and exact (user, venue, timestamp) duplicates; sort per user by time."""
    out = frame.loc[~frame["category"].isin(list(residence_names))]
    out = out.drop_duplicates(subset=["user_id", "venue_id", "timestamp"], keep="first")
    out = out.sort_values(["user_id", "timestamp", "venue_id"], kind="mergesort")
    return out.reset_index(drop=True)


def country_of(city: str) -> str:
    """Country code of a city label; bare labels are country codes themselves."""
    return city.rsplit(", ", 1)[1] if ", " in city else city


def classify_origin(home_city: str | None, target_city: str, target_country: str) -> Origin:
    if not home_city:
        return Origin.UNKNOWN
    if home_city == target_city:
        return Origin.NYC
    if country_of(home_city) == target_country:
        return Origin.US
    return Origin.OTHER


def detect_homes(global_checkins: pd.DataFrame, target_city: str = "New York, US",
                 target_country: str = "US") -> pd.DataFrame:
    """Plurality home city for every user.

    Ties between cities go to the one holding the user's earliest check-in
    among the tied cities.  Users without any labelled check-in get origin
    ``UNKNOWN``.
    """
    labelled = global_checkins.loc[global_checkins["city"].fillna("").astype(str) != "",
                                   ["user_id", "city", "timestamp"]]
    stats = labelled.groupby(["user_id", "city"], sort=True).agg(n=("timestamp", "size"),
                                                                first=("timestamp", "min")).reset_index()
    stats = stats.sort_values(["user_id", "n", "first", "city"], ascending=[True, False, True, True],
                              kind="mergesort")
    best = stats.drop_duplicates("user_id", keep="first")
    homes = dict(zip(best["user_id"], best["city"]))
    users = sorted(global_checkins["user_id"].unique())
    rows = []
    for u in users:
        city = homes.get(u)
        rows.append((u, city if city is not None else "", classify_origin(city, target_city, target_country).value))
    return pd.DataFrame(rows, columns=["user_id", "home_city", "origin_class"])


def detect_home(global_checkins: pd.DataFrame, user_id: str, target_city: str = "New York, US",
                target_country: str = "US") -> UserHomeLabel:
    sub = global_checkins.loc[global_checkins["user_id"] == user_id]
    if sub.empty:
        return UserHomeLabel(user_id, None, Origin.UNKNOWN)
    row = detect_homes(sub, target_city, target_country).iloc[0]
    return UserHomeLabel(user_id, row["home_city"] or None, Origin(row["origin_class"]))


# ---------------------------------------------------------------------------
# interaction matrix


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary user x venue visit matrix plus the raw check-in stream behind it.

    ``users`` and ``items`` are sorted id arrays; row/column ``j`` of
    ``unique_visits`` corresponds to ``users[j]`` / ``items[j]``.  The raw
    stream is stored as parallel index arrays sorted by (user, timestamp).
    """

    users: np.ndarray
    items: np.ndarray
    unique_visits: sp.csr_matrix
    raw_user: np.ndarray
    raw_item: np.ndarray
    raw_ts: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_visits(self) -> int:
        """Unique (user, venue) visits, i.e. nonzero cells."""
        return int(self.unique_visits.nnz)

    @property
    def n_checkins(self) -> int:
        return len(self.raw_ts)

    @property
    def empty(self) -> bool:
        return self.n_visits == 0

    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    def item_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.items)}

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.unique_visits.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.unique_visits.indices, minlength=self.n_items)

    def user_items(self, u: int) -> np.ndarray:
        m = self.unique_visits
        return m.indices[m.indptr[u]:m.indptr[u + 1]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"user_id": self.users[self.raw_user], "venue_id": self.items[self.raw_item],
                             "timestamp": self.raw_ts})

    def restrict(self, user_mask: np.ndarray, item_mask: np.ndarray) -> InteractionMatrix:
        """Sub-matrix on the kept users and items; raw check-ins follow."""
        keep = user_mask[self.raw_user] & item_mask[self.raw_item]
        umap = np.cumsum(user_mask) - 1
        imap = np.cumsum(item_mask) - 1
        visits = self.unique_visits[user_mask][:, item_mask].tocsr()
        visits.sort_indices()
        return InteractionMatrix(self.users[user_mask], self.items[item_mask], visits,
                                 umap[self.raw_user[keep]], imap[self.raw_item[keep]], self.raw_ts[keep])


def build_matrix(frame: pd.DataFrame) -> InteractionMatrix:
    """Build the interaction matrix of a check-in frame (repeats collapse to 1)."""
    users, u_idx = np.unique(frame["user_id"].to_numpy(dtype=object).astype(str), return_inverse=True)
    items, i_idx = np.unique(frame["venue_id"].to_numpy(dtype=object).astype(str), return_inverse=True)
    ts = frame["timestamp"].to_numpy(dtype=np.int64)
    order = np.lexsort((i_idx, ts, u_idx))
    u_idx, i_idx, ts = u_idx[order], i_idx[order], ts[order]
    visits = sp.csr_matrix((np.ones(len(u_idx), dtype=np.int8), (u_idx, i_idx)),
                           shape=(len(users), len(items)))
    visits.sum_duplicates()
    visits.data[:] = 1
    visits.sort_indices()
    return InteractionMatrix(users.astype(object), items.astype(object), visits,
                             u_idx.astype(np.int64), i_idx.astype(np.int64), ts)
