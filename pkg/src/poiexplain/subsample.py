"""Domain-driven subsampling: origin, season, drop-top-venues, and k-core filters."""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd

from .data import (
    SPLIT_COLUMNS,
    InteractionMatrix,
    build_matrix,
    empty_frame,
    parse_canonical_csv,
    write_canonical_csv,
)

_logger = logging.getLogger(__name__)

ORIGINS = ("ALL", "NYC", "US", "OTHER")
SEASONS = ("ALL", "SUMMER", "WINTER")
SUMMER_MONTHS = frozenset(range(5, 11))


@dataclass(frozen=True, order=True)
class SubsampleSpec:
    origin: str = "ALL"
    season: str = "ALL"
    k_core: int = 2
    drop_top_pct: float = 0.01

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.season not in SEASONS:
            raise ValueError(f"unknown season {self.season!r}")
        if self.k_core < 1:
            raise ValueError("k_core must be >= 1")
        if not 0.0 <= self.drop_top_pct < 1.0:
            raise ValueError("drop_top_pct must lie in [0, 1)")

    @property
    def key(self) -> str:
        """Stable key, e.g. ``k5-dtv1-oNYC-sSummer`` (dtv in percent)."""
        pct = f"{float(Fraction(str(self.drop_top_pct)) * 100):g}"
        return f"k{self.k_core}-dtv{pct}-o{self.origin}-s{self.season.capitalize()}"

    @classmethod
    def from_key(cls, key: str) -> SubsampleSpec:
        k, dtv, o, s = key.split("-")
        return cls(origin=o[1:], season=s[1:].upper(), k_core=int(k[1:]),
                   drop_top_pct=float(Fraction(dtv[3:]) / 100))


@dataclass
class Subsample:
    spec: SubsampleSpec
    full: InteractionMatrix
    train: InteractionMatrix
    test: dict[str, set[str]]
    test_events: pd.DataFrame = field(repr=False, default_factory=lambda: empty_frame(SPLIT_COLUMNS))
    degenerate: bool = False

    @property
    def key(self) -> str:
        return self.spec.key

    def counts(self) -> dict[str, int]:
        return {
            "users": self.full.n_users,
            "venues": self.full.n_items,
            "checkins": self.full.n_checkins,
            "visits": self.full.n_visits,
            "train_users": self.train.n_users,
            "train_venues": self.train.n_items,
            "train_visits": self.train.n_visits,
            "test_users": sum(1 for v in self.test.values() if v),
            "test_visits": sum(len(v) for v in self.test.values()),
        }


# ---------------------------------------------------------------------------
# filters


def filter_origin(frame: pd.DataFrame, labels: pd.DataFrame, origin: str) -> pd.DataFrame:
    """Keep check-ins of users whose origin class matches; ``ALL`` is the identity."""
    if origin == "ALL":
        return frame
    users = labels.loc[labels["origin_class"] == origin, "user_id"]
    return frame.loc[frame["user_id"].isin(set(users))]


def filter_season(frame: pd.DataFrame, season: str) -> pd.DataFrame:
    """SUMMER keeps UTC months May-October, WINTER the complement."""
    if season == "ALL":
        return frame
    months = pd.to_datetime(frame["timestamp"], unit="s", utc=True).dt.month
    summer = months.isin(SUMMER_MONTHS).to_numpy()
    return frame.loc[summer if season == "SUMMER" else ~summer]


def n_to_drop(pct: float, n_items: int) -> int:
    # exact decimal arithmetic: ceil(0.07 * 100) must be 7, not 8
    return min(n_items, math.ceil(Fraction(str(pct)) * n_items))


def drop_top_venues(frame: pd.DataFrame, pct: float) -> pd.DataFrame:
    """Remove the ``ceil(pct * |venues|)`` venues with the most distinct visitors.

    Ties are broken by ascending venue id.
    """
    if frame.empty or pct <= 0:
        return frame
    pop = frame.groupby("venue_id")["user_id"].nunique()
    ranked = sorted(pop.items(), key=lambda kv: (-kv[1], kv[0]))
    drop = {v for v, _ in ranked[:n_to_drop(pct, len(ranked))]}
    return frame.loc[~frame["venue_id"].isin(drop)]


def top_venue_share(frame: pd.DataFrame, pct: float) -> float:
    """Share of check-ins landing on the ``ceil(pct * |venues|)`` venues with the most check-ins."""
    if frame.empty:
        return float("nan")
    counts = np.sort(frame["venue_id"].value_counts().to_numpy())[::-1]
    return float(counts[:n_to_drop(pct, len(counts))].sum() / counts.sum())


def enforce_k_core(matrix: InteractionMatrix, k: int) -> InteractionMatrix:
    """Maximal sub-matrix where every user and venue has at least ``k`` unique visits."""
    if k < 1:
        raise ValueError("k must be >= 1")
    visits = matrix.unique_visits.tocsr()
    user_keep = np.ones(matrix.n_users, dtype=bool)
    item_keep = np.ones(matrix.n_items, dtype=bool)
    while True:
        sub = visits[user_keep][:, item_keep]
        udeg = np.diff(sub.indptr)
        ideg = np.bincount(sub.indices, minlength=sub.shape[1])
        bad_u, bad_i = udeg < k, ideg < k
        if not bad_u.any() and not bad_i.any():
            break
        user_keep[np.flatnonzero(user_keep)[bad_u]] = False
        item_keep[np.flatnonzero(item_keep)[bad_i]] = False
    return matrix.restrict(user_keep, item_keep)


def generate_grid(grids: dict) -> list[SubsampleSpec]:
    """Cross product of the filter grids, in origin/season/k/dtv nesting order."""
    return [SubsampleSpec(o, s, int(k), float(d)) for o, s, k, d in
            itertools.product(grids["origin"], grids["season"], grids["k_core"], grids["drop_top_pct"])]


# ---------------------------------------------------------------------------
# split and materialization


def temporal_split(matrix: InteractionMatrix, train_fraction: float = 0.8):
    """Per-user split of unique first-visit events: oldest ``floor(0.8 n)`` (min 1) to train.

    Returns ``(train, test)`` where ``train`` is an :class:`InteractionMatrix`
    carrying every raw check-in of the training (user, venue) pairs and ``test``
    is a frame of the held-out first-visit events.
    """
    frame = matrix.to_frame()
    if frame.empty:
        return build_matrix(frame), empty_frame(SPLIT_COLUMNS[:3])
    firsts = (frame.groupby(["user_id", "venue_id"], sort=False)["timestamp"].min().reset_index()
              .sort_values(["user_id", "timestamp", "venue_id"], kind="mergesort"))
    rank = firsts.groupby("user_id", sort=False).cumcount().to_numpy()
    n = firsts.groupby("user_id", sort=False)["venue_id"].transform("size").to_numpy()
    n_train = np.maximum(1, np.floor(train_fraction * n + 1e-9).astype(int))
    is_train = rank < n_train
    train_pairs = firsts.loc[is_train, ["user_id", "venue_id"]]
    raw_train = frame.merge(train_pairs, on=["user_id", "venue_id"], how="inner")
    test = firsts.loc[~is_train].reset_index(drop=True)
    return build_matrix(raw_train), test


def _test_sets(test: pd.DataFrame) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for u, v in zip(test["user_id"], test["venue_id"]):
        out.setdefault(u, set()).add(v)
    return out


def materialize(spec: SubsampleSpec, checkins: pd.DataFrame, labels: pd.DataFrame,
                train_fraction: float = 0.8) -> Subsample:
    """Apply origin -> season -> drop-top -> k-core, then split temporally."""
    frame = filter_origin(checkins, labels, spec.origin)
    frame = filter_season(frame, spec.season)
    frame = drop_top_venues(frame, spec.drop_top_pct)
    full = enforce_k_core(build_matrix(frame), spec.k_core)
    train, test = temporal_split(full, train_fraction)
    sub = Subsample(spec, full, train, _test_sets(test), test)
    sub.degenerate = full.n_users < 2 or full.empty or train.n_items < 2
    if sub.degenerate:
        _logger.warning("subsample %s is degenerate (%d users, %d visits)", spec.key, full.n_users, full.n_visits)
    return sub


# ---------------------------------------------------------------------------
# persistence


def save_subsample(sub: Subsample, directory: str | Path, catalog) -> Path:
    """Write ``train.csv``, ``test.csv`` and ``manifest.json`` under ``directory/<key>``."""
    out = Path(directory) / sub.key
    out.mkdir(parents=True, exist_ok=True)
    train = sub.train.to_frame()
    test = sub.test_events[["user_id", "venue_id", "timestamp"]]
    for frame, name in ((train, "train.csv"), (test, "test.csv")):
        frame = frame.copy()
        if len(frame):
            coords = catalog.coords(frame["venue_id"])
            frame["lat"], frame["lon"] = coords[:, 0], coords[:, 1]
        else:
            frame = empty_frame(SPLIT_COLUMNS)
        write_canonical_csv(frame, out / name, SPLIT_COLUMNS)
    manifest = {"key": sub.key, "spec": asdict(sub.spec), "degenerate": bool(sub.degenerate), "counts": sub.counts()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_split(directory: str | Path) -> tuple[pd.DataFrame, pd.DataFrame]:
    directory = Path(directory)
    return (parse_canonical_csv(directory / "train.csv", SPLIT_COLUMNS),
            parse_canonical_csv(directory / "test.csv", SPLIT_COLUMNS))
