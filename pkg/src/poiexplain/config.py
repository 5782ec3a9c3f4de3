"""Pipeline configuration: defaults, YAML loading, and provenance dumps."""
from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any

import yaml

DATA_DIR_ENV = "POIEXPLAIN_DATA_DIR"

# NYC five boroughs plus Newark, NJ.
DEFAULT_BBOX = {"lat_min": 40.47, "lat_max": 40.93, "lon_min": -74.27, "lon_max": -73.68}

# hyperparameter search spaces per model
DEFAULT_HYPERGRIDS: dict[str, dict[str, list]] = {
    "Random": {},
    "Pop": {},
    "UB": {"sim": ["cosine", "jaccard"], "k_neighbors": [20, 40, 60, 80, 100, 120]},
    "IB": {"sim": ["cosine", "jaccard"], "k_neighbors": [20, 40, 60, 80, 100, 120]},
    "HKV": {"factors": [10, 50, 100], "reg": [0.1, 1.0], "alpha": [0.1, 1.0]},
    "BPRMF": {
        "factors": [10, 50, 100],
        "bias_reg": [0.0, 0.5, 1.0],
        "reg_u": [0.0025, 0.001, 0.005, 0.01, 0.1],
    },
    "GeoBPRMF": {
        "factors": [10, 50, 100],
        "bias_reg": [0.0, 0.5, 1.0],
        "reg_u": [0.0025, 0.001, 0.005, 0.01, 0.1],
        "max_dist": [1.0, 4.0],
    },
    "IRENMF": {"factors": [50, 100], "geo_alpha": [0.4, 0.6], "lambda3": [0.1, 1.0], "clusters": [5, 50]},
    "PopGeoNN": {"sim": ["cosine", "jaccard"], "k_neighbors": [20, 40, 60, 80, 100, 120]},
}

DEFAULTS: dict[str, Any] = {
    "data": {
        "format": "canonical",  # or "tist2015"
        "checkins": None,
        "pois": None,
        "cities": None,
    },
    "target_city": "New York, US",
    "target_country": "US",
    "bbox": DEFAULT_BBOX,
    # New York City Hall
    "city_center_lat": 40.7128,
    "city_center_lon": -74.0060,
    "residence_category_names": ["Residence", "Residences", "Home (private)"],
    "grids": {
        "origin": ["ALL", "NYC", "US", "OTHER"],
        "season": ["ALL", "SUMMER", "WINTER"],
        "k_core": [2, 5, 10],
        "drop_top_pct": [0.005, 0.01, 0.02, 0.05],
    },
    "train_fraction": 0.8,
    "models": ["Random", "Pop", "UB", "IB", "HKV", "BPRMF", "GeoBPRMF", "IRENMF", "PopGeoNN"],
    "hypergrids": DEFAULT_HYPERGRIDS,
    "cutoffs": [5, 10, 20],
    "vif_threshold": 12.0,
    "seed": 42,
    "jobs": 1,
    "out": "runs/default",
    "heatmap_bins": 50,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "hypergrids" and isinstance(value, dict):
            # a model's grid is replaced wholesale, not merged key by key
            out[key] = {**out.get(key, {}), **copy.deepcopy(value)}
        elif isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def default_config() -> dict[str, Any]:
    return copy.deepcopy(DEFAULTS)


def load_config(path: str | os.PathLike | None = None, **overrides: Any) -> dict[str, Any]:
    """Read a YAML config on top of the defaults.

    Relative data paths are resolved against the config file's directory, then
    against ``$POIEXPLAIN_DATA_DIR`` when the first lookup fails.
    """
    cfg = default_config()
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ValueError(f"config {path} must be a mapping")
        cfg = _merge(cfg, user)
        base_dir = path.parent
    cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    data_dir = os.environ.get(DATA_DIR_ENV)
    for key in ("checkins", "pois", "cities"):
        value = cfg["data"].get(key)
        if not value:
            continue
        p = Path(value)
        if not p.is_absolute():
            candidate = base_dir / p
            if not candidate.exists() and data_dir:
                candidate = Path(data_dir) / p
            p = candidate
        cfg["data"][key] = str(p)
    return cfg


def validate_data_paths(cfg: dict[str, Any]) -> None:
    data = cfg["data"]
    if not data.get("checkins"):
        raise ValueError("config: data.checkins is not set")
    needed = ["checkins"] + (["pois"] if data.get("format") == "tist2015" else [])
    for key in needed:
        if not data.get(key) or not Path(data[key]).exists():
            raise FileNotFoundError(f"config: data.{key} not found: {data.get(key)}")


def dump_config(cfg: dict[str, Any], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
