"""Recommendation models and the name -> factory registry used by the pipeline."""
from __future__ import annotations

import itertools
from typing import Any, Callable

from ..data import InteractionMatrix, VenueCatalog
from .base import Recommender, derive_seed, recommend, recommend_all
from .bpr import BPRMFRecommender, GeoBPRMFRecommender, fit_bprmf, fit_geobprmf
from .factorization import IALSRecommender, IRENMFRecommender, fit_ials, fit_irenmf_simplified
from .hybrid import PopGeoNNRecommender, fit_popgeonn
from .neighbors import KNNRecommender, PopRecommender, RandomRecommender, fit_knn, fit_pop, fit_random

__all__ = [
    "MODEL_NAMES", "Recommender", "derive_seed", "expand_grid", "fit_model", "hyperkey", "recommend",
    "recommend_all", "fit_random", "fit_pop", "fit_knn", "fit_ials", "fit_bprmf", "fit_geobprmf",
    "fit_irenmf_simplified", "fit_popgeonn", "BPRMFRecommender", "GeoBPRMFRecommender", "IALSRecommender",
    "IRENMFRecommender", "KNNRecommender", "PopGeoNNRecommender", "PopRecommender", "RandomRecommender",
]

_FACTORIES: dict[str, Callable[..., Recommender]] = {
    "Random": lambda m, c, seed, **p: fit_random(m, seed=seed),
    "Pop": lambda m, c, seed, **p: fit_pop(m),
    "UB": lambda m, c, seed, **p: fit_knn(m, mode="user", **p),
    "IB": lambda m, c, seed, **p: fit_knn(m, mode="item", **p),
    "HKV": lambda m, c, seed, **p: fit_ials(m, seed=seed, **p),
    "BPRMF": lambda m, c, seed, **p: fit_bprmf(m, seed=seed, **p),
    "GeoBPRMF": lambda m, c, seed, **p: fit_geobprmf(m, c, seed=seed, **p),
    "IRENMF": lambda m, c, seed, **p: fit_irenmf_simplified(m, c, seed=seed, **p),
    "PopGeoNN": lambda m, c, seed, **p: fit_popgeonn(m, c, **p),
}
MODEL_NAMES = tuple(_FACTORIES)


def fit_model(name: str, matrix: InteractionMatrix, catalog: VenueCatalog | None, params: dict[str, Any],
              seed: int = 0) -> Recommender:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}") from None
    return factory(matrix, catalog, seed, **params)


def expand_grid(grid: dict[str, list]) -> list[dict[str, Any]]:
    """Cross product of a hyperparameter grid in listed key/value order."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def hyperkey(params: dict[str, Any]) -> str:
    """Filename-safe, order-independent key of a hyperparameter setting."""
    if not params:
        return "default"
    return ",".join(f"{k}={params[k]:g}" if isinstance(params[k], float) else f"{k}={params[k]}"
                    for k in sorted(params))
