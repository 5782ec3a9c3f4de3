"""Ranking accuracy, novelty and exposure metrics; grid search; baseline exclusion."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .data import InteractionMatrix, VenueCatalog

_logger = logging.getLogger(__name__)

CUTOFFS = (5, 10, 20)
METRICS = ("ndcg", "epc", "item_exposure")

Recs = Mapping[str, Sequence]


def _ids(ranked: Sequence) -> list[str]:
    return [r[0] if isinstance(r, tuple) else r for r in ranked]


def ndcg_at_k(recs: Recs, test: Mapping[str, Iterable[str]], k: int) -> float:
    """Binary-relevance nDCG@k averaged over users with a non-empty test set.

    Users missing from ``recs`` count with DCG 0.  Returns NaN when no user is
    evaluable.
    """
    total, n = 0.0, 0
    for user, relevant in test.items():
        relevant = set(relevant)
        if not relevant:
            continue
        ranked = _ids(recs.get(user, ()))[:k]
        dcg = sum(1.0 / math.log2(n_ + 1) for n_, item in enumerate(ranked, start=1) if item in relevant)
        idcg = sum(1.0 / math.log2(n_ + 1) for n_ in range(1, min(len(relevant), k) + 1))
        total += dcg / idcg
        n += 1
    return total / n if n else float("nan")


def seen_probability(train: InteractionMatrix) -> dict[str, float]:
    """Share of training users who visited each item."""
    return dict(zip(train.items, train.item_degrees() / train.n_users))


def epc_at_k(recs: Recs, train: InteractionMatrix | Mapping[str, float], k: int) -> float:
    """Expected popularity complement with ``Z(u) = 1 / |RL_u@k|``; empty lists are skipped."""
    p_seen = seen_probability(train) if isinstance(train, InteractionMatrix) else train
    total, n = 0.0, 0
    for ranked in recs.values():
        items = _ids(ranked)[:k]
        if not items:
            continue
        total += sum(1.0 - p_seen.get(i, 0.0) for i in items) / len(items)
        n += 1
    return total / n if n else float("nan")


def item_exposure_at_k(recs: Recs, test: Mapping[str, Iterable[str]], k: int) -> float:
    """Sum over items of ``|U_test(i) - Rec@k(i)| / U_test``; lower is better."""
    test_users = [u for u, items in test.items() if items]
    n = len(test_users)
    if n == 0:
        return float("nan")
    in_test = Counter(i for u in test_users for i in set(test[u]))
    recommended = Counter(i for ranked in recs.values() for i in _ids(ranked)[:k])
    items = set(in_test) | set(recommended)
    return float(sum(abs(in_test[i] - recommended[i]) for i in items)) / n


def evaluate(recs: Recs, test: Mapping[str, Iterable[str]], train: InteractionMatrix,
             cutoffs: Sequence[int] = CUTOFFS) -> dict[str, float]:
    p_seen = seen_probability(train)
    out: dict[str, float] = {}
    for k in cutoffs:
        out[f"ndcg@{k}"] = ndcg_at_k(recs, test, k)
        out[f"epc@{k}"] = epc_at_k(recs, p_seen, k)
        out[f"item_exposure@{k}"] = item_exposure_at_k(recs, test, k)
    return out


@dataclass
class EvalResult:
    subsample: str
    model: str
    params: dict[str, Any]
    metrics: dict[str, float]
    n_users: int
    all_configs: list[tuple[dict[str, Any], dict[str, float]]] = field(default_factory=list, repr=False)

    def row(self) -> dict[str, Any]:
        from .recommenders import hyperkey

        return {"subsample": self.subsample, "model": self.model, "hyperparams": hyperkey(self.params),
                **self.metrics, "n_users": self.n_users}


def select_best(configs: Sequence[tuple[dict[str, Any], dict[str, float]]], key: str = "ndcg@5") -> int:
    """Index of the config maximizing ``key``; earliest wins ties, NaN never wins."""
    best, best_val = -1, -math.inf
    for idx, (_, m) in enumerate(configs):
        v = m.get(key, float("nan"))
        if not math.isnan(v) and v > best_val:
            best, best_val = idx, v
    return best


def grid_search(subsample, model: str, grid: dict[str, list], seed: int = 0,
                catalog: VenueCatalog | None = None, cutoffs: Sequence[int] = CUTOFFS) -> EvalResult | None:
    """Train every configuration, keep the one with the best nDCG@5.

    Returns ``None`` when every configuration fails or is unevaluable.
    """
    from .recommenders import derive_seed, expand_grid, fit_model, hyperkey, recommend_all

    test_users = [u for u, items in subsample.test.items() if items]
    configs = []
    for params in expand_grid(grid):
        try:
            fitted = fit_model(model, subsample.train, catalog, params,
                               seed=derive_seed(seed, subsample.key, model, hyperkey(params)))
            recs = recommend_all(fitted, max(cutoffs), test_users)
            configs.append((params, evaluate(recs, subsample.test, subsample.train, cutoffs)))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            _logger.warning("%s %s %s failed: %s", subsample.key, model, params, exc)
    best = select_best(configs)
    if best < 0:
        return None
    params, metrics = configs[best]
    return EvalResult(subsample.key, model, params, metrics, len(test_users), configs)


def exclusion_filter(mean_ndcg: Mapping[str, float] | Any, baseline: str = "Pop", metric: str = "ndcg@5") -> list[str]:
    """Models whose mean nDCG@5 across subsamples is not below the baseline's.

    Accepts either ``{model: mean}`` or a frame with ``model`` and ``metric`` columns.
    The baseline is always retained.
    """
    if not isinstance(mean_ndcg, Mapping):
        mean_ndcg = mean_ndcg.groupby("model", sort=False)[metric].mean().to_dict()
    if baseline not in mean_ndcg:
        raise ValueError(f"baseline {baseline!r} missing from results")
    ref = mean_ndcg[baseline]
    return [m for m, v in mean_ndcg.items() if m == baseline or v >= ref]
