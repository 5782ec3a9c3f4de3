from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np

from ..data import InteractionMatrix


def derive_seed(master: int, *parts: object) -> int:
    """Stable 32-bit seed from a master seed and job identifiers."""
    text = "|".join([str(int(master))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


class Recommender:
    """Base class: subclasses fill in :meth:`score_batch`.

    ``score_batch`` returns raw scores for every training item; the user's own
    training items are suppressed later by :func:`recommend`.  Returning
    ``None`` for a row (via ``np.nan``) marks an unscorable user.
    """

    name = "base"

    def __init__(self, matrix: InteractionMatrix, **params):
        self.matrix = matrix
        self.params = params
        self.items = matrix.items
        self.users = matrix.users
        self._uindex = matrix.user_index()

    def score_batch(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, user: int) -> np.ndarray:
        return self.score_batch(np.array([user]))[0]

    def can_score(self, user: int) -> bool:
        return len(self.matrix.user_items(user)) > 0

    def user_index(self, user_id: str) -> int:
        return self._uindex[user_id]


def _ranked(scores: np.ndarray, excluded: np.ndarray, k: int, candidates: np.ndarray | None) -> np.ndarray:
    s = np.array(scores, dtype=float, copy=True)
    if candidates is not None:
        mask = np.ones(len(s), dtype=bool)
        mask[candidates] = False
        s[mask] = -np.inf
    s[excluded] = -np.inf
    # descending score, ascending venue index (items are id-sorted)
    order = np.argsort(-s, kind="stable")
    n_valid = int(np.isfinite(s).sum())
    return order[: min(k, n_valid)]


def recommend(model: Recommender, user: str | int, k: int, candidates: Iterable[str] | None = None):
    """Top-``k`` ``(venue_id, score)`` pairs for one user, excluding training items."""
    if k < 1:
        raise ValueError("k must be >= 1")
    u = model.user_index(user) if isinstance(user, str) else int(user)
    if not model.can_score(u):
        return []
    cand = None
    if candidates is not None:
        idx = model.matrix.item_index()
        cand = np.array([idx[c] for c in candidates if c in idx], dtype=np.int64)
    scores = model.score(u)
    top = _ranked(scores, model.matrix.user_items(u), k, cand)
    return [(model.items[i], float(scores[i])) for i in top]


def recommend_all(model: Recommender, k: int, users: Iterable[str] | None = None,
                  batch: int = 512) -> dict[str, list[tuple[str, float]]]:
    """Top-``k`` lists for many users, scored in batches."""
    if users is None:
        uidx = np.arange(model.matrix.n_users)
    else:
        uidx = np.array([model.user_index(u) for u in users if u in model._uindex], dtype=np.int64)
    out: dict[str, list[tuple[str, float]]] = {}
    for start in range(0, len(uidx), batch):
        chunk = uidx[start:start + batch]
        scores = model.score_batch(chunk)
        for row, u in zip(scores, chunk):
            if not model.can_score(int(u)):
                out[model.users[u]] = []
                continue
            top = _ranked(row, model.matrix.user_items(int(u)), k, None)
            out[model.users[u]] = [(model.items[i], float(row[i])) for i in top]
    return out


def binary_csr(matrix: InteractionMatrix):
    m = matrix.unique_visits.astype(np.float64).tocsr()
    m.sort_indices()
    return m
