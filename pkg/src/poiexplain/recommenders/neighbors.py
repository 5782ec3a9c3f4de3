"""Popularity, random, and non-normalized k-nearest-neighbour recommenders."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..data import InteractionMatrix
from .base import Recommender, binary_csr

SIMILARITIES = ("cosine", "jaccard")


class RandomRecommender(Recommender):
    name = "Random"

    def __init__(self, matrix: InteractionMatrix, seed: int = 0):
        super().__init__(matrix, seed=seed)
        self.seed = seed

    def score_batch(self, users):
        return np.stack([np.random.default_rng([self.seed, int(u)]).random(self.matrix.n_items)
                         for u in users]) if len(users) else np.zeros((0, self.matrix.n_items))


class PopRecommender(Recommender):
    name = "Pop"

    def __init__(self, matrix: InteractionMatrix):
        super().__init__(matrix)
        self.popularity = matrix.item_degrees().astype(float)

    def score_batch(self, users):
        return np.tile(self.popularity, (len(users), 1))


def similarity_block(left: sp.csr_matrix, right: sp.csr_matrix, sim: str) -> np.ndarray:
    """Dense similarity of binary rows ``left`` against binary rows ``right``."""
    inter = (left @ right.T).toarray()
    dl = np.asarray(left.sum(axis=1)).ravel()[:, None]
    dr = np.asarray(right.sum(axis=1)).ravel()[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        if sim == "cosine":
            out = inter / np.sqrt(dl * dr)
        elif sim == "jaccard":
            out = inter / (dl + dr - inter)
        else:
            raise ValueError(f"unknown similarity {sim!r}")
    return np.nan_to_num(out, nan=0.0, posinf=0.0)


def top_k_neighbors(sim_rows: np.ndarray, self_cols: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Column indices and weights of the ``k`` most similar entries per row.

    The row's own entity is excluded; ties go to the lower index.
    """
    s = sim_rows.copy()
    s[np.arange(len(s)), self_cols] = -np.inf
    k = min(k, s.shape[1] - 1)
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(s, order, axis=1)


def neighbor_weights(rows: sp.csr_matrix, sim: str, k: int, chunk: int = 1024) -> sp.csr_matrix:
    """Sparse ``W`` with ``W[a, b] = sim(a, b)`` for ``b`` among the top-``k`` neighbours of ``a``."""
    n = rows.shape[0]
    data, indices, indptr = [], [], [0]
    for start in range(0, n, chunk):
        block = rows[start:start + chunk]
        s = similarity_block(block, rows, sim)
        cols, vals = top_k_neighbors(s, np.arange(start, start + block.shape[0]), k)
        for c, v in zip(cols, vals):
            keep = v > 0
            indices.append(c[keep])
            data.append(v[keep])
            indptr.append(indptr[-1] + int(keep.sum()))
    if n == 0:
        return sp.csr_matrix((0, 0))
    w = sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)), shape=(n, n))
    w.sort_indices()
    return w


class KNNRecommender(Recommender):
    """User- or item-based neighbourhood scoring without normalization.

    user mode: ``score(u, i) = sum_{v in N_k(u)} sim(u, v) * r(v, i)``
    item mode: ``score(u, i) = sum_{j in N_k(i)} sim(i, j) * r(u, j)``
    """

    def __init__(self, matrix: InteractionMatrix, mode: str = "user", sim: str = "cosine", k_neighbors: int = 20):
        if mode not in ("user", "item"):
            raise ValueError(f"unknown kNN mode {mode!r}")
        super().__init__(matrix, mode=mode, sim=sim, k_neighbors=k_neighbors)
        self.name = "UB" if mode == "user" else "IB"
        self.mode = mode
        self.R = binary_csr(matrix)
        source = self.R if mode == "user" else self.R.T.tocsr()
        self.W = neighbor_weights(source, sim, k_neighbors)

    def score_batch(self, users):
        if self.mode == "user":
            return (self.W[users] @ self.R).toarray()
        return (self.R[users] @ self.W.T).toarray()


def fit_random(matrix: InteractionMatrix, seed: int = 0) -> RandomRecommender:
    return RandomRecommender(matrix, seed=seed)


def fit_pop(matrix: InteractionMatrix) -> PopRecommender:
    return PopRecommender(matrix)


def fit_knn(matrix: InteractionMatrix, mode: str = "user", sim: str = "cosine", k_neighbors: int = 20) -> KNNRecommender:
    return KNNRecommender(matrix, mode=mode, sim=sim, k_neighbors=k_neighbors)
