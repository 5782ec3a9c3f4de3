"""PopGeoNN: popularity + user-kNN + distance to the user's centroid."""
from __future__ import annotations

import numpy as np

from ..data import InteractionMatrix, VenueCatalog
from ..features import haversine, user_centroids
from .base import Recommender
from .neighbors import KNNRecommender


def max_normalize(scores: np.ndarray, candidate_mask: np.ndarray) -> np.ndarray:
    """Divide each row by its maximum over candidate cells; all-zero rows stay zero."""
    masked = np.where(candidate_mask, scores, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top) & (top > 0), top, np.inf)
    return scores / top


class PopGeoNNRecommender(Recommender):
    name = "PopGeoNN"

    def __init__(self, matrix: InteractionMatrix, catalog: VenueCatalog, sim: str = "cosine", k_neighbors: int = 20):
        super().__init__(matrix, sim=sim, k_neighbors=k_neighbors)
        self.popularity = matrix.item_degrees().astype(float)
        self.knn = KNNRecommender(matrix, mode="user", sim=sim, k_neighbors=k_neighbors)
        self.coords = catalog.coords(matrix.items)
        self.centroids = user_centroids(matrix, self.coords)

    def components(self, users) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        users = np.asarray(users)
        pop = np.tile(self.popularity, (len(users), 1))
        ub = self.knn.score_batch(users)
        dist = haversine(self.coords[None, :, :], self.centroids[users][:, None, :])
        geo = 1.0 / (1.0 + np.atleast_2d(dist))
        return pop, ub, geo

    def score_batch(self, users):
        users = np.asarray(users)
        cand = np.ones((len(users), self.matrix.n_items), dtype=bool)
        m = self.matrix.unique_visits
        for row, u in enumerate(users):
            cand[row, m.indices[m.indptr[u]:m.indptr[u + 1]]] = False
        return sum(max_normalize(c, cand) for c in self.components(users))


def fit_popgeonn(matrix: InteractionMatrix, catalog: VenueCatalog, sim: str = "cosine",
                 k_neighbors: int = 20) -> PopGeoNNRecommender:
    return PopGeoNNRecommender(matrix, catalog, sim=sim, k_neighbors=k_neighbors)
