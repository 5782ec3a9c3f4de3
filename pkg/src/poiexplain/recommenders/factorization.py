"""Implicit-feedback weighted matrix factorization solved by alternating least squares."""
from __future__ import annotations

import logging

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial import cKDTree

from ..data import InteractionMatrix, VenueCatalog, _unit_vectors
from .base import Recommender, binary_csr

_logger = logging.getLogger(__name__)


def _solve_side(fixed: np.ndarray, csr, alpha: float, reg: float) -> np.ndarray:
    """Ridge solve for every row of ``csr`` against the fixed factor matrix.

    With binary preferences and confidence ``1 + alpha`` on observed cells the
    normal equations are ``(F'F + alpha F_p'F_p + reg I) x = (1 + alpha) sum F_p``.
    """
    nf = fixed.shape[1]
    gram = fixed.T @ fixed
    eye = reg * np.eye(nf)
    out = np.zeros((csr.shape[0], nf))
    for r in range(csr.shape[0]):
        idx = csr.indices[csr.indptr[r]:csr.indptr[r + 1]]
        fp = fixed[idx]
        a = gram + alpha * (fp.T @ fp) + eye
        b = (1.0 + alpha) * fp.sum(axis=0)
        try:
            out[r] = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"ALS normal equations singular at row {r}") from exc
    return out


class IALSRecommender(Recommender):
    """Weighted MF for implicit feedback (confidence ``1 + alpha * r``)."""

    name = "HKV"

    def __init__(self, matrix: InteractionMatrix, factors: int = 10, reg: float = 0.1, alpha: float = 1.0,
                 iters: int = 20, seed: int = 0):
        super().__init__(matrix, factors=factors, reg=reg, alpha=alpha, iters=iters, seed=seed)
        self.factors, self.reg, self.alpha, self.iters = factors, reg, alpha, iters
        self.R = binary_csr(matrix)
        self.RT = self.R.T.tocsr()
        rng = np.random.default_rng(seed)
        self.user_factors = rng.normal(0.0, 0.01, (matrix.n_users, factors))
        self.item_factors = rng.normal(0.0, 0.01, (matrix.n_items, factors))
        self.objectives: list[float] = []
        self.fit()

    def _after_item_sweep(self) -> None:
        pass

    def fit(self) -> None:
        for _ in range(self.iters):
            self.user_factors = _solve_side(self.item_factors, self.R, self.alpha, self.reg)
            self.item_factors = _solve_side(self.user_factors, self.RT, self.alpha, self.reg)
            self._after_item_sweep()
            self.objectives.append(self.objective())

    def objective(self) -> float:
        """Confidence-weighted squared loss plus ridge penalty, without densifying."""
        X, Y = self.user_factors, self.item_factors
        # sum over all cells of (0 - x.y)^2, then correct observed cells
        total = float(np.sum((X.T @ X) * (Y.T @ Y)))
        rows = np.repeat(np.arange(self.R.shape[0]), np.diff(self.R.indptr))
        pred = np.einsum("ij,ij->i", X[rows], Y[self.R.indices])
        total += float(np.sum((1 + self.alpha) * (1 - pred) ** 2 - pred ** 2))
        return total + self.reg * float(np.sum(X * X) + np.sum(Y * Y))

    def score_batch(self, users):
        return self.user_factors[users] @ self.item_factors.T


class IRENMFRecommender(IALSRecommender):
    """Weighted MF with instance-level geographic smoothing of item factors.

    After every sweep each venue's factor vector moves a ``geo_alpha`` share of
    the way toward the mean vector of its nearest venues inside the same
    k-means region.  ``lambda3`` is the ridge strength of the ALS solves; the
    region-level group-lasso term of the original model is not implemented.
    """

    name = "IRENMF"

    def __init__(self, matrix: InteractionMatrix, catalog: VenueCatalog, factors: int = 50, geo_alpha: float = 0.4,
                 lambda3: float = 0.1, clusters: int = 5, alpha: float = 1.0, iters: int = 20,
                 geo_neighbors: int = 10, seed: int = 0):
        self.geo_alpha = geo_alpha
        self.clusters = min(int(clusters), matrix.n_items)
        coords = catalog.coords(matrix.items)
        self.labels = self._regions(coords, self.clusters, seed)
        self.geo_nbrs = self._neighbors(coords, self.labels, geo_neighbors)
        super().__init__(matrix, factors=factors, reg=lambda3, alpha=alpha, iters=iters, seed=seed)
        self.params.update(geo_alpha=geo_alpha, lambda3=lambda3, clusters=clusters)

    @staticmethod
    def _regions(coords: np.ndarray, k: int, seed: int) -> np.ndarray:
        if k <= 1 or len(coords) <= 1:
            return np.zeros(len(coords), dtype=np.int64)
        rng = np.random.default_rng(seed)
        _, labels = kmeans2(coords, k, minit="++", seed=rng)
        return labels.astype(np.int64)

    @staticmethod
    def _neighbors(coords: np.ndarray, labels: np.ndarray, n: int) -> list[np.ndarray]:
        out: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * len(coords)
        pts = _unit_vectors(coords[:, 0], coords[:, 1])
        for region in np.unique(labels):
            members = np.flatnonzero(labels == region)
            if len(members) < 2:
                continue
            kk = min(n + 1, len(members))
            _, nn = cKDTree(pts[members]).query(pts[members], k=kk)
            nn = np.atleast_2d(nn)
            for row, i in enumerate(members):
                cand = members[nn[row]]
                out[i] = cand[cand != i][:n]
        return out

    def _after_item_sweep(self) -> None:
        if self.geo_alpha == 0:
            return
        Y = self.item_factors
        smoothed = Y.copy()
        for i, nb in enumerate(self.geo_nbrs):
            if len(nb):
                smoothed[i] = (1 - self.geo_alpha) * Y[i] + self.geo_alpha * Y[nb].mean(axis=0)
        self.item_factors = smoothed


def fit_ials(matrix: InteractionMatrix, factors: int = 10, reg: float = 0.1, alpha: float = 1.0,
             iters: int = 20, seed: int = 0) -> IALSRecommender:
    return IALSRecommender(matrix, factors=factors, reg=reg, alpha=alpha, iters=iters, seed=seed)


def fit_irenmf_simplified(matrix: InteractionMatrix, catalog: VenueCatalog, factors: int = 50,
                          geo_alpha: float = 0.4, lambda3: float = 0.1, clusters: int = 5,
                          alpha: float = 1.0, iters: int = 20, seed: int = 0) -> IRENMFRecommender:
    return IRENMFRecommender(matrix, catalog, factors=factors, geo_alpha=geo_alpha, lambda3=lambda3,
                             clusters=clusters, alpha=alpha, iters=iters, seed=seed)
