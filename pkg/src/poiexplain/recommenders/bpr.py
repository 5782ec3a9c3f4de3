"""Bayesian personalized ranking MF, plain and with a geographic intermediate class."""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from ..data import InteractionMatrix, VenueCatalog, _unit_vectors
from ..features import EARTH_RADIUS_KM
from .base import Recommender

_CLAMP = 35.0


@njit(cache=True)
def _contains(sorted_arr, lo, hi, x):
    # binary search in sorted_arr[lo:hi]
    while lo < hi:
        mid = (lo + hi) // 2
        v = sorted_arr[mid]
        if v == x:
            return True
        if v < x:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True)
def _update(W, H, b, u, i, j, lr, reg_u, reg_i, reg_j, bias_reg):
    x = b[i] - b[j]
    for f in range(W.shape[1]):
        x += W[u, f] * (H[i, f] - H[j, f])
    if x > _CLAMP:
        x = _CLAMP
    elif x < -_CLAMP:
        x = -_CLAMP
    g = 1.0 / (1.0 + np.exp(x))
    b[i] += lr * (g - bias_reg * b[i])
    b[j] += lr * (-g - bias_reg * b[j])
    for f in range(W.shape[1]):
        wu = W[u, f]
        hi = H[i, f]
        hj = H[j, f]
        W[u, f] += lr * (g * (hi - hj) - reg_u * wu)
        H[i, f] += lr * (g * wu - reg_i * hi)
        H[j, f] += lr * (-g * wu - reg_j * hj)


@njit(cache=True)
def _sample_outside(n_items, ptr_a, idx_a, ptr_b, idx_b, u, max_tries):
    # uniform item not in set A[u] nor B[u]; -1 if none found
    for _ in range(max_tries):
        j = np.random.randint(0, n_items)
        if _contains(idx_a, ptr_a[u], ptr_a[u + 1], j):
            continue
        if _contains(idx_b, ptr_b[u], ptr_b[u + 1], j):
            continue
        return j
    return -1


@njit(cache=True)
def _train(W, H, b, pos_ptr, pos_idx, near_ptr, near_idx, pair_users, seed, iters, lr,
           reg_u, reg_i, reg_j, bias_reg, use_geo):
    np.random.seed(seed)
    n_items = H.shape[0]
    n_pairs = pos_idx.shape[0]
    for _ in range(iters):
        for _s in range(n_pairs):
            p = np.random.randint(0, n_pairs)
            u = pair_users[p]
            i = pos_idx[p]
            n_near = near_ptr[u + 1] - near_ptr[u] if use_geo else 0
            if n_near > 0:
                g = near_idx[near_ptr[u] + np.random.randint(0, n_near)]
                _update(W, H, b, u, i, g, lr, reg_u, reg_i, reg_j, bias_reg)
                j = _sample_outside(n_items, pos_ptr, pos_idx, near_ptr, near_idx, u, 64)
                if j >= 0:
                    _update(W, H, b, u, g, j, lr, reg_u, reg_i, reg_j, bias_reg)
            else:
                # near set of u is empty here, so this is plain BPR negative sampling
                j = _sample_outside(n_items, pos_ptr, pos_idx, near_ptr, near_idx, u, 64)
                if j >= 0:
                    _update(W, H, b, u, i, j, lr, reg_u, reg_i, reg_j, bias_reg)


class BPRMFRecommender(Recommender):
    """Pairwise ranking MF trained by SGD over uniformly sampled (u, i+, j-) triples.

    One iteration draws ``|C|`` observed pairs with replacement.
    """

    name = "BPRMF"

    def __init__(self, matrix: InteractionMatrix, factors: int = 10, learn_rate: float = 0.05, iters: int = 50,
                 reg_u: float = 0.0025, reg_i: float | None = None, reg_j: float | None = None,
                 bias_reg: float = 0.0, seed: int = 0, init_std: float = 0.1):
        reg_i = reg_u if reg_i is None else reg_i
        reg_j = reg_u / 10 if reg_j is None else reg_j
        super().__init__(matrix, factors=factors, learn_rate=learn_rate, iters=iters, reg_u=reg_u,
                         reg_i=reg_i, reg_j=reg_j, bias_reg=bias_reg, seed=seed)
        rng = np.random.default_rng(seed)
        self.user_factors = rng.normal(0.0, init_std, (matrix.n_users, factors))
        self.item_factors = rng.normal(0.0, init_std, (matrix.n_items, factors))
        self.item_bias = np.zeros(matrix.n_items)
        m = matrix.unique_visits.tocsr()
        m.sort_indices()
        self._pos_ptr = m.indptr.astype(np.int64)
        self._pos_idx = m.indices.astype(np.int64)
        self._pair_users = np.repeat(np.arange(matrix.n_users, dtype=np.int64), np.diff(m.indptr))
        near_ptr, near_idx, use_geo = self._near_sets()
        if len(self._pos_idx) and iters > 0:
            _train(self.user_factors, self.item_factors, self.item_bias, self._pos_ptr, self._pos_idx,
                   near_ptr, near_idx, self._pair_users, np.uint32(seed % 2**32), iters, learn_rate,
                   reg_u, reg_i, reg_j, bias_reg, use_geo)

    def _near_sets(self):
        empty = np.zeros(self.matrix.n_users + 1, dtype=np.int64)
        return empty, np.zeros(0, dtype=np.int64), False

    def score_batch(self, users):
        return self.item_bias[None, :] + self.user_factors[users] @ self.item_factors.T


class GeoBPRMFRecommender(BPRMFRecommender):
    """BPR with a "near" class between visited and far unvisited venues.

    For user ``u`` the near class holds unvisited venues within ``max_dist``
    km of any of ``u``'s training venues.  Each sampled positive yields two
    updates: positive over a near venue, and that near venue over a far one.
    Users with no near venues fall back to plain BPR sampling.
    """

    name = "GeoBPRMF"

    def __init__(self, matrix: InteractionMatrix, catalog: VenueCatalog, max_dist: float = 1.0, **bpr_params):
        self.max_dist = float(max_dist)
        self._coords = catalog.coords(matrix.items)
        super().__init__(matrix, **bpr_params)
        self.params["max_dist"] = max_dist

    def _near_sets(self):
        m = self.matrix.unique_visits.tocsr()
        pts = _unit_vectors(self._coords[:, 0], self._coords[:, 1])
        # chord length on the unit sphere for a great-circle distance
        chord = 2.0 * np.sin(min(self.max_dist / EARTH_RADIUS_KM, np.pi) / 2.0)
        tree = cKDTree(pts)
        item_nbrs = tree.query_ball_point(pts, r=chord + 1e-12)
        ptr = [0]
        idx = []
        for u in range(m.shape[0]):
            own = m.indices[m.indptr[u]:m.indptr[u + 1]]
            near = set()
            for i in own:
                near.update(item_nbrs[i])
            near.difference_update(own.tolist())
            arr = np.array(sorted(near), dtype=np.int64)
            idx.append(arr)
            ptr.append(ptr[-1] + len(arr))
        near_idx = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
        return np.array(ptr, dtype=np.int64), near_idx.astype(np.int64), True


def fit_bprmf(matrix: InteractionMatrix, factors: int = 10, learn_rate: float = 0.05, iters: int = 50,
              reg_u: float = 0.0025, reg_i: float | None = None, reg_j: float | None = None,
              bias_reg: float = 0.0, seed: int = 0) -> BPRMFRecommender:
    return BPRMFRecommender(matrix, factors=factors, learn_rate=learn_rate, iters=iters, reg_u=reg_u,
                            reg_i=reg_i, reg_j=reg_j, bias_reg=bias_reg, seed=seed)


def fit_geobprmf(matrix: InteractionMatrix, catalog: VenueCatalog, max_dist: float = 1.0, factors: int = 10,
                 learn_rate: float = 0.05, iters: int = 50, reg_u: float = 0.0025, reg_i: float | None = None,
                 reg_j: float | None = None, bias_reg: float = 0.0, seed: int = 0) -> GeoBPRMFRecommender:
    return GeoBPRMFRecommender(matrix, catalog, max_dist=max_dist, factors=factors, learn_rate=learn_rate,
                               iters=iters, reg_u=reg_u, reg_i=reg_i, reg_j=reg_j, bias_reg=bias_reg, seed=seed)
