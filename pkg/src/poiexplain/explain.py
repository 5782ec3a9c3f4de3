"""Collinearity control and least-squares regression of metrics on explanatory variables."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from scipy.special import betainc

_logger = logging.getLogger(__name__)

VIF_CAP = 1e12
STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


class CollinearityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Student t


def t_cdf(t: float, dof: float) -> float:
    """CDF of Student's t through the regularized incomplete beta function."""
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return float(1.0 - tail if t > 0 else tail)


def t_ppf(q: float, dof: float) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, dof)
    hi = 1.0
    while t_cdf(hi, dof) < q:
        hi *= 2.0
    return float(brentq(lambda x: t_cdf(x, dof) - q, 0.0, hi, xtol=1e-12, rtol=1e-14))


def two_sided_p(t: float, dof: float) -> float:
    if math.isnan(t):
        return float("nan")
    return float(2.0 * (1.0 - t_cdf(abs(t), dof))) if abs(t) < 40 else \
        float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


# ---------------------------------------------------------------------------
# normalization and VIF


def minmax_normalize(column: Sequence[float]) -> np.ndarray:
    x = np.asarray(column, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise ValueError("cannot min-max normalize a constant column")
    return (x - lo) / (hi - lo)


def normalize_frame(frame: pd.DataFrame) -> tuple[pd.DataFrame, list[str]]:
    """Min-max normalize every column; constant columns are dropped and returned."""
    kept, dropped = {}, []
    for col in frame.columns:
        try:
            kept[col] = minmax_normalize(frame[col].to_numpy())
        except ValueError:
            dropped.append(col)
    if dropped:
        _logger.warning("dropping constant columns: %s", ", ".join(dropped))
    return pd.DataFrame(kept, index=frame.index), dropped


def _r_squared_on(y: np.ndarray, X: np.ndarray) -> float:
    A = np.column_stack([np.ones(len(y)), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        return 1.0
    return 1.0 - float(resid @ resid) / tss


def vif(X: np.ndarray, j: int) -> float:
    """``1 / (1 - R^2_j)`` of column ``j`` regressed with intercept on the rest; capped at 1e12."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] < 2:
        return 1.0
    others = np.delete(X, j, axis=1)
    if X.shape[0] <= others.shape[1] + 1:
        return VIF_CAP
    r2 = _r_squared_on(X[:, j], others)
    if r2 >= 1.0 - 1.0 / VIF_CAP:
        return VIF_CAP
    return min(VIF_CAP, 1.0 / (1.0 - r2))


def vif_all(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.array([vif(X, j) for j in range(X.shape[1])])


@dataclass
class VifReport:
    threshold: float
    vif_before: dict[str, float]
    vif_after: dict[str, float]
    retained: list[str]
    dropped: list[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "ev": list(self.vif_before),
            "vif_before": list(self.vif_before.values()),
            "vif_after": [self.vif_after.get(k, float("nan")) for k in self.vif_before],
            "retained": [k in self.vif_after for k in self.vif_before],
        })


def eliminate_collinear(frame: pd.DataFrame, threshold: float = 12.0) -> VifReport:
    """Drop correlated features until every VIF is at most ``threshold``.

    Each round takes the pair with the largest absolute Pearson correlation and
    removes the member whose largest absolute correlation with the remaining
    features (partner excluded) is higher; ties remove the second member.
    """
    if threshold <= 1:
        raise ValueError("VIF threshold must exceed 1")
    features = list(frame.columns)
    X = frame.to_numpy(dtype=float)
    before = dict(zip(features, vif_all(X)))
    keep = list(range(len(features)))
    dropped: list[str] = []
    current = vif_all(X[:, keep])
    while current.max() > threshold:
        if len(keep) <= 2:
            raise CollinearityError(f"threshold {threshold} would leave fewer than 2 features")
        corr = np.abs(np.corrcoef(X[:, keep], rowvar=False))
        np.fill_diagonal(corr, -1.0)
        a, b = np.unravel_index(np.argmax(corr), corr.shape)
        c1, c2 = min(a, b), max(a, b)
        rest = [t for t in range(len(keep)) if t not in (c1, c2)]
        m1 = corr[c1, rest].max() if rest else 0.0
        m2 = corr[c2, rest].max() if rest else 0.0
        victim = c1 if m1 > m2 else c2
        dropped.append(features[keep[victim]])
        del keep[victim]
        current = vif_all(X[:, keep])
    retained = [features[k] for k in keep]
    return VifReport(threshold, before, dict(zip(retained, current)), retained, dropped)


# ---------------------------------------------------------------------------
# OLS


@dataclass
class RegressionFit:
    names: list[str]
    intercept: float
    coef: np.ndarray
    stderr: np.ndarray  # intercept first
    tvalues: np.ndarray
    pvalues: np.ndarray
    r2: float
    adj_r2: float
    residuals: np.ndarray
    dof: int
    model: str = ""
    target: str = ""

    @property
    def n(self) -> int:
        return len(self.residuals)

    def stars(self) -> list[str]:
        return [stars(p) for p in self.pvalues]

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        """``(p + 1, 2)`` bounds, intercept first."""
        q = t_ppf(0.5 + level / 2.0, self.dof)
        est = np.concatenate([[self.intercept], self.coef])
        return np.column_stack([est - q * self.stderr, est + q * self.stderr])

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "ev": ["(Intercept)"] + list(self.names),
            "theta": np.concatenate([[self.intercept], self.coef]),
            "stderr": self.stderr,
            "t": self.tvalues,
            "p": self.pvalues,
            "stars": self.stars(),
        })


def ols_fit(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None, rank_tol: float = 1e-10) -> RegressionFit:
    """Least squares with intercept solved by QR; t-based inference with ``n - p - 1`` dof."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} rows for {p} regressors, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression input")
    A = np.column_stack([np.ones(n), X])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag <= rank_tol * max(diag.max(), 1.0))
    if bad.size:
        labels = ["(Intercept)" if b == 0 else names[b - 1] for b in bad]
        raise CollinearityError(f"rank-deficient design; offending columns: {', '.join(labels)}")
    beta = solve_triangular(R, Q.T @ y)
    resid = y - A @ beta
    dof = n - p - 1
    rss = float(resid @ resid)
    sigma2 = rss / dof
    Rinv = solve_triangular(R, np.eye(p + 1))
    se = np.sqrt(sigma2 * np.sum(Rinv ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.where(np.abs(beta) > 0, np.inf * np.sign(beta), 0.0))
    pv = np.array([two_sided_p(float(v), dof) for v in t])
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof
    return RegressionFit(names, float(beta[0]), beta[1:], se, t, pv, r2, adj, resid, dof)


# ---------------------------------------------------------------------------
# end to end


def regress_all(X: pd.DataFrame, metrics: pd.DataFrame, models: Iterable[str],
                cutoffs: Sequence[int] = (5, 10, 20),
                metric_names: Sequence[str] = ("ndcg", "epc", "item_exposure")) -> list[RegressionFit]:
    """Regress every model/metric/cutoff column of ``metrics`` on the design ``X``.

    ``X`` is indexed by subsample key; ``metrics`` has ``subsample`` and
    ``model`` columns plus one column per ``<metric>@<k>``.
    """
    fits: list[RegressionFit] = []
    for model in models:
        rows = metrics.loc[metrics["model"] == model].set_index("subsample")
        for metric in metric_names:
            for k in cutoffs:
                col = f"{metric}@{k}"
                if col not in rows.columns:
                    _logger.warning("no %s column for %s; skipped", col, model)
                    continue
                y = rows[col].reindex(X.index)
                ok = y.notna().to_numpy()
                if not ok.all():
                    _logger.warning("%s %s: %d subsamples without metric rows", model, col, int((~ok).sum()))
                if ok.sum() <= X.shape[1] + 1:
                    _logger.warning("%s %s: too few rows for regression; skipped", model, col)
                    continue
                fit = ols_fit(X.to_numpy()[ok], y.to_numpy()[ok], list(X.columns))
                fit.model, fit.target = model, col
                fits.append(fit)
    return fits


def explain_all(evs: pd.DataFrame, metrics: pd.DataFrame, models: Iterable[str],
                cutoffs: Sequence[int] = (5, 10, 20), metric_names: Sequence[str] = ("ndcg", "epc", "item_exposure"),
                threshold: float = 12.0) -> tuple[VifReport, list[RegressionFit]]:
    """Normalize EVs, eliminate collinear ones once, then regress on the survivors."""
    if len(evs) < 30:
        _logger.warning("only %d subsamples; coefficient estimates will be unstable", len(evs))
    normalized, _ = normalize_frame(evs)
    report = eliminate_collinear(normalized, threshold)
    fits = regress_all(normalized[report.retained], metrics, models, cutoffs, metric_names)
    return report, fits
