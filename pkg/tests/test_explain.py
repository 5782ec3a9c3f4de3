import numpy as np
import pandas as pd
import pytest
from scipy import stats as sps

from poiexplain.explain import (VIF_CAP, CollinearityError, eliminate_collinear, explain_all, minmax_normalize,
                                normalize_frame, ols_fit, stars, t_cdf, t_ppf, two_sided_p, vif, vif_all)


def orthonormal_centered(rng, n, p):
    """``p`` zero-mean, unit-norm, mutually orthogonal columns."""
    X = rng.normal(size=(n, p))
    X -= X.mean(axis=0)
    q, _ = np.linalg.qr(X)
    return q


# -- t distribution -----------------------------------------------------------


def test_t_critical_values():
    assert t_ppf(0.975, 10) == pytest.approx(2.228, abs=1e-3)
    assert t_ppf(0.975, 135) == pytest.approx(1.978, abs=1e-3)
    assert t_ppf(0.025, 10) == pytest.approx(-2.228, abs=1e-3)


@pytest.mark.parametrize("dof", [1, 3, 10, 135])
def test_t_cdf_against_reference(dof):
    for t in (-5.0, -1.3, 0.0, 0.7, 2.5, 40.0):
        assert t_cdf(t, dof) == pytest.approx(sps.t.cdf(t, dof), abs=1e-12)
        assert two_sided_p(t, dof) == pytest.approx(2 * sps.t.sf(abs(t), dof), rel=1e-9, abs=1e-300)


def test_stars_thresholds():
    assert [stars(p) for p in (0.0005, 0.001, 0.005, 0.01, 0.02, 0.05, 0.2)] == ["***", "**", "**", "*", "*", "", ""]


# -- normalization ------------------------------------------------------------


def test_minmax_examples():
    assert minmax_normalize([2, 4, 6]).tolist() == [0, 0.5, 1]
    assert minmax_normalize([0, 0.3, 1]).tolist() == [0, 0.3, 1]
    assert minmax_normalize([-1, 0, 3]).tolist() == [0, 0.25, 1]
    with pytest.raises(ValueError):
        minmax_normalize([1, 1, 1])


def test_normalize_frame_drops_constant():
    frame = pd.DataFrame({"a": [1.0, 2.0, 3.0], "b": [5.0, 5.0, 5.0]})
    out, dropped = normalize_frame(frame)
    assert list(out.columns) == ["a"] and dropped == ["b"]


# -- VIF ------------------------------------------------------------------------


def test_vif_orthogonal(rng):
    X = orthonormal_centered(rng, 30, 2)
    assert vif_all(X) == pytest.approx([1, 1], abs=1e-6)


def test_vif_duplicate_column_capped(rng):
    x = rng.normal(size=20)
    X = np.column_stack([x, x, rng.normal(size=20)])
    assert vif(X, 0) == VIF_CAP and vif(X, 1) == VIF_CAP


def test_vif_two_predictor_closed_form(rng):
    q = orthonormal_centered(rng, 50, 3)
    X = np.column_stack([q[:, 0], 0.8 * q[:, 0] + 0.6 * q[:, 1], q[:, 2]])
    v = vif_all(X)
    assert v[0] == pytest.approx(1 / (1 - 0.64), abs=1e-3)
    assert v[1] == pytest.approx(2.7778, abs=1e-3)
    assert v[2] == pytest.approx(1.0, abs=1e-6)


# -- elimination --------------------------------------------------------------


def test_eliminate_orthogonal_keeps_all(rng):
    frame = pd.DataFrame(orthonormal_centered(rng, 40, 5), columns=list("abcde"))
    rep = eliminate_collinear(frame, 12)
    assert rep.retained == list("abcde") and rep.dropped == []


def test_eliminate_duplicate_drops_one_of_pair(rng):
    X = rng.normal(size=(40, 4))
    frame = pd.DataFrame(np.column_stack([X, X[:, 1]]), columns=["a", "b", "c", "d", "b2"])
    rep = eliminate_collinear(frame, 12)
    assert rep.dropped[0] in ("b", "b2") and len(rep.dropped) == 1
    assert max(rep.vif_after.values()) <= 12


def test_eliminate_follows_partner_excluded_rule(rng):
    # a ~ b strongly; c correlates with a but not with b, so a is the one to go
    z = orthonormal_centered(rng, 60, 4)
    b = z[:, 0]
    a = b + 0.05 * z[:, 1]
    c = 0.5 * z[:, 1] + z[:, 2]
    frame = pd.DataFrame({"a": a, "b": b, "c": c, "d": z[:, 3]})
    rep = eliminate_collinear(frame, 5)
    assert rep.dropped == ["a"]


@pytest.mark.parametrize("seed", range(50))
def test_eliminate_postcondition_random(seed):
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(60, 3))
    X = latent @ rng.normal(size=(3, 10)) + 0.1 * rng.normal(size=(60, 10))
    frame, _ = normalize_frame(pd.DataFrame(X, columns=[f"x{j}" for j in range(10)]))
    threshold = float(rng.choice([5.0, 12.0]))
    rep = eliminate_collinear(frame, threshold)
    assert max(vif_all(frame[rep.retained].to_numpy())) <= threshold
    assert set(rep.retained) | set(rep.dropped) == set(frame.columns)


def test_eliminate_rejects_bad_threshold(rng):
    with pytest.raises(ValueError):
        eliminate_collinear(pd.DataFrame(rng.normal(size=(10, 3))), 1.0)


def test_eliminate_too_aggressive(rng):
    x = rng.normal(size=30)
    frame = pd.DataFrame({"a": x, "b": x + 1e-3 * rng.normal(size=30), "c": x + 1e-3 * rng.normal(size=30)})
    with pytest.raises(CollinearityError):
        eliminate_collinear(frame, 1.5)


# -- OLS ------------------------------------------------------------------------


def test_ols_exact_line():
    x = np.arange(10.0)
    fit = ols_fit(x[:, None], 2 * x)
    assert fit.coef[0] == pytest.approx(2, abs=1e-10)
    assert fit.r2 == pytest.approx(1, abs=1e-10)
    assert np.abs(fit.residuals).max() < 1e-10


def test_ols_constant_target(rng):
    fit = ols_fit(rng.normal(size=(12, 2)), np.full(12, 3.0))
    assert np.allclose(fit.coef, 0, atol=1e-12) and fit.r2 == 0


def test_ols_planted_recovery():
    rng = np.random.default_rng(2024)
    X = rng.random((144, 8))
    theta = rng.uniform(-1, 1, 8)
    signal = X @ theta + 0.3
    y = signal + rng.normal(0, 0.05 * np.ptp(signal), 144)
    fit = ols_fit(X, y)
    assert np.all(np.abs(fit.coef - theta) <= 3 * fit.stderr[1:])


def test_ols_matches_reference_inference(rng):
    X = rng.random((40, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(0, 0.3, 40)
    fit = ols_fit(X, y)
    A = np.column_stack([np.ones(40), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ beta
    cov = resid @ resid / 36 * np.linalg.inv(A.T @ A)
    assert np.allclose(np.r_[fit.intercept, fit.coef], beta)
    assert np.allclose(fit.stderr, np.sqrt(np.diag(cov)))
    assert np.allclose(fit.pvalues, 2 * sps.t.sf(np.abs(beta / np.sqrt(np.diag(cov))), 36))
    assert fit.adj_r2 == pytest.approx(1 - (1 - fit.r2) * 39 / 36)


def test_ols_residuals_orthogonal(rng):
    X = rng.random((50, 4))
    fit = ols_fit(X, rng.normal(size=50))
    assert abs(fit.residuals.sum()) < 1e-8
    assert np.abs(X.T @ fit.residuals).max() < 1e-8


def test_ols_t_invariant_under_affine_target(rng):
    X = rng.random((30, 3))
    y = X @ [0.4, -1.0, 0.0] + rng.normal(0, 0.2, 30)
    a = ols_fit(X, y)
    b = ols_fit(X, 7.5 * y - 3.0)
    c = ols_fit(X, minmax_normalize(y))
    assert np.allclose(a.tvalues[1:], b.tvalues[1:]) and np.allclose(a.tvalues[1:], c.tvalues[1:])
    assert a.stars()[1:] == c.stars()[1:]


def test_ols_orthonormal_design_closed_form(rng):
    Q = orthonormal_centered(rng, 25, 3)
    y = rng.normal(size=25)
    fit = ols_fit(Q, y)
    assert np.allclose(fit.coef, Q.T @ (y - y.mean()))


def test_ols_rank_deficient_names_columns(rng):
    x = rng.normal(size=20)
    X = np.column_stack([x, rng.normal(size=20), 2 * x])
    with pytest.raises(CollinearityError, match="x_dup"):
        ols_fit(X, rng.normal(size=20), ["x", "z", "x_dup"])


def test_ols_preconditions(rng):
    with pytest.raises(ValueError):
        ols_fit(rng.normal(size=(3, 2)), rng.normal(size=3))
    X = rng.normal(size=(10, 2))
    X[0, 0] = np.nan
    with pytest.raises(ValueError):
        ols_fit(X, rng.normal(size=10))


def test_fit_table_and_conf_int():
    x = np.linspace(0, 1, 20)
    fit = ols_fit(x[:, None], 1 + 2 * x + 0.01 * np.sin(40 * x), ["x"])
    table = fit.table()
    assert list(table.columns) == ["ev", "theta", "stderr", "t", "p", "stars"]
    assert table["ev"].tolist() == ["(Intercept)", "x"]
    lo, hi = fit.conf_int()[1]
    assert lo < 2 < hi


# -- explain_all ----------------------------------------------------------------


def test_explain_all_planted_relation(rng):
    keys = [f"s{n}" for n in range(40)]
    evs = pd.DataFrame(rng.random((40, 4)), columns=["e1", "e2", "e3", "e4"], index=keys)
    evs["e5"] = evs["e1"] * 2 + 0.001 * rng.normal(size=40)  # collinear: one of the pair goes
    y = 0.5 * evs["e2"] - 0.3 * evs["e3"] + 0.005 * rng.normal(size=40)
    metrics = pd.DataFrame({"subsample": keys, "model": "Pop", "ndcg@5": y.to_numpy()})
    report, fits = explain_all(evs, metrics, ["Pop", "UB"], cutoffs=[5], metric_names=["ndcg", "epc"])
    assert len(report.retained) == 4
    assert len(fits) == 1 and fits[0].model == "Pop" and fits[0].target == "ndcg@5"
    assert fits[0].r2 >= 0.95
